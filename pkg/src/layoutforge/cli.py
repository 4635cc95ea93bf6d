"""Command-line front end: layout generation, simulation, training,
optimization, evaluation, and the HTTP service.

Every command resolves its options from (highest priority first) explicit
flags, a JSON config file given via --config, the LAYOUTFORGE_SEED
environment variable for seeds, and built-in defaults; the resolved snapshot
is written to a manifest next to the outputs so a run can be reproduced from
the manifest alone. Exit codes: 0 success, 2 usage or input error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .crowd import (
    DatasetSchemaError,
    OracleError,
    load_dataset,
    save_dataset,
    simulate_dataset,
    training_examples,
)
from .features import UnknownLabel, default_table
from .layout import (
    LayoutError,
    LayoutSchemaError,
    generate_random_layout,
    load_layout,
    perturb_layout,
    save_layout,
    validate_layout,
)
from .model import (
    ModelParams,
    ModelSchemaError,
    TrainConfig,
    predict_sequence,
    target_level_r2,
    train,
)
from .optimizer import (
    Constraint,
    OptimizerConfig,
    OptimizerError,
    PenaltyConfig,
    optimize,
    write_trace,
)
from .tasks import (
    TaskError,
    build_photo_editing_sequence,
    build_recipe_sequence,
    load_sequence,
    save_sequence,
)
from .templates import good_photo_layouts, photo_template, recipe_template

SEED_ENV = "LAYOUTFORGE_SEED"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class CliError(Exception):
    """Bad input or usage; maps to exit code 2."""


_INPUT_ERRORS = (CliError, FileNotFoundError, NotADirectoryError,
                 IsADirectoryError, json.JSONDecodeError, LayoutError,
                 LayoutSchemaError, TaskError, DatasetSchemaError,
                 ModelSchemaError, OracleError, OptimizerError, UnknownLabel,
                 KeyError)


# per-command built-in defaults; config file and flags override these
_DEFAULTS = {
    "gen-layouts": {"template": "photo", "good": 0, "random": 0,
                    "seed": None, "out": None},
    "simulate": {"layouts": None, "sequence": "photo", "n_photos": 20,
                 "rounds": 8, "users": 8, "seed": None, "out": None},
    "train": {"dataset": None, "layouts": None, "sequence": None,
              "epochs": 200, "learning_rate": 3e-4, "val_fraction": 1.0 / 6.0,
              "seed": None, "out": None},
    "optimize": {"layout": None, "sequence": None, "model": None,
                 "constraints": None, "steps": 500, "learning_rate": 0.05,
                 "grad_clip": 0.5, "seed": None, "out": None},
    "eval": {"model": None, "dataset": None, "layouts": None,
             "sequence": None, "out": None},
    "serve": {"host": "127.0.0.1", "port": 8000, "model": None},
}

_SEEDED = {"gen-layouts", "simulate", "train", "optimize"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layoutforge",
        description="Predict and improve task performance of UI layouts.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(cmd, *specs):
        p = sub.add_parser(cmd)
        p.add_argument("--config", default=None,
                       help="JSON file of option overrides")
        for name, kwargs in specs:
            p.add_argument(name, default=None, **kwargs)
        return p

    add("gen-layouts",
        ("--template", dict(choices=("photo", "recipe"))),
        ("--good", dict(type=int, help="perturbed copies of bundled layouts")),
        ("--random", dict(type=int)),
        ("--seed", dict(type=int)),
        ("--out", dict(help="output directory")))
    add("simulate",
        ("--layouts", dict(help="directory of layout JSON files")),
        ("--sequence", dict(choices=("photo", "recipe"))),
        ("--n-photos", dict(type=int, dest="n_photos")),
        ("--rounds", dict(type=int)),
        ("--users", dict(type=int)),
        ("--seed", dict(type=int)),
        ("--out", dict(help="dataset JSONL path")))
    add("train",
        ("--dataset", dict()),
        ("--layouts", dict()),
        ("--sequence", dict(help="sequence JSON saved by simulate")),
        ("--epochs", dict(type=int)),
        ("--learning-rate", dict(type=float, dest="learning_rate")),
        ("--val-fraction", dict(type=float, dest="val_fraction")),
        ("--seed", dict(type=int)),
        ("--out", dict(help="model JSON path")))
    add("optimize",
        ("--layout", dict()),
        ("--sequence", dict()),
        ("--model", dict()),
        ("--constraints", dict(help="JSON penalty/constraint spec")),
        ("--steps", dict(type=int)),
        ("--learning-rate", dict(type=float, dest="learning_rate")),
        ("--grad-clip", dict(type=float, dest="grad_clip")),
        ("--seed", dict(type=int)),
        ("--out", dict(help="trace directory")))
    add("eval",
        ("--model", dict()),
        ("--dataset", dict()),
        ("--layouts", dict()),
        ("--sequence", dict()),
        ("--out", dict(help="optional metrics JSON path")))
    add("serve",
        ("--host", dict()),
        ("--port", dict(type=int)),
        ("--model", dict()))
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    """Merge flags > config file > env seed > defaults into one snapshot."""
    command = args.command
    file_config = {}
    if args.config:
        with open(args.config) as fh:
            file_config = json.load(fh)
        if not isinstance(file_config, dict):
            raise CliError("--config must hold a JSON object")
        unknown = set(file_config) - set(_DEFAULTS[command])
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")

    resolved = {}
    for key, builtin in _DEFAULTS[command].items():
        flag = getattr(args, key.replace("-", "_"))
        if flag is not None:
            resolved[key] = flag
        elif key in file_config:
            resolved[key] = file_config[key]
        else:
            resolved[key] = builtin
    if command in _SEEDED and resolved["seed"] is None:
        env = os.environ.get(SEED_ENV)
        resolved["seed"] = int(env) if env else 0
    return resolved


def _require(cfg: dict, *keys) -> None:
    for key in keys:
        if cfg[key] is None:
            raise CliError(f"--{key.replace('_', '-')} is required")


def _write_manifest(location, command, cfg, inputs, outputs) -> str:
    """One manifest next to the outputs; no timestamps, stable bytes."""
    data = {
        "command": command,
        "config": cfg,
        "seeds": {"seed": cfg["seed"]} if "seed" in cfg else {},
        "inputs": sorted(inputs),
        "outputs": sorted(outputs),
        "tool_version": __version__,
    }
    if os.path.isdir(location):
        path = os.path.join(location, "manifest.json")
    else:
        path = f"{location}.manifest.json"
    with open(path, "w") as fh:
        fh.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def _load_layout_dir(directory) -> dict:
    if not os.path.isdir(directory):
        raise CliError(f"not a layout directory: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.endswith(".json")
                   and not n.endswith("manifest.json"))
    if not names:
        raise CliError(f"no layout files in {directory}")
    return {os.path.splitext(n)[0]: load_layout(os.path.join(directory, n))
            for n in names}


def _build_sequence(cfg) -> "TaskSequence":
    if cfg["sequence"] == "photo":
        return build_photo_editing_sequence(n_photos=cfg["n_photos"],
                                            seed=cfg["seed"])
    return build_recipe_sequence(seed=cfg["seed"], n_rounds=cfg["rounds"])


def _dataset_metrics(params, dataset, layouts, sequence, table=None) -> dict:
    """Pooled target-level fit plus per-layout totals."""
    table = table or default_table()
    preds, obs, keys = [], [], []
    per_layout = {}
    for lid in dataset.layout_ids():
        if lid not in layouts:
            raise CliError(f"dataset references unknown layout {lid!r}")
        result = predict_sequence(layouts[lid], sequence, params, table=table)
        metrics = dataset.metrics_for(lid)
        if len(metrics) != len(sequence.tasks):
            raise CliError(f"{lid}: dataset has {len(metrics)} tasks, "
                           f"sequence has {len(sequence.tasks)}")
        preds.extend(float(v) for v in result.task_ms)
        obs.extend(float(v) for v in metrics)
        keys.extend((t.target_id, t.trial_index) for t in sequence.tasks)
        per_layout[lid] = {
            "predicted_total_ms": round(result.total_ms, 6),
            "observed_total_ms": round(float(metrics.sum()), 6),
        }
    return {
        "target_level_r2": round(target_level_r2(preds, obs, keys), 6),
        "n_layouts": len(per_layout),
        "n_tasks": len(sequence.tasks),
        "per_layout": per_layout,
    }


# ---------------------------------------------------------------------------
# command handlers


def _cmd_gen_layouts(cfg) -> int:
    _require(cfg, "out")
    if cfg["good"] < 0 or cfg["random"] < 0:
        raise CliError("counts must be >= 0")
    template = photo_template() if cfg["template"] == "photo" \
        else recipe_template()
    if cfg["good"] > 0 and cfg["template"] != "photo":
        raise CliError("bundled good layouts exist only for the photo "
                       "template; use --random for recipe")
    os.makedirs(cfg["out"], exist_ok=True)
    rng = np.random.default_rng(cfg["seed"])
    outputs = []
    if cfg["good"] > 0:
        bases = good_photo_layouts()
        for i in range(cfg["good"]):
            layout = perturb_layout(bases[i % len(bases)],
                                    seed=int(rng.integers(2 ** 31)))
            path = os.path.join(cfg["out"], f"good-{i:03d}.json")
            save_layout(layout, path)
            outputs.append(path)
    for i in range(cfg["random"]):
        layout = generate_random_layout(template,
                                        seed=int(rng.integers(2 ** 31)))
        path = os.path.join(cfg["out"], f"random-{i:03d}.json")
        save_layout(layout, path)
        outputs.append(path)
    _write_manifest(cfg["out"], "gen-layouts", cfg, [], outputs)
    print(f"wrote {len(outputs)} layouts to {cfg['out']}")
    return EXIT_OK


def _cmd_simulate(cfg) -> int:
    _require(cfg, "layouts", "out")
    if cfg["users"] < 3:
        raise CliError("need at least 3 users per task")
    layouts = _load_layout_dir(cfg["layouts"])
    sequence = _build_sequence(cfg)
    ids = sorted(layouts)
    dataset = simulate_dataset([layouts[i] for i in ids], sequence,
                               n_users=cfg["users"], seed=cfg["seed"],
                               layout_ids=ids)
    save_dataset(dataset, cfg["out"])
    seq_path = os.path.splitext(cfg["out"])[0] + ".sequence.json"
    save_sequence(sequence, seq_path)
    _write_manifest(cfg["out"], "simulate", cfg, [cfg["layouts"]],
                    [cfg["out"], seq_path])
    print(f"simulated {len(ids)} layouts x {cfg['users']} users "
          f"({len(sequence.tasks)} tasks) -> {cfg['out']}")
    return EXIT_OK


def _cmd_train(cfg) -> int:
    _require(cfg, "dataset", "layouts", "sequence", "out")
    dataset = load_dataset(cfg["dataset"])
    layouts = _load_layout_dir(cfg["layouts"])
    sequence = load_sequence(cfg["sequence"])
    table = default_table()

    report = {"epochs": cfg["epochs"], "seed": cfg["seed"]}
    if cfg["epochs"] == 0:
        print("warning: epochs=0, saving a randomly initialized model",
              file=sys.stderr)
        params = ModelParams.init(seed=cfg["seed"])
        report.update({"final_train_loss": None, "final_val_loss": None,
                       "best_epoch": -1})
    else:
        examples = training_examples(dataset, layouts, sequence, table)
        result = train(examples, TrainConfig(
            epochs=cfg["epochs"], learning_rate=cfg["learning_rate"],
            val_fraction=cfg["val_fraction"], seed=cfg["seed"]))
        params = result.params
        report.update({
            "final_train_loss": round(result.train_history[-1], 6),
            "final_val_loss": round(result.val_history[-1], 6),
            "best_epoch": result.best_epoch,
        })
    params.save(cfg["out"])
    report["fit"] = _dataset_metrics(params, dataset, layouts, sequence, table)
    metrics_path = os.path.splitext(cfg["out"])[0] + ".metrics.json"
    with open(metrics_path, "w") as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_manifest(cfg["out"], "train", cfg,
                    [cfg["dataset"], cfg["layouts"], cfg["sequence"]],
                    [cfg["out"], metrics_path])
    print(f"model -> {cfg['out']}  "
          f"target_level_r2={report['fit']['target_level_r2']}")
    return EXIT_OK


def _parse_constraints(path) -> PenaltyConfig:
    with open(path) as fh:
        blob = json.load(fh)
    if not isinstance(blob, dict):
        raise CliError("constraints file must hold a JSON object")
    allowed = {"overlap_constant", "boundary_constant", "constraints"}
    unknown = set(blob) - allowed
    if unknown:
        raise CliError(f"unknown constraint keys: {sorted(unknown)}")
    constraints = [Constraint(**{**{"ids": ()}, **c})
                   for c in blob.get("constraints", [])]
    return PenaltyConfig(
        overlap_constant=blob.get("overlap_constant", 10000.0),
        boundary_constant=blob.get("boundary_constant", 10000.0),
        constraints=constraints)


def _cmd_optimize(cfg) -> int:
    _require(cfg, "layout", "sequence", "model", "out")
    layout = load_layout(cfg["layout"])
    if not validate_layout(layout).is_empty():
        raise CliError("initial layout is infeasible; fix overlaps and "
                       "bounds before optimizing")
    sequence = load_sequence(cfg["sequence"])
    params = ModelParams.load(cfg["model"])
    penalties = _parse_constraints(cfg["constraints"]) \
        if cfg["constraints"] else PenaltyConfig()
    trace = optimize(layout, sequence, params,
                     OptimizerConfig(steps=cfg["steps"],
                                     learning_rate=cfg["learning_rate"],
                                     grad_clip=cfg["grad_clip"],
                                     seed=cfg["seed"]),
                     penalties)
    os.makedirs(cfg["out"], exist_ok=True)
    write_trace(trace, cfg["out"])
    inputs = [cfg["layout"], cfg["sequence"], cfg["model"]]
    if cfg["constraints"]:
        inputs.append(cfg["constraints"])
    outputs = sorted(os.path.join(cfg["out"], n)
                     for n in os.listdir(cfg["out"]) if n != "manifest.json")
    _write_manifest(cfg["out"], "optimize", cfg, inputs, outputs)
    last = trace.steps[-1]
    print(f"trace -> {cfg['out']}  best_step={trace.best_step}  "
          f"final_objective={last.objective:.3f}"
          + (f"  aborted={trace.aborted}" if trace.aborted else ""))
    return EXIT_OK


def _cmd_eval(cfg) -> int:
    _require(cfg, "model", "dataset", "layouts", "sequence")
    params = ModelParams.load(cfg["model"])
    dataset = load_dataset(cfg["dataset"])
    layouts = _load_layout_dir(cfg["layouts"])
    sequence = load_sequence(cfg["sequence"])
    report = _dataset_metrics(params, dataset, layouts, sequence)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(text + "\n")
        _write_manifest(cfg["out"], "eval", cfg,
                        [cfg["model"], cfg["dataset"], cfg["layouts"],
                         cfg["sequence"]], [cfg["out"]])
    return EXIT_OK


def _cmd_serve(cfg) -> int:
    _require(cfg, "model")
    import uvicorn

    from .service import create_app
    app = create_app(model_path=cfg["model"])
    uvicorn.run(app, host=cfg["host"], port=cfg["port"])
    return EXIT_OK


_HANDLERS = {
    "gen-layouts": _cmd_gen_layouts,
    "simulate": _cmd_simulate,
    "train": _cmd_train,
    "optimize": _cmd_optimize,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _resolve(args)
        return _HANDLERS[args.command](cfg)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

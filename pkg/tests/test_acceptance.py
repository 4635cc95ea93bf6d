"""End-to-end acceptance checks.

Each test covers one headline property of the system and reports a single
pass/fail line through the acceptance_log fixture: gradient correctness of
the full model, fidelity of the scoring formulas, closed-loop training
against the simulator, closed-loop layout optimization, transfer to an
unseen layout family, sanity ordering of layout quality, and byte-level
determinism of the command line.
"""

import json
import os
import time

import numpy as np
import pytest

from layoutforge import autodiff as ad
from layoutforge.autodiff import Node, grad_check
from layoutforge.cli import main as cli_main
from layoutforge.crowd import (
    mad_filter,
    simulate_dataset,
    task_metric,
    training_examples,
)
from layoutforge.features import default_table, sequence_features
from layoutforge.layout import (
    Layout,
    Rect,
    ScreenSpec,
    UiElement,
    generate_random_layout,
    perturb_layout,
    save_layout,
    validate_layout,
)
from layoutforge.model import (
    ModelParams,
    TrainConfig,
    forward_sequence,
    predict_sequence,
    target_level_r2,
    train,
    variance_ratio_loss,
)
from layoutforge.optimizer import (
    Constraint,
    OptimizerConfig,
    PenaltyConfig,
    objective,
    optimize,
    penalty_boundary,
    penalty_constraints,
    penalty_overlap,
)
from layoutforge.tasks import (
    Task,
    TaskSequence,
    build_photo_editing_sequence,
    build_recipe_sequence,
    expand_steps,
)
from layoutforge.templates import (
    bad_photo_layouts,
    good_photo_layouts,
    photo_template,
    recipe_template,
)


def _check(log, tag, ok, detail):
    line = f"[{tag}] {'PASS' if ok else 'FAIL'} - {detail}"
    log.append(line)
    assert ok, line


def icon(el_id, cx, cy, w, h):
    return UiElement(id=el_id, kind="icon", label="undo",
                     rect=Rect(cx=cx, cy=cy, w=w, h=h))


def tap_sequence(ids):
    tasks = [Task(task_type=3, steps=expand_steps(3, i), trial_index=1)
             for i in ids]
    return TaskSequence(tasks=tasks)


def min_size_constraints(layout):
    """Hold every movable entity at or above its starting extents.

    The predictor is trained on layouts whose element sizes vary little, so
    descent left free in size drifts into tiny-element regions the training
    data never covered. Pinning minimum sizes keeps the search inside the
    model's competence without touching positions.
    """
    cons = [Constraint("min-size", (ent.id,),
                       min_w=ent.rect.w, min_h=ent.rect.h)
            for ent in layout.top_level_entities() + layout.hosted_drop_targets()]
    return PenaltyConfig(constraints=cons)


def oracle_sequence_metric(layouts, sequence, ids, seed, n_users=8):
    """Summed per-task metric per layout id, on fresh simulator draws."""
    ds = simulate_dataset(layouts, sequence, n_users=n_users, seed=seed,
                          layout_ids=ids)
    return {i: float(ds.metrics_for(i).sum()) for i in ids}


# ---------------------------------------------------------------------------
# gradient correctness on the full model


def test_full_model_gradients_match_finite_differences(acceptance_log):
    layout = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.2, 0.2, 0.1, 0.08),
        icon("b", 0.7, 0.35, 0.12, 0.1),
        icon("c", 0.4, 0.7, 0.15, 0.09),
        icon("d", 0.8, 0.8, 0.1, 0.1),
    ])
    seq = tap_sequence(["a", "b", "c"])
    rows, tails = sequence_features(layout, seq, default_table())
    params = ModelParams.init(seed=12)
    names = sorted(params.arrays)
    n_par = len(names)

    # Anchor observations near the raw predictions so the loss stays small;
    # a large loss value drowns tiny-magnitude gradients in the round-off
    # noise of the central differences.
    base = forward_sequence(None, [rows[:, i, :] for i in range(rows.shape[1])],
                            tails[None, :, :], params.arrays)
    preds = np.array([float(np.asarray(y)[0]) for y in base])
    obs = (preds + np.array([0.08, -0.06, 0.1]))[None, :]
    den = float(((obs - obs.mean()) ** 2).sum())
    slices = [(0, 1), (1, 2), (2, 3)]

    def loss_fn(xs, tape):
        arrays = dict(zip(names, xs[:n_par]))
        outs = forward_sequence(tape, xs[n_par:], tails[None, :, :], arrays)
        num = None
        for t, (a, b) in enumerate(slices):
            pred = outs[a]
            for s in range(a + 1, b):
                pred = ad.add(tape, pred, outs[s])
            err = ad.vsum(tape, ad.square(tape, ad.sub(tape, pred, obs[:, t])))
            num = err if num is None else ad.add(tape, num, err)
        return ad.scale(tape, num, 1.0 / den)

    leaves = [Node(params.arrays[k].copy()) for k in names]
    leaves += [Node(rows[:, i, :].copy()) for i in range(rows.shape[1])]
    n_entries = sum(leaf.value.size for leaf in leaves)

    start = time.time()
    worst = grad_check(loss_fn, leaves, eps=1e-5)
    elapsed = time.time() - start

    _check(acceptance_log, "gradients",
           worst <= 1e-4 and elapsed < 60.0,
           f"worst relative error {worst:.2e} over {n_entries} weight and "
           f"input entries in {elapsed:.0f}s (limits 1e-4, 60s)")


# ---------------------------------------------------------------------------
# formula fidelity


def test_scoring_formulas_reproduce_worked_examples(acceptance_log):
    exact = []

    exact.append(abs(task_metric(1000.0, 0.2, 0.0) - 1100.0) <= 1e-12)
    exact.append(abs(task_metric(1000.0, 0.0, 0.25) - 1200.0) <= 1e-12)
    exact.append(abs(task_metric(1000.0, 0.0, 0.0) - 1000.0) <= 1e-12)

    kept = mad_filter([1.0, 2.0, 3.0, 4.0, 100.0])
    exact.append(list(kept) == [2.0, 3.0, 4.0])

    obs = np.array([1.0, 2.0, 3.0])
    exact.append(abs(variance_ratio_loss(np.full(3, obs.mean()), obs) - 1.0)
                 <= 1e-12)
    exact.append(abs(variance_ratio_loss([1.0, 2.0, 4.0], obs) - 0.5) <= 1e-12)

    # group means equal to the global mean give zero explained variance
    r2 = target_level_r2([3.0, 3.0], [2.0, 4.0], [("a", 0), ("b", 0)])
    exact.append(abs(r2 - 0.0) <= 1e-12)
    # repeated keys average within group before scoring
    r2 = target_level_r2([2.5, 2.5, 3.5, 3.5], [1.0, 3.0, 3.0, 5.0],
                         [("a", 0), ("a", 0), ("b", 0), ("b", 0)])
    exact.append(abs(r2 - 0.75) <= 1e-12)

    overlapping = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.5, 0.5, 0.3, 0.2),
        icon("b", 0.6, 0.5, 0.3, 0.2),
    ])
    exact.append(abs(penalty_overlap(overlapping) - 0.04) <= 1e-12)
    exact.append(penalty_boundary(overlapping) == 0.0)

    params = ModelParams.init(seed=0)
    seq = tap_sequence(["a", "b"])
    full = objective(overlapping, seq, params, PenaltyConfig())
    bare = objective(overlapping, seq, params,
                     PenaltyConfig(overlap_constant=0.0, boundary_constant=0.0))
    exact.append(abs((full - bare) - 400.0) <= 1e-12)

    poking_out = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.95, 0.5, 0.2, 0.1),
    ])
    exact.append(abs(penalty_boundary(poking_out) - 0.05) <= 1e-12)

    small = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.5, 0.5, 0.05, 0.3),
    ])
    cfg = PenaltyConfig(constraints=[
        Constraint("min-size", ("a",), min_w=0.08, min_h=0.1)])
    exact.append(abs(penalty_constraints(small, cfg) - 0.03) <= 1e-12)

    rng = np.random.default_rng(42)
    xs = rng.normal(scale=2.0, size=1000)
    relu_vals = ad.value_of(ad.relu(None, xs))
    relu_ok = all(relu_vals[i] == (xs[i] if xs[i] > 0.0 else 0.0)
                  for i in range(1000))

    overlap_ok = True
    for _ in range(1000):
        ra = Rect(cx=rng.uniform(0.2, 0.8), cy=rng.uniform(0.2, 0.8),
                  w=rng.uniform(0.05, 0.5), h=rng.uniform(0.05, 0.5))
        rb = Rect(cx=rng.uniform(0.2, 0.8), cy=rng.uniform(0.2, 0.8),
                  w=rng.uniform(0.05, 0.5), h=rng.uniform(0.05, 0.5))
        pair = Layout(screen=ScreenSpec(), elements=[
            UiElement(id="a", kind="icon", label="undo", rect=ra),
            UiElement(id="b", kind="icon", label="undo", rect=rb),
        ])
        ox = min(ra.right, rb.right) - max(ra.left, rb.left)
        oy = min(ra.bottom, rb.bottom) - max(ra.top, rb.top)
        brute = ox * oy if (ox > 0.0 and oy > 0.0) else 0.0
        if abs(penalty_overlap(pair) - brute) > 1e-12:
            overlap_ok = False
            break

    boundary_ok = True
    for _ in range(1000):
        r = Rect(cx=rng.uniform(-0.3, 1.3), cy=rng.uniform(-0.3, 1.3),
                 w=rng.uniform(0.05, 0.6), h=rng.uniform(0.05, 0.6))
        lone = Layout(screen=ScreenSpec(), elements=[
            UiElement(id="a", kind="icon", label="undo", rect=r)])
        brute = 0.0
        if r.left < 0.0:
            brute += -r.left
        if r.right > 1.0:
            brute += r.right - 1.0
        if r.top < 0.0:
            brute += -r.top
        if r.bottom > 1.0:
            brute += r.bottom - 1.0
        if abs(penalty_boundary(lone) - brute) > 1e-12:
            boundary_ok = False
            break

    _check(acceptance_log, "formulas",
           all(exact) and relu_ok and overlap_ok and boundary_ok,
           f"{len(exact)} worked examples exact to 1e-12; rectified-linear, "
           f"overlap and boundary forms agree with brute-force case "
           f"analysis on 1000 random inputs each")


# ---------------------------------------------------------------------------
# closed loop: simulate, train, optimize


@pytest.fixture(scope="session")
def closed_loop():
    """Simulate a labeled corpus and train the predictor once per session.

    24 random layouts train the model; 6 perturbed variants of the bundled
    hand-built layouts are held out for generalization scoring.
    """
    start = time.time()
    seq = build_photo_editing_sequence(n_photos=3, seed=7)
    layouts, ids = [], []
    for i in range(24):
        layouts.append(generate_random_layout(photo_template(), seed=1000 + i))
        ids.append(f"rand-{i:02d}")
    goods = good_photo_layouts()
    for i in range(6):
        layouts.append(perturb_layout(goods[i % len(goods)], seed=2000 + i))
        ids.append(f"goodp-{i}")
    ds = simulate_dataset(layouts, seq, n_users=4, seed=5, layout_ids=ids)
    lmap = dict(zip(ids, layouts))
    examples = training_examples(ds, lmap, seq)
    train_set = [e for e in examples if e.name.startswith("rand")]
    config = TrainConfig(epochs=150, learning_rate=1e-3, seed=3)
    result = train(train_set, config)

    def r2_over(id_list):
        preds, obs, keys = [], [], []
        for lid in id_list:
            pr = predict_sequence(lmap[lid], seq, result.params)
            preds += [float(v) for v in pr.task_ms]
            obs += [float(v) for v in ds.metrics_for(lid)]
            keys += [(t.target_id, t.trial_index) for t in seq.tasks]
        return target_level_r2(preds, obs, keys)

    return {
        "params": result.params,
        "sequence": seq,
        "epochs": config.epochs,
        "best_epoch": result.best_epoch,
        "train_r2": r2_over(ids[:24]),
        "heldout_r2": r2_over(ids[24:]),
        "elapsed": time.time() - start,
    }


def test_training_recovers_heldout_behavior(closed_loop, acceptance_log):
    r2 = closed_loop["heldout_r2"]
    elapsed = closed_loop["elapsed"]
    ok = (r2 >= 0.7 and closed_loop["epochs"] <= 300 and elapsed <= 1800.0)
    _check(acceptance_log, "training",
           ok,
           f"held-out target-level R2 {r2:.3f} on 6 unseen layouts "
           f"(threshold 0.7), 24 training layouts, {closed_loop['epochs']} "
           f"epochs, best at {closed_loop['best_epoch']}, {elapsed:.0f}s "
           f"(limit 1800s)")


def test_optimization_beats_initial_layouts(closed_loop, acceptance_log):
    params = closed_loop["params"]
    seq = closed_loop["sequence"]
    gains, worst_time = [], 0.0
    clean = True
    for i, layout_seed in enumerate((9000, 9001, 9002)):
        layout = generate_random_layout(photo_template(), seed=layout_seed)
        start = time.time()
        trace = optimize(layout, seq, params, OptimizerConfig(steps=200),
                         min_size_constraints(layout))
        worst_time = max(worst_time, time.time() - start)
        best = trace.best_layout()
        clean &= (penalty_overlap(best) == 0.0
                  and penalty_boundary(best) == 0.0
                  and validate_layout(best).is_empty())
        totals = oracle_sequence_metric([layout, best], seq,
                                        ["initial", "best"], seed=777 + i)
        gains.append((totals["initial"] - totals["best"])
                     / totals["initial"] * 100.0)
    shown = " ".join(f"{g:+.1f}%" for g in gains)
    _check(acceptance_log, "optimization",
           all(g >= 2.0 for g in gains) and clean and worst_time <= 600.0,
           f"simulator-scored gains {shown} on 3 random layouts (each >= "
           f"2%), zero hard penalties, slowest run {worst_time:.0f}s "
           f"(limit 600s)")


def test_transfer_to_unseen_layout_family(closed_loop, acceptance_log):
    params = closed_loop["params"]
    full = build_recipe_sequence(seed=11)
    seq = TaskSequence(tasks=full.tasks[:40],
                       frac_left_handed=full.frac_left_handed,
                       avg_age_years=full.avg_age_years)
    layout = generate_random_layout(recipe_template(), seed=9106)
    trace = optimize(layout, seq, params, OptimizerConfig(steps=200),
                     min_size_constraints(layout))
    best = trace.best_layout()
    clean = (penalty_overlap(best) == 0.0 and penalty_boundary(best) == 0.0)
    totals = oracle_sequence_metric([layout, best], seq,
                                    ["initial", "best"], seed=4242)
    gain = (totals["initial"] - totals["best"]) / totals["initial"] * 100.0
    _check(acceptance_log, "generalization",
           gain >= 1.0 and clean,
           f"model trained on photo-editing layouts improved a recipe "
           f"layout by {gain:+.1f}% under the simulator (threshold 1%, "
           f"40-task sequence)")


# ---------------------------------------------------------------------------
# sanity ordering of layout quality


def test_simulator_orders_layout_quality(acceptance_log):
    seq = build_photo_editing_sequence(n_photos=3, seed=7)
    goods = good_photo_layouts()[:5]
    rnds = [generate_random_layout(photo_template(), seed=3000 + i)
            for i in range(5)]
    bads = bad_photo_layouts()[:3]
    ids = ([f"good-{i}" for i in range(5)]
           + [f"rand-{i}" for i in range(5)]
           + [f"bad-{i}" for i in range(3)])
    ds = simulate_dataset(goods + rnds + bads, seq, n_users=6, seed=11,
                          layout_ids=ids)
    means = {p: float(np.mean([ds.metrics_for(i).mean()
                               for i in ids if i.startswith(p)]))
             for p in ("good", "rand", "bad")}
    _check(acceptance_log, "ordering",
           means["good"] < means["rand"] < means["bad"],
           f"mean task metric {means['good']:.0f} (hand-built) < "
           f"{means['rand']:.0f} (random) < {means['bad']:.0f} (degraded)")


# ---------------------------------------------------------------------------
# command-line determinism


def _tree_bytes(*paths):
    out = {}
    for root in paths:
        root = str(root)
        if os.path.isfile(root):
            with open(root, "rb") as fh:
                out[root] = fh.read()
            continue
        for base, _, names in os.walk(root):
            for name in names:
                path = os.path.join(base, name)
                with open(path, "rb") as fh:
                    out[path] = fh.read()
    return out


def test_cli_reruns_are_byte_identical(acceptance_log, tmp_path):
    layouts = tmp_path / "layouts"
    dataset = tmp_path / "dataset.jsonl"
    seqfile = tmp_path / "dataset.sequence.json"
    model = tmp_path / "model.json"
    trace = tmp_path / "trace"
    report = tmp_path / "report.json"
    start = tmp_path / "start.json"
    save_layout(good_photo_layouts()[0], start)

    commands = {
        "gen-layouts": (["gen-layouts", "--template", "photo", "--good", "2",
                         "--random", "2", "--seed", "9",
                         "--out", str(layouts)],
                        [layouts]),
        "simulate": (["simulate", "--layouts", str(layouts), "--sequence",
                      "photo", "--n-photos", "1", "--users", "3", "--seed",
                      "3", "--out", str(dataset)],
                     [dataset, seqfile,
                      tmp_path / "dataset.jsonl.manifest.json"]),
        "train": (["train", "--dataset", str(dataset), "--layouts",
                   str(layouts), "--sequence", str(seqfile), "--epochs", "2",
                   "--seed", "4", "--out", str(model)],
                  [model, tmp_path / "model.metrics.json",
                   tmp_path / "model.json.manifest.json"]),
        "optimize": (["optimize", "--layout", str(start),
                      "--sequence", str(seqfile), "--model", str(model),
                      "--steps", "3", "--seed", "0", "--out", str(trace)],
                     [trace]),
        "eval": (["eval", "--model", str(model), "--dataset", str(dataset),
                  "--layouts", str(layouts), "--sequence", str(seqfile),
                  "--out", str(report)],
                 [report, tmp_path / "report.json.manifest.json"]),
    }

    stable = []
    for name, (argv, outputs) in commands.items():
        assert cli_main(list(argv)) == 0
        first = _tree_bytes(*outputs)
        assert first, f"{name} produced no output files"
        assert cli_main(list(argv)) == 0
        second = _tree_bytes(*outputs)
        stable.append(first == second)

    names = ", ".join(commands)
    _check(acceptance_log, "determinism",
           all(stable),
           f"two consecutive runs byte-identical for {names} "
           f"(layouts, datasets, models, traces, style sheets, manifests)")

"""End-to-end command-line tests over small workloads."""

import json
import os

import pytest

from layoutforge.cli import main
from layoutforge.layout import load_layout, validate_layout
from layoutforge.model import ModelParams


def run(*argv):
    return main(list(argv))


def read_bytes_tree(root):
    out = {}
    for base, _, names in os.walk(root):
        for name in names:
            path = os.path.join(base, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


@pytest.fixture()
def layouts_dir(tmp_path):
    out = tmp_path / "layouts"
    rc = run("gen-layouts", "--template", "photo", "--good", "2",
             "--random", "2", "--seed", "5", "--out", str(out))
    assert rc == 0
    return out


def _simulate(layouts_dir, tmp_path, users="4", n_photos="1", seed="3"):
    data = tmp_path / "dataset.jsonl"
    rc = run("simulate", "--layouts", str(layouts_dir), "--sequence", "photo",
             "--n-photos", n_photos, "--users", users, "--seed", seed,
             "--out", str(data))
    return rc, data, tmp_path / "dataset.sequence.json"


# ---------------------------------------------------------------------------
# gen-layouts


def test_gen_layouts_writes_counts_and_manifest(tmp_path):
    out = tmp_path / "batch"
    rc = run("gen-layouts", "--template", "photo", "--good", "3",
             "--random", "4", "--seed", "7", "--out", str(out))
    assert rc == 0
    names = sorted(os.listdir(out))
    assert names.count("manifest.json") == 1
    layouts = [n for n in names if n != "manifest.json"]
    assert len(layouts) == 7
    assert sum(n.startswith("good-") for n in layouts) == 3
    assert sum(n.startswith("random-") for n in layouts) == 4
    for n in layouts:
        load_layout(out / n)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "gen-layouts"
    assert manifest["seeds"] == {"seed": 7}
    assert manifest["config"]["good"] == 3
    assert len(manifest["outputs"]) == 7
    assert "tool_version" in manifest


def test_gen_layouts_zero_counts_manifest_only(tmp_path):
    out = tmp_path / "empty"
    rc = run("gen-layouts", "--template", "photo", "--seed", "1",
             "--out", str(out))
    assert rc == 0
    assert os.listdir(out) == ["manifest.json"]


def test_gen_layouts_same_seed_identical_files(tmp_path):
    out = tmp_path / "rep"
    args = ("gen-layouts", "--template", "photo", "--good", "2", "--random",
            "2", "--seed", "9", "--out", str(out))
    assert run(*args) == 0
    first = read_bytes_tree(out)
    assert run(*args) == 0
    assert read_bytes_tree(out) == first


def test_gen_layouts_random_layouts_are_feasible(tmp_path):
    out = tmp_path / "r"
    assert run("gen-layouts", "--template", "recipe", "--random", "3",
               "--seed", "2", "--out", str(out)) == 0
    for name in sorted(os.listdir(out)):
        if name.startswith("random-"):
            assert validate_layout(load_layout(out / name)).is_empty()


def test_gen_layouts_rejects_bad_template(tmp_path):
    rc = run("gen-layouts", "--template", "spreadsheet", "--out",
             str(tmp_path / "x"))
    assert rc == 2


def test_gen_layouts_rejects_good_for_recipe(tmp_path):
    rc = run("gen-layouts", "--template", "recipe", "--good", "1",
             "--out", str(tmp_path / "x"))
    assert rc == 2


# ---------------------------------------------------------------------------
# simulate


def test_simulate_writes_dataset_and_sequence(layouts_dir, tmp_path):
    rc, data, seq = _simulate(layouts_dir, tmp_path)
    assert rc == 0
    assert data.exists() and seq.exists()
    assert (tmp_path / "dataset.jsonl.manifest.json").exists()
    lines = [l for l in data.read_text().splitlines() if l]
    # 4 layouts x 14 tasks for one photo
    assert len(lines) == 4 * 14
    ids = {json.loads(l)["layout_id"] for l in lines}
    assert ids == {"good-000", "good-001", "random-000", "random-001"}


def test_simulate_minimum_users_boundary(layouts_dir, tmp_path):
    rc, _, _ = _simulate(layouts_dir, tmp_path, users="3")
    assert rc == 0
    rc2 = run("simulate", "--layouts", str(layouts_dir), "--users", "2",
              "--out", str(tmp_path / "d2.jsonl"))
    assert rc2 == 2


def test_simulate_deterministic(layouts_dir, tmp_path):
    rc, data, seq = _simulate(layouts_dir, tmp_path)
    assert rc == 0
    first = data.read_bytes() + seq.read_bytes()
    rc, data, seq = _simulate(layouts_dir, tmp_path)
    assert rc == 0
    assert data.read_bytes() + seq.read_bytes() == first


def test_simulate_missing_dir_exits_2(tmp_path):
    rc = run("simulate", "--layouts", str(tmp_path / "nope"),
             "--out", str(tmp_path / "d.jsonl"))
    assert rc == 2


# ---------------------------------------------------------------------------
# train / eval


@pytest.fixture()
def trained(layouts_dir, tmp_path):
    rc, data, seq = _simulate(layouts_dir, tmp_path)
    assert rc == 0
    model = tmp_path / "model.json"
    rc = run("train", "--dataset", str(data), "--layouts", str(layouts_dir),
             "--sequence", str(seq), "--epochs", "3", "--seed", "1",
             "--out", str(model))
    assert rc == 0
    return data, seq, model


def test_train_outputs(trained, tmp_path):
    data, seq, model = trained
    ModelParams.load(model)
    report = json.loads((tmp_path / "model.metrics.json").read_text())
    assert "target_level_r2" in report["fit"]
    assert report["best_epoch"] >= 0
    assert isinstance(report["final_train_loss"], float)
    manifest = json.loads((tmp_path / "model.json.manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["config"]["epochs"] == 3


def test_train_zero_epochs_saves_random_model(layouts_dir, tmp_path, capsys):
    rc, data, seq = _simulate(layouts_dir, tmp_path)
    assert rc == 0
    model = tmp_path / "raw.json"
    rc = run("train", "--dataset", str(data), "--layouts", str(layouts_dir),
             "--sequence", str(seq), "--epochs", "0", "--out", str(model))
    assert rc == 0
    assert "warning" in capsys.readouterr().err
    loaded = ModelParams.load(model)
    fresh = ModelParams.init(seed=0)
    for name in fresh.names():
        assert (loaded.arrays[name] == fresh.arrays[name]).all()


def test_train_deterministic(layouts_dir, tmp_path):
    rc, data, seq = _simulate(layouts_dir, tmp_path)
    assert rc == 0
    blobs = []
    for sub in ("m1", "m2"):
        model = tmp_path / f"{sub}.json"
        rc = run("train", "--dataset", str(data), "--layouts",
                 str(layouts_dir), "--sequence", str(seq), "--epochs", "2",
                 "--seed", "4", "--out", str(model))
        assert rc == 0
        blobs.append(model.read_bytes())
    assert blobs[0] == blobs[1]


def test_eval_prints_metrics(trained, layouts_dir, tmp_path, capsys):
    data, seq, model = trained
    rc = run("eval", "--model", str(model), "--dataset", str(data),
             "--layouts", str(layouts_dir), "--sequence", str(seq))
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_layouts"] == 4
    assert set(report["per_layout"]) == {"good-000", "good-001",
                                         "random-000", "random-001"}


# ---------------------------------------------------------------------------
# optimize


def test_optimize_writes_trace(trained, layouts_dir, tmp_path):
    data, seq, model = trained
    layout_path = layouts_dir / "random-000.json"
    if not validate_layout(load_layout(layout_path)).is_empty():
        pytest.skip("seeded layout happens to be infeasible")
    out = tmp_path / "trace"
    rc = run("optimize", "--layout", str(layout_path), "--sequence", str(seq),
             "--model", str(model), "--steps", "3", "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["steps"]) == 4
    assert "best_step" in summary
    assert (out / "step_0.css").exists()
    assert (out / "manifest.json").exists()


def test_optimize_infeasible_layout_exits_2(trained, tmp_path):
    data, seq, model = trained
    from layoutforge.layout import Layout, Rect, ScreenSpec, UiElement, save_layout
    bad = Layout(screen=ScreenSpec(), elements=[
        UiElement(id="a", kind="icon", label="undo",
                  rect=Rect(0.5, 0.5, 0.4, 0.4)),
        UiElement(id="b", kind="icon", label="undo",
                  rect=Rect(0.55, 0.55, 0.4, 0.4)),
    ])
    path = tmp_path / "bad.json"
    save_layout(bad, path)
    rc = run("optimize", "--layout", str(path), "--sequence", str(seq),
             "--model", str(model), "--steps", "2",
             "--out", str(tmp_path / "t"))
    assert rc == 2


def test_optimize_constraints_file(trained, layouts_dir, tmp_path):
    data, seq, model = trained
    layout_path = layouts_dir / "random-001.json"
    if not validate_layout(load_layout(layout_path)).is_empty():
        pytest.skip("seeded layout happens to be infeasible")
    cpath = tmp_path / "constraints.json"
    cpath.write_text(json.dumps({
        "constraints": [{"kind": "min-size", "ids": ["undo-btn"],
                         "min_w": 0.05}]}))
    out = tmp_path / "ctrace"
    rc = run("optimize", "--layout", str(layout_path), "--sequence", str(seq),
             "--model", str(model), "--steps", "2", "--constraints",
             str(cpath), "--out", str(out))
    assert rc == 0
    bad = tmp_path / "badc.json"
    bad.write_text(json.dumps({"constraints": [
        {"kind": "min-size", "ids": ["ghost"], "min_w": 0.5}]}))
    rc = run("optimize", "--layout", str(layout_path), "--sequence", str(seq),
             "--model", str(model), "--steps", "1", "--constraints",
             str(bad), "--out", str(tmp_path / "t2"))
    assert rc == 2


# ---------------------------------------------------------------------------
# option plumbing


def test_config_file_overrides_defaults_but_not_flags(tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"good": 2, "random": 1, "seed": 11}))
    out = tmp_path / "cfg-out"
    rc = run("gen-layouts", "--template", "photo", "--config", str(conf),
             "--random", "0", "--out", str(out))
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["good"] == 2      # from config file
    assert manifest["config"]["random"] == 0    # flag wins
    assert manifest["config"]["seed"] == 11


def test_config_file_rejects_unknown_keys(tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"bogus": 1}))
    rc = run("gen-layouts", "--config", str(conf), "--out",
             str(tmp_path / "x"))
    assert rc == 2


def test_seed_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("LAYOUTFORGE_SEED", "23")
    out = tmp_path / "env-out"
    rc = run("gen-layouts", "--template", "photo", "--random", "1",
             "--out", str(out))
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"]["seed"] == 23
    monkeypatch.delenv("LAYOUTFORGE_SEED")
    rc = run("gen-layouts", "--template", "photo", "--random", "1",
             "--out", str(out))
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"]["seed"] == 0


def test_missing_required_flag_exits_2(tmp_path):
    assert run("gen-layouts", "--template", "photo") == 2
    assert run("train", "--epochs", "1") == 2


def test_unknown_command_exits_2():
    assert run("frobnicate") == 2

"""Optimizer tests: penalty math, gradient fidelity, swaps, descent loop."""

import json
import math

import numpy as np
import pytest

from layoutforge.layout import (
    Layout,
    Rect,
    ScreenSpec,
    UiElement,
    aspect_height,
    generate_random_layout,
    overlap_area,
    validate_layout,
)
from layoutforge.model import ModelParams
from layoutforge.optimizer import (
    Constraint,
    OptimizerConfig,
    PenaltyConfig,
    UnknownConstraintTarget,
    clip_gradient_map,
    layout_gradients,
    objective,
    optimize,
    penalty_boundary,
    penalty_constraints,
    penalty_overlap,
    swap_if_beneficial,
    write_trace,
)
from layoutforge.tasks import Task, TaskSequence, expand_steps
from layoutforge.templates import photo_template


def icon(el_id, cx, cy, w, h, aspect=None):
    return UiElement(id=el_id, kind="icon", label="undo",
                     rect=Rect(cx=cx, cy=cy, w=w, h=h), aspect_ratio=aspect)


def toy_layout():
    return Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.2, 0.2, 0.1, 0.08),
        icon("b", 0.7, 0.35, 0.12, 0.1),
        icon("c", 0.4, 0.7, 0.15, 0.09),
    ])


def tap_sequence(ids):
    tasks = [Task(task_type=3, steps=expand_steps(3, i), trial_index=1)
             for i in ids]
    return TaskSequence(tasks=tasks)


NO_PENALTIES = PenaltyConfig(overlap_constant=0.0, boundary_constant=0.0)


# ---------------------------------------------------------------------------
# penalty values


def test_overlap_zero_when_disjoint():
    assert penalty_overlap(toy_layout()) == 0.0


def test_overlap_hand_case():
    layout = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.4, 0.4, 0.3, 0.3),
        icon("b", 0.5, 0.5, 0.3, 0.3),
    ])
    assert penalty_overlap(layout) == pytest.approx(0.04, rel=1e-12)


def test_overlap_matches_area_oracle():
    rng = np.random.default_rng(0)
    for _ in range(300):
        els = []
        n = int(rng.integers(2, 6))
        for i in range(n):
            els.append(icon(f"e{i}", *rng.uniform(0.2, 0.8, size=2),
                            *rng.uniform(0.05, 0.4, size=2)))
        layout = Layout(screen=ScreenSpec(), elements=els)
        expect = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                expect += overlap_area(els[i].rect, els[j].rect)
        assert penalty_overlap(layout) == pytest.approx(expect, abs=1e-12)


def test_boundary_zero_inside():
    assert penalty_boundary(toy_layout()) == 0.0


def test_boundary_hand_case():
    layout = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.95, 0.5, 0.2, 0.1),
    ])
    # right edge at 1.05
    assert penalty_boundary(layout) == pytest.approx(0.05, rel=1e-12)


def test_boundary_matches_per_edge_formula():
    rng = np.random.default_rng(1)
    for _ in range(300):
        r = Rect(*rng.uniform(-0.3, 1.3, size=2), *rng.uniform(0.05, 0.6, size=2))
        layout = Layout(screen=ScreenSpec(), elements=[
            UiElement(id="e", kind="icon", label="undo", rect=r)])
        expect = (max(0.0, -r.left) + max(0.0, r.right - 1.0)
                  + max(0.0, -r.top) + max(0.0, r.bottom - 1.0))
        assert penalty_boundary(layout) == pytest.approx(expect, abs=1e-12)


def test_constraint_values():
    layout = toy_layout()
    assert penalty_constraints(layout, PenaltyConfig(constraints=[
        Constraint("min-size", ("a",), min_w=0.05, min_h=0.05)])) == 0.0
    under = penalty_constraints(layout, PenaltyConfig(constraints=[
        Constraint("min-size", ("a",), min_w=0.13, min_h=0.0)]))
    assert under == pytest.approx(0.03, rel=1e-9)
    assert penalty_constraints(layout, PenaltyConfig(constraints=[
        Constraint("equal-size", ("a", "a"))])) == 0.0
    diff = penalty_constraints(layout, PenaltyConfig(constraints=[
        Constraint("equal-size", ("a", "b"))]))
    assert diff == pytest.approx(0.02 ** 2 + 0.02 ** 2, rel=1e-9)
    align = penalty_constraints(layout, PenaltyConfig(constraints=[
        Constraint("alignment", ("a", "c"), axis="x")]))
    assert align == pytest.approx(0.2 ** 2, rel=1e-9)


def test_constraint_group_adjacency():
    layout = Layout(screen=ScreenSpec(), elements=[
        icon("l", 0.3, 0.5, 0.1, 0.1),
        icon("r", 0.6, 0.5, 0.1, 0.1),
    ])
    config = PenaltyConfig(constraints=[
        Constraint("group-adjacency", ("l", "r"), gap_max=0.02, axis="x")])
    # facing gap is 0.2, aligned rows and equal heights contribute nothing
    assert penalty_constraints(layout, config) == pytest.approx(0.18, rel=1e-9)
    snug = Layout(screen=ScreenSpec(), elements=[
        icon("l", 0.3, 0.5, 0.1, 0.1),
        icon("r", 0.41, 0.5, 0.1, 0.1),
    ])
    assert penalty_constraints(snug, config) == pytest.approx(0.0, abs=1e-12)


def test_constraint_unknown_target():
    with pytest.raises(UnknownConstraintTarget):
        penalty_constraints(toy_layout(), PenaltyConfig(constraints=[
            Constraint("min-size", ("ghost",), min_w=0.1)]))


def test_constraint_validation():
    with pytest.raises(Exception):
        Constraint("bogus", ("a",))
    with pytest.raises(Exception):
        Constraint("equal-size", ("a",))
    with pytest.raises(Exception):
        Constraint("alignment", ("a", "b"), axis="diagonal")


# ---------------------------------------------------------------------------
# objective


def test_objective_reduces_to_prediction_when_feasible():
    layout = toy_layout()
    seq = tap_sequence(["a", "b", "c"])
    params = ModelParams.init(seed=0)
    full = objective(layout, seq, params)
    bare = objective(layout, seq, params, NO_PENALTIES)
    assert full == pytest.approx(bare, rel=1e-12)
    assert bare > 0.0


def test_objective_charges_overlap():
    layout = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.4, 0.4, 0.3, 0.3),
        icon("b", 0.5, 0.5, 0.3, 0.3),
        icon("c", 0.2, 0.8, 0.1, 0.1),
    ])
    seq = tap_sequence(["a", "b", "c"])
    params = ModelParams.init(seed=0)
    full = objective(layout, seq, params)
    bare = objective(layout, seq, params, NO_PENALTIES)
    assert full - bare == pytest.approx(400.0, rel=1e-9)


# ---------------------------------------------------------------------------
# gradients


def test_clip_gradient_map_scales_to_limit():
    grads = {"a": np.array([2.0, 0.0, 0.0, 0.0]),
             "b": np.array([0.1, 0.2, 0.0, 0.0])}
    clipped = clip_gradient_map(grads, 0.5)
    assert np.allclose(clipped["a"], [0.5, 0.0, 0.0, 0.0])
    assert np.allclose(clipped["b"], grads["b"])


def test_zero_model_and_inactive_penalties_give_zero_gradients():
    params = ModelParams.init(seed=0)
    for name in params.names():
        params.arrays[name][...] = 0.0
    grads = layout_gradients(toy_layout(), tap_sequence(["a", "b"]), params)
    for vec in grads.values():
        assert np.allclose(vec, 0.0)


def _fd_reference(layout, seq, params, n_steps, el_id, coord, eps=1e-5):
    """Central difference of predicted/n_steps + weighted penalties."""

    def value(l):
        pred = objective(l, seq, params, NO_PENALTIES)
        pens = objective(l, seq, params) - pred
        return pred / n_steps + pens

    out = []
    for sign in (+1.0, -1.0):
        probe = layout.copy()
        el = probe.element(el_id)
        setattr(el.rect, coord, getattr(el.rect, coord) + sign * eps)
        if el.aspect_ratio is not None and coord == "w":
            el.rect.h = aspect_height(el.rect.w, el.aspect_ratio, probe.screen)
        out.append(value(probe))
    return (out[0] - out[1]) / (2 * eps)


def _rel_err(a, n):
    return abs(a - n) / max(abs(a) + abs(n), 1e-6)


def test_gradients_match_finite_differences_feasible():
    layout = toy_layout()
    seq = tap_sequence(["a", "b", "c"])
    params = ModelParams.init(seed=1)
    grads = layout_gradients(layout, seq, params, grad_clip=math.inf)
    n_steps = 3
    worst = 0.0
    for el_id in ("a", "b", "c"):
        for k, coord in enumerate(("cx", "cy", "w", "h")):
            fd = _fd_reference(layout, seq, params, n_steps, el_id, coord)
            worst = max(worst, _rel_err(float(grads[el_id][k]), fd))
    assert worst <= 1e-4


def test_gradients_match_finite_differences_with_overlap():
    layout = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.42, 0.42, 0.3, 0.3),
        icon("b", 0.58, 0.52, 0.3, 0.3),
        icon("c", 0.2, 0.85, 0.1, 0.1),
    ])
    seq = tap_sequence(["a", "b", "c"])
    params = ModelParams.init(seed=2)
    grads = layout_gradients(layout, seq, params, grad_clip=math.inf)
    worst = 0.0
    for el_id in ("a", "b"):
        for k, coord in enumerate(("cx", "cy", "w", "h")):
            fd = _fd_reference(layout, seq, params, 3, el_id, coord)
            worst = max(worst, _rel_err(float(grads[el_id][k]), fd))
    assert worst <= 1e-4


def test_gradients_fold_fixed_aspect():
    screen = ScreenSpec()
    layout = Layout(screen=screen, elements=[
        icon("a", 0.3, 0.3, 0.1, aspect_height(0.1, 1.0, screen), aspect=1.0),
        icon("b", 0.7, 0.7, 0.12, 0.1),
    ])
    seq = tap_sequence(["a", "b"])
    params = ModelParams.init(seed=3)
    grads = layout_gradients(layout, seq, params, grad_clip=math.inf)
    assert grads["a"][3] == 0.0
    fd = _fd_reference(layout, seq, params, 2, "a", "w")
    assert _rel_err(float(grads["a"][2]), fd) <= 1e-4


def test_overlap_gradient_sign_pushes_apart():
    layout = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.42, 0.5, 0.3, 0.3),
        icon("b", 0.58, 0.5, 0.3, 0.3),
    ])
    params = ModelParams.init(seed=0)
    for name in params.names():
        params.arrays[name][...] = 0.0
    grads = layout_gradients(layout, tap_sequence(["a", "b"]), params,
                             grad_clip=math.inf)
    # descent moves a left and b right, shrinking the overlap
    assert grads["a"][0] > 0.0
    assert grads["b"][0] < 0.0


def test_min_size_gradient_grows_element():
    layout = toy_layout()
    params = ModelParams.init(seed=0)
    for name in params.names():
        params.arrays[name][...] = 0.0
    config = PenaltyConfig(constraints=[
        Constraint("min-size", ("a",), min_w=0.2, min_h=0.0)])
    grads = layout_gradients(layout, tap_sequence(["a"]), params,
                             penalties=config, grad_clip=math.inf)
    assert grads["a"][2] == pytest.approx(-10000.0)


# ---------------------------------------------------------------------------
# swaps


def overlapping_pair(ga, gb):
    layout = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.7, 0.5, 0.5, 0.5),
        icon("b", 0.3, 0.5, 0.5, 0.5),
    ])
    grads = {"a": np.array(ga, dtype=float),
             "b": np.array(gb, dtype=float)}
    return layout, grads


def test_swap_hand_case():
    layout, grads = overlapping_pair([1, 0, 0, 0], [-1, 0, 0, 0])
    # (g_a - g_b) . (p_b - p_a) = (2,0).(-0.4,0) = -0.8 < 0
    _, events = swap_if_beneficial(layout, grads)
    assert events == [("a", "b")]
    assert layout.element("a").rect.cx == pytest.approx(0.3)
    assert layout.element("b").rect.cx == pytest.approx(0.7)


def test_swap_rejects_positive_and_zero_dot():
    layout, grads = overlapping_pair([-1, 0, 0, 0], [1, 0, 0, 0])
    _, events = swap_if_beneficial(layout, grads)
    assert events == []
    assert layout.element("a").rect.cx == pytest.approx(0.7)
    layout, grads = overlapping_pair([1, 0, 0, 0], [1, 0, 0, 0])
    _, events = swap_if_beneficial(layout, grads)
    assert events == []


def test_swap_scale_invariant():
    layout, grads = overlapping_pair([1, 0, 0, 0], [-1, 0, 0, 0])
    scaled = {k: 3.7 * v for k, v in grads.items()}
    _, events = swap_if_beneficial(layout, scaled)
    assert events == [("a", "b")]


def test_swap_disjoint_pair_untouched():
    layout = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.2, 0.2, 0.1, 0.1),
        icon("b", 0.8, 0.8, 0.1, 0.1),
    ])
    grads = {"a": np.array([5.0, 0, 0, 0]), "b": np.array([-5.0, 0, 0, 0])}
    _, events = swap_if_beneficial(layout, grads)
    assert events == []


def test_swap_at_most_once_per_element():
    layout = Layout(screen=ScreenSpec(), elements=[
        icon("a", 0.45, 0.5, 0.4, 0.4),
        icon("b", 0.55, 0.5, 0.4, 0.4),
        icon("c", 0.5, 0.6, 0.4, 0.4),
    ])
    grads = {"a": np.array([-10.0, 0.0, 0, 0]),
             "b": np.array([10.0, 0.0, 0, 0]),
             "c": np.array([0.0, -10.0, 0, 0])}
    _, events = swap_if_beneficial(layout, grads)
    # (a,b) swaps first; (a,c) and (b,c) are then blocked this step
    assert events == [("a", "b")]


# ---------------------------------------------------------------------------
# the optimize loop


def test_optimize_zero_gradients_is_identity():
    params = ModelParams.init(seed=0)
    for name in params.names():
        params.arrays[name][...] = 0.0
    layout = toy_layout()
    seq = tap_sequence(["a", "b"])
    trace = optimize(layout, seq, params, OptimizerConfig(steps=5))
    assert len(trace.steps) == 6
    final = trace.steps[-1].layout
    for el in layout.elements:
        assert final.element(el.id).rect == el.rect
    assert trace.best_step >= 0


def test_optimize_zero_learning_rate_is_identity():
    params = ModelParams.init(seed=4)
    layout = toy_layout()
    seq = tap_sequence(["a", "b", "c"])
    trace = optimize(layout, seq, params,
                     OptimizerConfig(steps=3, learning_rate=0.0))
    final = trace.steps[-1].layout
    for el in layout.elements:
        assert final.element(el.id).rect == el.rect


def test_optimize_trace_accounting():
    params = ModelParams.init(seed=5)
    layout = generate_random_layout(photo_template(), seed=3)
    seq = tap_sequence(["undo-btn", "upload-btn", "save-btn"])
    trace = optimize(layout, seq, params, OptimizerConfig(steps=4))
    assert len(trace.steps) == 5
    assert [s.index for s in trace.steps] == [0, 1, 2, 3, 4]
    for snap in trace.steps:
        assert snap.objective == pytest.approx(
            snap.predicted_ms + 10000.0 * (snap.overlap + snap.boundary),
            rel=1e-9)
        assert snap.css.startswith("/*")
        assert snap.feasible == validate_layout(snap.layout).is_empty()
    if trace.best_step >= 0:
        best = trace.steps[trace.best_step]
        assert best.feasible
        assert validate_layout(trace.best_layout()).is_empty()
        others = [s.predicted_ms for s in trace.steps if s.feasible]
        assert best.predicted_ms == min(others)


def test_optimize_does_not_mutate_input():
    params = ModelParams.init(seed=6)
    layout = toy_layout()
    before = [((e.rect.cx, e.rect.cy, e.rect.w, e.rect.h)) for e in layout.elements]
    optimize(layout, tap_sequence(["a", "b"]), params, OptimizerConfig(steps=2))
    after = [((e.rect.cx, e.rect.cy, e.rect.w, e.rect.h)) for e in layout.elements]
    assert before == after


def test_optimize_aborts_on_non_finite():
    params = ModelParams.init(seed=0)
    params.arrays["head.b"] = np.array(np.nan)
    trace = optimize(toy_layout(), tap_sequence(["a", "b"]), params,
                     OptimizerConfig(steps=10))
    assert trace.aborted is not None
    assert len(trace.steps) < 11


def test_write_trace(tmp_path):
    params = ModelParams.init(seed=7)
    trace = optimize(toy_layout(), tap_sequence(["a", "b"]), params,
                     OptimizerConfig(steps=2))
    out = tmp_path / "trace"
    write_trace(trace, out)
    assert (out / "step_0.css").exists()
    assert (out / "step_2.layout.json").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["best_step"] == trace.best_step
    assert len(summary["steps"]) == len(trace.steps)
    assert {"index", "objective", "predicted_ms", "overlap", "boundary",
            "constraints", "feasible", "swaps"} <= set(summary["steps"][0])

"""Gradient descent on layout geometry through the trained predictor.

The objective is the predicted total sequence time plus weighted, piecewise
differentiable penalties (overlap, screen boundary, optional constraints).
Spatial inputs are the differentiation leaves: gradients flow through the
feature rows back to each element's center and extent, get averaged over
step occurrences, folded from members onto their containers, clipped, and
applied as plain descent updates. Overlapping pairs may swap centers when a
first-order test says the exchange lowers the objective.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .features import IDX_CONTAINER, IDX_RECT, default_table, sequence_features
from .layout import (
    DegenerateContainer,
    Layout,
    Rect,
    aspect_height,
    export_css,
    layout_to_dict,
    order_elements,
    overlap_area,
    reflow_group,
    validate_layout,
)
from .model import MS_PER_UNIT, ModelParams, forward_sequence

DEFAULT_PENALTY_CONSTANT = 10000.0
DEFAULT_DEMOGRAPHICS = (0.1, 37.7)
MIN_EXTENT = 1e-3

CONSTRAINT_KINDS = ("min-size", "equal-size", "group-adjacency", "alignment")


class OptimizerError(Exception):
    pass


class UnknownConstraintTarget(OptimizerError):
    """A constraint references an id the layout does not contain."""


class NonFiniteObjective(OptimizerError):
    """The objective stopped being a finite number."""


@dataclass
class Constraint:
    """One extra penalty term tying a small set of elements together."""

    kind: str
    ids: tuple
    constant: float = DEFAULT_PENALTY_CONSTANT
    min_w: float = 0.0
    min_h: float = 0.0
    gap_max: float = 0.02
    axis: str = "x"

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise OptimizerError(f"unknown constraint kind {self.kind!r}")
        self.ids = tuple(self.ids)
        want = 1 if self.kind == "min-size" else 2
        if len(self.ids) != want:
            raise OptimizerError(f"{self.kind} takes {want} id(s)")
        if self.axis not in ("x", "y"):
            raise OptimizerError("axis must be 'x' or 'y'")
        if self.constant < 0:
            raise OptimizerError("constraint constant must be >= 0")


@dataclass
class PenaltyConfig:
    overlap_constant: float = DEFAULT_PENALTY_CONSTANT
    boundary_constant: float = DEFAULT_PENALTY_CONSTANT
    constraints: list = field(default_factory=list)

    def __post_init__(self):
        if self.overlap_constant < 0 or self.boundary_constant < 0:
            raise OptimizerError("penalty constants must be >= 0")


@dataclass
class OptimizerConfig:
    learning_rate: float = 0.05
    grad_clip: float = 0.5
    steps: int = 500
    demographics: tuple = DEFAULT_DEMOGRAPHICS
    seed: int = 0


# ---------------------------------------------------------------------------
# penalty values


def penalty_overlap(layout: Layout) -> float:
    """Pairwise intersection area over top-level entities."""
    ents = sorted(layout.top_level_entities(), key=lambda e: e.id)
    total = 0.0
    for i, a in enumerate(ents):
        for b in ents[i + 1:]:
            total += overlap_area(a.rect, b.rect)
    return total


def penalty_boundary(layout: Layout) -> float:
    """Total amount by which element edges stick out of the unit screen."""
    total = 0.0
    for e in layout.elements:
        r = e.rect
        total += (max(0.0, -r.left) + max(0.0, r.right - 1.0)
                  + max(0.0, -r.top) + max(0.0, r.bottom - 1.0))
    return total


def _constraint_rect(layout: Layout, some_id: str) -> Rect:
    try:
        return layout.find_rect(some_id)
    except KeyError:
        raise UnknownConstraintTarget(some_id) from None


def _constraint_value(layout: Layout, c: Constraint) -> float:
    if c.kind == "min-size":
        r = _constraint_rect(layout, c.ids[0])
        return max(0.0, c.min_w - r.w) + max(0.0, c.min_h - r.h)
    a = _constraint_rect(layout, c.ids[0])
    b = _constraint_rect(layout, c.ids[1])
    if c.kind == "equal-size":
        return (a.w - b.w) ** 2 + (a.h - b.h) ** 2
    if c.kind == "alignment":
        return (a.cx - b.cx) ** 2 if c.axis == "x" else (a.cy - b.cy) ** 2
    # group-adjacency: facing-edge gap, cross-axis alignment, matched sides
    if c.axis == "x":
        first, second = (a, b) if a.cx <= b.cx else (b, a)
        gap = second.left - first.right
        return (max(0.0, gap - c.gap_max)
                + (a.cy - b.cy) ** 2 + (a.h - b.h) ** 2)
    first, second = (a, b) if a.cy <= b.cy else (b, a)
    gap = second.top - first.bottom
    return (max(0.0, gap - c.gap_max)
            + (a.cx - b.cx) ** 2 + (a.w - b.w) ** 2)


def penalty_constraints(layout: Layout, config: PenaltyConfig) -> float:
    """Sum of the configured constraint penalties (unweighted)."""
    return sum(_constraint_value(layout, c) for c in config.constraints)


# ---------------------------------------------------------------------------
# penalty gradients (element-level, weighted by their constants)


def _add_grad(grads: dict, some_id: str, dcx=0.0, dcy=0.0, dw=0.0, dh=0.0):
    vec = grads.setdefault(some_id, np.zeros(4))
    vec += (dcx, dcy, dw, dh)


def _overlap_gradients(layout: Layout, constant: float, grads: dict) -> None:
    ents = sorted(layout.top_level_entities(), key=lambda e: e.id)
    for i, ea in enumerate(ents):
        for eb in ents[i + 1:]:
            a, b = ea.rect, eb.rect
            ox = min(a.right, b.right) - max(a.left, b.left)
            oy = min(a.bottom, b.bottom) - max(a.top, b.top)
            if ox <= 0.0 or oy <= 0.0:
                continue
            a_r = 1.0 if a.right <= b.right else 0.0
            a_l = 1.0 if a.left >= b.left else 0.0
            a_b = 1.0 if a.bottom <= b.bottom else 0.0
            a_t = 1.0 if a.top >= b.top else 0.0
            k = constant
            _add_grad(grads, ea.id,
                      dcx=k * (a_r - a_l) * oy,
                      dcy=k * (a_b - a_t) * ox,
                      dw=k * 0.5 * (a_r + a_l) * oy,
                      dh=k * 0.5 * (a_b + a_t) * ox)
            _add_grad(grads, eb.id,
                      dcx=k * ((1 - a_r) - (1 - a_l)) * oy,
                      dcy=k * ((1 - a_b) - (1 - a_t)) * ox,
                      dw=k * 0.5 * ((1 - a_r) + (1 - a_l)) * oy,
                      dh=k * 0.5 * ((1 - a_b) + (1 - a_t)) * ox)


def _boundary_gradients(layout: Layout, constant: float, grads: dict) -> None:
    for e in layout.elements:
        r = e.rect
        dcx = dcy = dw = dh = 0.0
        if r.left < 0.0:
            dcx -= 1.0
            dw += 0.5
        if r.right > 1.0:
            dcx += 1.0
            dw += 0.5
        if r.top < 0.0:
            dcy -= 1.0
            dh += 0.5
        if r.bottom > 1.0:
            dcy += 1.0
            dh += 0.5
        if dcx or dcy or dw or dh:
            _add_grad(grads, e.id, constant * dcx, constant * dcy,
                      constant * dw, constant * dh)


def _constraint_gradients(layout: Layout, c: Constraint, grads: dict) -> None:
    k = c.constant
    if c.kind == "min-size":
        r = _constraint_rect(layout, c.ids[0])
        _add_grad(grads, c.ids[0],
                  dw=-k if r.w < c.min_w else 0.0,
                  dh=-k if r.h < c.min_h else 0.0)
        return
    ia, ib = c.ids
    a = _constraint_rect(layout, ia)
    b = _constraint_rect(layout, ib)
    if c.kind == "equal-size":
        _add_grad(grads, ia, dw=k * 2 * (a.w - b.w), dh=k * 2 * (a.h - b.h))
        _add_grad(grads, ib, dw=-k * 2 * (a.w - b.w), dh=-k * 2 * (a.h - b.h))
        return
    if c.kind == "alignment":
        if c.axis == "x":
            _add_grad(grads, ia, dcx=k * 2 * (a.cx - b.cx))
            _add_grad(grads, ib, dcx=-k * 2 * (a.cx - b.cx))
        else:
            _add_grad(grads, ia, dcy=k * 2 * (a.cy - b.cy))
            _add_grad(grads, ib, dcy=-k * 2 * (a.cy - b.cy))
        return
    # group-adjacency
    if c.axis == "x":
        (first_id, first), (second_id, second) = sorted(
            [(ia, a), (ib, b)], key=lambda p: p[1].cx)
        if second.left - first.right > c.gap_max:
            _add_grad(grads, first_id, dcx=-k, dw=-0.5 * k)
            _add_grad(grads, second_id, dcx=k, dw=-0.5 * k)
        _add_grad(grads, ia, dcy=k * 2 * (a.cy - b.cy), dh=k * 2 * (a.h - b.h))
        _add_grad(grads, ib, dcy=-k * 2 * (a.cy - b.cy), dh=-k * 2 * (a.h - b.h))
    else:
        (first_id, first), (second_id, second) = sorted(
            [(ia, a), (ib, b)], key=lambda p: p[1].cy)
        if second.top - first.bottom > c.gap_max:
            _add_grad(grads, first_id, dcy=-k, dh=-0.5 * k)
            _add_grad(grads, second_id, dcy=k, dh=-0.5 * k)
        _add_grad(grads, ia, dcx=k * 2 * (a.cx - b.cx), dw=k * 2 * (a.w - b.w))
        _add_grad(grads, ib, dcx=-k * 2 * (a.cx - b.cx), dw=-k * 2 * (a.w - b.w))


def _penalty_gradients(layout: Layout, config: PenaltyConfig,
                       include_overlap: bool) -> dict:
    grads = {}
    if include_overlap:
        _overlap_gradients(layout, config.overlap_constant, grads)
    _boundary_gradients(layout, config.boundary_constant, grads)
    for c in config.constraints:
        _constraint_gradients(layout, c, grads)
    return grads


# ---------------------------------------------------------------------------
# objective and model gradients


def _predicted_total(layout: Layout, sequence, params, demographics, table):
    rows, tails = sequence_features(layout, sequence, table,
                                    frac_left_handed=demographics[0],
                                    avg_age_years=demographics[1])
    arrays = params.arrays if isinstance(params, ModelParams) else params
    inputs = [rows[:, i, :] for i in range(rows.shape[1])]
    outputs = forward_sequence(None, inputs, tails[None, :, :], arrays)
    return float(sum(float(np.asarray(o)[0]) for o in outputs)) * MS_PER_UNIT


def objective(layout: Layout, sequence, params,
              penalties: PenaltyConfig = None,
              demographics: tuple = DEFAULT_DEMOGRAPHICS,
              table=None) -> float:
    """Predicted sequence total (ms) plus the weighted penalty terms."""
    penalties = penalties or PenaltyConfig()
    table = table or default_table()
    predicted = _predicted_total(layout, sequence, params, demographics, table)
    return (predicted
            + penalties.overlap_constant * penalty_overlap(layout)
            + penalties.boundary_constant * penalty_boundary(layout)
            + sum(c.constant * _constraint_value(layout, c)
                  for c in penalties.constraints))


def _model_entity_gradients(layout: Layout, sequence, params, demographics,
                            table):
    """Average d(predicted total)/d(cx,cy,w,h) per updatable entity.

    Gradients of a feature are averaged over every row occurrence; member
    gradients are additionally folded onto their container. Returns
    (entity gradient map, predicted total ms).
    """
    rows, tails = sequence_features(layout, sequence, table,
                                    frac_left_handed=demographics[0],
                                    avg_age_years=demographics[1])
    arrays = params.arrays if isinstance(params, ModelParams) else params
    n_steps = rows.shape[0]

    tape = ad.Tape()
    leaves = [tape.leaf(rows[:, i, :].copy()) for i in range(rows.shape[1])]
    outputs = forward_sequence(tape, leaves, tails[None, :, :], arrays)
    total = outputs[0]
    for out in outputs[1:]:
        total = ad.add(tape, total, out)
    root = ad.scale(tape, ad.vsum(tape, total), MS_PER_UNIT)
    predicted = float(root.value)
    tape.backward(root)

    ordered = order_elements(layout)
    own = {}
    block_sum = {}
    block_rows = {}
    for pos, el in enumerate(ordered):
        g = leaves[pos].grad
        own[el.id] = g[:, IDX_RECT].sum(axis=0) / n_steps
        if el.container_id is not None:
            acc = block_sum.setdefault(el.container_id, np.zeros(4))
            acc += g[:, IDX_CONTAINER].sum(axis=0)
            block_rows[el.container_id] = block_rows.get(el.container_id, 0) \
                + n_steps

    member_ids = set()
    grads = {}
    for c in layout.containers:
        vec = np.zeros(4)
        if c.id in block_sum:
            vec += block_sum[c.id] / block_rows[c.id]
        for mid in c.member_ids:
            vec += own[mid]
            member_ids.add(mid)
        grads[c.id] = vec

    hosted = {e.id for e in layout.hosted_drop_targets()}
    for el in layout.elements:
        if el.id in member_ids:
            continue
        if el.id in block_sum:
            # a host: its rect shows up in its own rows and in every hosted
            # row's container block; average across all of those
            rows_own = n_steps
            rows_blk = block_rows[el.id]
            grads[el.id] = (own[el.id] * rows_own + block_sum[el.id]) \
                / (rows_own + rows_blk)
        else:
            grads[el.id] = own[el.id].copy()
    return grads, predicted


def _aspect_slope(el, screen) -> float:
    return aspect_height(1.0, el.aspect_ratio, screen)


def _fold_aspect(layout: Layout, grads: dict) -> None:
    """Height follows width for fixed-aspect elements; merge their grads."""
    for el in layout.elements:
        if el.aspect_ratio is None or el.id not in grads:
            continue
        vec = grads[el.id]
        vec[2] += vec[3] * _aspect_slope(el, layout.screen)
        vec[3] = 0.0


def clip_gradient_map(grads: dict, max_norm: float) -> dict:
    """Clip each entity's 4-vector to the given norm. Returns a new map."""
    out = {}
    for some_id, vec in grads.items():
        norm = float(np.linalg.norm(vec))
        if norm > max_norm and norm > 0.0:
            out[some_id] = vec * (max_norm / norm)
        else:
            out[some_id] = vec.copy()
    return out


def _merge(base: dict, extra: dict) -> dict:
    out = {k: v.copy() for k, v in base.items()}
    for k, v in extra.items():
        if k in out:
            out[k] = out[k] + v
        else:
            out[k] = v.copy()
    return out


def _updatable_ids(layout: Layout) -> list:
    ids = [e.id for e in layout.top_level_entities()]
    ids.extend(e.id for e in layout.hosted_drop_targets())
    return ids


def _gradient_maps(layout: Layout, sequence, params, penalties, demographics,
                   table, grad_clip):
    """(clipped full-objective map, raw map without overlap, predicted ms)."""
    model_grads, predicted = _model_entity_gradients(
        layout, sequence, params, demographics, table)
    updatable = set(_updatable_ids(layout))
    base = {k: v for k, v in model_grads.items() if k in updatable}
    for some_id in updatable - set(base):
        base[some_id] = np.zeros(4)

    pen_full = _fold_members(layout, _penalty_gradients(
        layout, penalties, include_overlap=True))
    pen_raw = _fold_members(layout, _penalty_gradients(
        layout, penalties, include_overlap=False))

    full = _merge(base, pen_full)
    raw = _merge(base, pen_raw)
    _fold_aspect(layout, full)
    _fold_aspect(layout, raw)
    return clip_gradient_map(full, grad_clip), raw, predicted


def _fold_members(layout: Layout, grads: dict) -> dict:
    """Re-home member-level penalty gradients onto their containers."""
    member_to_container = {}
    for c in layout.containers:
        for mid in c.member_ids:
            member_to_container[mid] = c.id
    out = {}
    for some_id, vec in grads.items():
        key = member_to_container.get(some_id, some_id)
        acc = out.setdefault(key, np.zeros(4))
        acc += vec
    return out


def layout_gradients(layout: Layout, sequence, params,
                     penalties: PenaltyConfig = None,
                     demographics: tuple = DEFAULT_DEMOGRAPHICS,
                     grad_clip: float = 0.5, table=None) -> dict:
    """Clipped objective gradient per updatable entity: {id: [dcx,dcy,dw,dh]}."""
    penalties = penalties or PenaltyConfig()
    table = table or default_table()
    clipped, _, _ = _gradient_maps(layout, sequence, params, penalties,
                                   demographics, table, grad_clip)
    return clipped


# ---------------------------------------------------------------------------
# swaps


def _overlapping_pairs(layout: Layout) -> list:
    ents = sorted(layout.top_level_entities(), key=lambda e: e.id)
    pairs = []
    for i, a in enumerate(ents):
        for b in ents[i + 1:]:
            if overlap_area(a.rect, b.rect) > 0.0:
                pairs.append((a, b))
    return pairs


def _move_entity_center(layout: Layout, entity, cx: float, cy: float) -> None:
    """Relocate an entity, dragging members / hosted drops along rigidly."""
    dx, dy = cx - entity.rect.cx, cy - entity.rect.cy
    entity.rect.cx, entity.rect.cy = cx, cy
    followers = []
    if hasattr(entity, "member_ids"):
        followers = [layout.element(mid) for mid in entity.member_ids]
    elif getattr(entity, "kind", None) == "static-div":
        followers = [e for e in layout.hosted_drop_targets()
                     if e.container_id == entity.id]
    for f in followers:
        f.rect.cx += dx
        f.rect.cy += dy


def swap_if_beneficial(layout: Layout, raw_gradients: dict):
    """Exchange centers of overlapping pairs when first-order analysis says
    the objective drops. Mutates the layout; returns (layout, swap events).
    """
    events = []
    swapped = set()
    for a, b in _overlapping_pairs(layout):
        if a.id in swapped or b.id in swapped:
            continue
        ga = np.asarray(raw_gradients.get(a.id, np.zeros(4)))[:2]
        gb = np.asarray(raw_gradients.get(b.id, np.zeros(4)))[:2]
        pa = np.array([a.rect.cx, a.rect.cy])
        pb = np.array([b.rect.cx, b.rect.cy])
        if float(np.dot(ga - gb, pb - pa)) < 0.0:
            _move_entity_center(layout, a, *pb)
            _move_entity_center(layout, b, *pa)
            swapped.update((a.id, b.id))
            events.append((a.id, b.id))
    return layout, events


# ---------------------------------------------------------------------------
# the optimization loop


@dataclass
class TraceStep:
    index: int
    layout: Layout
    predicted_ms: float
    overlap: float
    boundary: float
    constraints: float
    objective: float
    feasible: bool
    swaps: list = field(default_factory=list)
    css: str = ""


@dataclass
class OptimizationTrace:
    steps: list = field(default_factory=list)
    best_step: int = -1
    aborted: str = None

    def best_layout(self) -> Layout:
        if self.best_step < 0:
            return None
        return self.steps[self.best_step].layout


def _snapshot(index, layout, sequence, params, penalties, demographics,
              table, swaps, predicted=None) -> TraceStep:
    if predicted is None:
        predicted = _predicted_total(layout, sequence, params, demographics,
                                     table)
    ov = penalty_overlap(layout)
    bd = penalty_boundary(layout)
    cs = penalty_constraints(layout, penalties)
    obj = (predicted + penalties.overlap_constant * ov
           + penalties.boundary_constant * bd
           + sum(c.constant * _constraint_value(layout, c)
                 for c in penalties.constraints))
    return TraceStep(index=index, layout=layout.copy(), predicted_ms=predicted,
                     overlap=ov, boundary=bd, constraints=cs, objective=obj,
                     feasible=validate_layout(layout).is_empty(),
                     swaps=list(swaps), css=export_css(layout))


def _apply_updates(layout: Layout, grads: dict, lr: float) -> None:
    screen = layout.screen
    hosts = {}
    for el in layout.hosted_drop_targets():
        hosts.setdefault(el.container_id, []).append(el)
    old_extents = {c.id: (c.rect.w, c.rect.h) for c in layout.containers}

    for entity in layout.top_level_entities() + layout.hosted_drop_targets():
        g = grads.get(entity.id)
        if g is None:
            continue
        r = entity.rect
        r.cx -= lr * float(g[0])
        r.cy -= lr * float(g[1])
        r.w = max(MIN_EXTENT, r.w - lr * float(g[2]))
        aspect = getattr(entity, "aspect_ratio", None)
        if aspect is not None:
            r.h = aspect_height(r.w, aspect, screen)
        else:
            r.h = max(MIN_EXTENT, r.h - lr * float(g[3]))

    # containers: recompute member grids, backing out extent changes that
    # leave no room for the member grid
    for c in layout.containers:
        members = [layout.element(mid) for mid in c.member_ids]
        try:
            rects = reflow_group(c, members, screen)
        except DegenerateContainer:
            c.rect.w, c.rect.h = old_extents[c.id]
            rects = reflow_group(c, members, screen)
        for m in members:
            m.rect = rects[m.id]

    # hosted drops stay caged inside their host
    for host_id, drops in hosts.items():
        host = layout.element(host_id).rect
        for d in drops:
            r = d.rect
            r.w = min(r.w, host.w)
            r.h = min(r.h, host.h)
            r.cx = float(np.clip(r.cx, host.left + r.w / 2,
                                 host.right - r.w / 2))
            r.cy = float(np.clip(r.cy, host.top + r.h / 2,
                                 host.bottom - r.h / 2))


def optimize(layout: Layout, sequence, params,
             opt_config: OptimizerConfig = None,
             penalty_config: PenaltyConfig = None,
             table=None, on_step=None) -> OptimizationTrace:
    """Descend on a copy of the layout; returns the full per-step trace.

    The best step is the feasible snapshot with the lowest predicted total;
    a non-finite objective aborts the loop and returns the trace so far.
    on_step, when given, is called with each TraceStep as it is recorded.
    """
    opt_config = opt_config or OptimizerConfig()
    penalty_config = penalty_config or PenaltyConfig()
    table = table or default_table()
    work = layout.copy()
    demographics = tuple(opt_config.demographics)

    trace = OptimizationTrace()
    trace.steps.append(_snapshot(0, work, sequence, params, penalty_config,
                                 demographics, table, swaps=[]))
    if on_step:
        on_step(trace.steps[0])

    for step in range(1, opt_config.steps + 1):
        clipped, raw, _ = _gradient_maps(work, sequence, params,
                                         penalty_config, demographics, table,
                                         opt_config.grad_clip)
        _apply_updates(work, clipped, opt_config.learning_rate)
        _, events = swap_if_beneficial(work, raw)

        snap = _snapshot(step, work, sequence, params, penalty_config,
                         demographics, table, swaps=events)
        trace.steps.append(snap)
        if on_step:
            on_step(snap)
        if not math.isfinite(snap.objective):
            trace.aborted = f"non-finite objective at step {step}"
            break

    best = -1
    best_pred = math.inf
    for snap in trace.steps:
        if snap.feasible and snap.predicted_ms < best_pred:
            best, best_pred = snap.index, snap.predicted_ms
    trace.best_step = best
    return trace


def write_trace(trace: OptimizationTrace, directory) -> None:
    """Emit step_<n>.css / step_<n>.layout.json plus a summary manifest."""
    os.makedirs(directory, exist_ok=True)
    rows = []
    for snap in trace.steps:
        css_path = os.path.join(directory, f"step_{snap.index}.css")
        with open(css_path, "w") as fh:
            fh.write(snap.css)
        with open(os.path.join(directory,
                               f"step_{snap.index}.layout.json"), "w") as fh:
            fh.write(json.dumps(layout_to_dict(snap.layout), indent=2,
                                sort_keys=True) + "\n")
        rows.append({
            "index": snap.index,
            "objective": snap.objective,
            "predicted_ms": snap.predicted_ms,
            "overlap": snap.overlap,
            "boundary": snap.boundary,
            "constraints": snap.constraints,
            "feasible": snap.feasible,
            "swaps": [list(pair) for pair in snap.swaps],
        })
    summary = {"best_step": trace.best_step, "aborted": trace.aborted,
               "steps": rows}
    with open(os.path.join(directory, "summary.json"), "w") as fh:
        fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")

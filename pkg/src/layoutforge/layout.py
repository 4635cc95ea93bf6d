"""2D mobile layout data model: rects, elements, groups, validity, random
generation, perturbation, reflow, and CSS export.

All geometry is stored normalized: centers and extents are fractions of the
screen width/height, so a feasible rect lives inside the unit square. Pixel
values exist only at CSS export time.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

KINDS = (
    "icon",
    "icon-group-container",
    "icon-group-member",
    "button-group-container",
    "button-group-member",
    "slider",
    "static-div",
    "drop-target",
)
CONTAINER_KINDS = ("icon-group-container", "button-group-container")
ORIENTATIONS = ("horizontal", "vertical", "none")

# Reflow constants: minimum gap between adjacent group members and the
# smallest member extent before a container counts as degenerate.
REFLOW_MIN_GAP = 0.01
MIN_MEMBER_EXTENT = 1e-3

ASPECT_TOL = 1e-6


class LayoutError(Exception):
    pass


class PlacementFailure(LayoutError):
    """Random placement exceeded its retry cap; the template is too dense."""


class DegenerateContainer(LayoutError):
    """Container too small to hold one member at the minimum extent."""


class LayoutSchemaError(LayoutError):
    """Layout JSON does not match the expected schema."""


@dataclass
class ScreenSpec:
    width_px: int = 375
    height_px: int = 667

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise LayoutSchemaError("screen dimensions must be positive")


@dataclass
class Rect:
    """Axis-aligned rect stored as normalized center + extent."""

    cx: float
    cy: float
    w: float
    h: float

    @property
    def left(self):
        return self.cx - self.w / 2

    @property
    def right(self):
        return self.cx + self.w / 2

    @property
    def top(self):
        return self.cy - self.h / 2

    @property
    def bottom(self):
        return self.cy + self.h / 2

    def contains(self, other: "Rect", tol: float = 1e-9) -> bool:
        return (
            other.left >= self.left - tol
            and other.right <= self.right + tol
            and other.top >= self.top - tol
            and other.bottom <= self.bottom + tol
        )


def overlap_area(a: Rect, b: Rect) -> float:
    """Intersection area of two rects (normalized units, >= 0)."""
    dx = min(a.right, b.right) - max(a.left, b.left)
    dy = min(a.bottom, b.bottom) - max(a.top, b.top)
    return max(0.0, dx) * max(0.0, dy)


@dataclass
class UiElement:
    id: str
    kind: str
    label: str
    rect: Rect
    orientation: str = "none"
    container_id: Optional[str] = None
    aspect_ratio: Optional[float] = None
    label_salience: int = 1

    def __post_init__(self):
        if self.kind not in KINDS or self.kind in CONTAINER_KINDS:
            raise LayoutSchemaError(f"bad element kind {self.kind!r}")
        if self.orientation not in ORIENTATIONS:
            raise LayoutSchemaError(f"bad orientation {self.orientation!r}")
        if self.aspect_ratio is not None and self.aspect_ratio <= 0:
            raise LayoutSchemaError("aspect_ratio must be positive")


@dataclass
class GroupContainer:
    id: str
    kind: str
    rect: Rect
    member_ids: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in CONTAINER_KINDS:
            raise LayoutSchemaError(f"bad container kind {self.kind!r}")


@dataclass
class Layout:
    screen: ScreenSpec
    elements: list = field(default_factory=list)
    containers: list = field(default_factory=list)

    def element(self, element_id: str) -> UiElement:
        for e in self.elements:
            if e.id == element_id:
                return e
        raise KeyError(element_id)

    def container(self, container_id: str) -> GroupContainer:
        for c in self.containers:
            if c.id == container_id:
                return c
        raise KeyError(container_id)

    def has_id(self, some_id: str) -> bool:
        return any(e.id == some_id for e in self.elements) or any(
            c.id == some_id for c in self.containers
        )

    def find_rect(self, some_id: str) -> Rect:
        for e in self.elements:
            if e.id == some_id:
                return e.rect
        for c in self.containers:
            if c.id == some_id:
                return c.rect
        raise KeyError(some_id)

    def hosted_drop_targets(self) -> list:
        """Drop targets pinned inside a static-div host (e.g. zones on a photo)."""
        out = []
        static_ids = {e.id for e in self.elements if e.kind == "static-div"}
        for e in self.elements:
            if e.kind == "drop-target" and e.container_id in static_ids:
                out.append(e)
        return out

    def top_level_entities(self) -> list:
        """Entities subject to pairwise overlap: containers plus elements that
        are neither group members nor hosted drop targets."""
        hosted = {e.id for e in self.hosted_drop_targets()}
        member_ids = set()
        for c in self.containers:
            member_ids.update(c.member_ids)
        ents = []
        for e in self.elements:
            if e.id in member_ids or e.id in hosted:
                continue
            ents.append(e)
        ents.extend(self.containers)
        return ents

    def copy(self) -> "Layout":
        return copy.deepcopy(self)


def order_elements(layout: Layout) -> list:
    """Encodable elements sorted top-down, left-right, then by id.

    Group members are included individually; containers are not emitted.
    """
    els = [e for e in layout.elements]
    els.sort(key=lambda e: (e.rect.top, e.rect.left, e.id))
    return els


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    overlaps: list = field(default_factory=list)      # (id_a, id_b, area)
    boundary: list = field(default_factory=list)      # (id, amount outside)
    broken: list = field(default_factory=list)        # free-form invariant breaks

    def is_empty(self) -> bool:
        return not (self.overlaps or self.boundary or self.broken)

    def summary(self) -> str:
        if self.is_empty():
            return "feasible"
        parts = []
        for a, b, area in self.overlaps:
            parts.append(f"overlap {a}~{b} area={area:.6g}")
        for eid, amt in self.boundary:
            parts.append(f"out-of-bounds {eid} by {amt:.6g}")
        parts.extend(self.broken)
        return "; ".join(parts)


_AREA_EPS = 1e-12


def validate_layout(layout: Layout) -> ValidationReport:
    """Check feasibility invariants. Empty report iff the layout is feasible.

    Never raises: every problem becomes a report entry.
    """
    rep = ValidationReport()
    seen = set()
    for ent in list(layout.elements) + list(layout.containers):
        if ent.id in seen:
            rep.broken.append(f"duplicate id {ent.id}")
        seen.add(ent.id)
        if ent.rect.w <= 0 or ent.rect.h <= 0:
            rep.broken.append(f"non-positive extent on {ent.id}")

    container_ids = {c.id for c in layout.containers}
    static_ids = {e.id for e in layout.elements if e.kind == "static-div"}
    for e in layout.elements:
        if e.container_id is None:
            continue
        if e.kind == "drop-target" and e.container_id in static_ids:
            host = layout.element(e.container_id)
            if not host.rect.contains(e.rect):
                rep.broken.append(f"drop target {e.id} outside host {host.id}")
        elif e.container_id not in container_ids:
            rep.broken.append(f"{e.id} references missing container {e.container_id}")

    for c in layout.containers:
        for mid in c.member_ids:
            try:
                m = layout.element(mid)
            except KeyError:
                rep.broken.append(f"container {c.id} lists missing member {mid}")
                continue
            if not c.rect.contains(m.rect):
                rep.broken.append(f"member {mid} outside container {c.id}")

    sw, sh = layout.screen.width_px, layout.screen.height_px
    for e in layout.elements:
        if e.aspect_ratio is not None and e.rect.h > 0:
            actual = (e.rect.w * sw) / (e.rect.h * sh)
            if abs(actual - e.aspect_ratio) > ASPECT_TOL:
                rep.broken.append(
                    f"aspect drift on {e.id}: {actual:.8f} vs {e.aspect_ratio:.8f}"
                )

    for ent in list(layout.elements) + list(layout.containers):
        r = ent.rect
        amt = max(0.0, -r.left) + max(0.0, r.right - 1) + max(0.0, -r.top) + max(0.0, r.bottom - 1)
        if amt > _AREA_EPS:
            rep.boundary.append((ent.id, amt))

    ents = layout.top_level_entities()
    for i in range(len(ents)):
        for j in range(i + 1, len(ents)):
            area = overlap_area(ents[i].rect, ents[j].rect)
            if area > _AREA_EPS:
                rep.overlaps.append((ents[i].id, ents[j].id, area))
    return rep


# ---------------------------------------------------------------------------
# Group reflow


def _norm_width_per_height(aspect_ratio: float, screen: ScreenSpec) -> float:
    # pixel aspect (w_px/h_px) converted to normalized-width per normalized-height
    return aspect_ratio * screen.height_px / screen.width_px


def _grid_candidates(n: int, W: float, H: float, aspects, screen: ScreenSpec):
    """Yield (score, rows, cols, member_dims) for every workable row count."""
    for rows in range(1, n + 1):
        cols = math.ceil(n / rows)
        w_avail = (W - (cols - 1) * REFLOW_MIN_GAP) / cols
        h_avail = (H - (rows - 1) * REFLOW_MIN_GAP) / rows
        if w_avail <= 0 or h_avail <= 0:
            continue
        dims = []
        for a in aspects:
            if a is None:
                dims.append((w_avail, h_avail))
            else:
                k = _norm_width_per_height(a, screen)
                h = min(h_avail, w_avail / k)
                dims.append((k * h, h))
        score = min(min(w, h) for w, h in dims)
        yield score, rows, cols, dims


def reflow_group(container: GroupContainer, members: list, screen: ScreenSpec) -> dict:
    """Lay members out row-major inside the container.

    The row count is chosen so members are as large as possible while keeping
    at least REFLOW_MIN_GAP between neighbours (so as many members fit per row
    as size allows). Leftover space becomes uniform gaps, flush against the
    container edges; a lone row or column is centered. A partial last row uses
    the same grid columns, filled left to right.

    Returns {member_id: Rect}. Raises DegenerateContainer when the container
    cannot hold its members at the minimum extent.
    """
    if not members:
        raise DegenerateContainer(f"container {container.id} has no members")
    n = len(members)
    W, H = container.rect.w, container.rect.h
    aspects = [m.aspect_ratio for m in members]

    best = None
    for score, rows, cols, dims in _grid_candidates(n, W, H, aspects, screen):
        if best is None or score > best[0] + 1e-15:
            best = (score, rows, cols, dims)
    if best is None or best[0] < MIN_MEMBER_EXTENT:
        raise DegenerateContainer(
            f"container {container.id} too small for {n} member(s)"
        )
    _, rows, cols, dims = best

    slot_w = max(w for w, _ in dims)
    slot_h = max(h for _, h in dims)
    if cols > 1:
        gap_x = (W - cols * slot_w) / (cols - 1)
        x0 = container.rect.left + slot_w / 2
    else:
        gap_x = 0.0
        x0 = container.rect.cx
    if rows > 1:
        gap_y = (H - rows * slot_h) / (rows - 1)
        y0 = container.rect.top + slot_h / 2
    else:
        gap_y = 0.0
        y0 = container.rect.cy

    out = {}
    for idx, m in enumerate(members):
        r, c = divmod(idx, cols)
        w, h = dims[idx]
        out[m.id] = Rect(x0 + c * (slot_w + gap_x), y0 + r * (slot_h + gap_y), w, h)
    return out


def apply_reflow(layout: Layout) -> None:
    """Recompute every container's member rects in place."""
    for c in layout.containers:
        members = [layout.element(mid) for mid in c.member_ids]
        rects = reflow_group(c, members, layout.screen)
        for m in members:
            m.rect = rects[m.id]


# ---------------------------------------------------------------------------
# Templates and random generation


@dataclass
class ElementSpec:
    """Template entry for one element to be placed."""

    id: str
    kind: str
    label: str
    w_range: tuple
    h_range: tuple = None  # derived from aspect when None
    aspect_ratio: Optional[float] = None
    orientations: tuple = ("none",)
    label_salience: int = 1
    host_id: Optional[str] = None  # static-div that hosts this drop target


@dataclass
class ContainerSpec:
    id: str
    kind: str
    members: list  # ElementSpec entries (w/h ranges unused; reflow decides)
    w_range: tuple = (0.2, 0.5)
    h_range: tuple = (0.08, 0.25)


@dataclass
class LayoutTemplate:
    name: str
    screen: ScreenSpec
    items: list  # ElementSpec / ContainerSpec in placement order
    severe_ids: tuple = ()  # targets whose mis-taps count as severe errors

    def all_element_specs(self) -> list:
        out = []
        for item in self.items:
            if isinstance(item, ContainerSpec):
                out.extend(item.members)
            else:
                out.append(item)
        return out


def aspect_height(w: float, aspect: float, screen: ScreenSpec) -> float:
    """Height (normalized) that keeps a w x h rect at the given pixel aspect."""
    return w / _norm_width_per_height(aspect, screen)


def _draw_element(spec: ElementSpec, rng, screen: ScreenSpec, bounds: Rect) -> UiElement:
    orientation = spec.orientations[rng.integers(0, len(spec.orientations))]
    w = float(rng.uniform(*spec.w_range))
    if spec.aspect_ratio is not None:
        h = aspect_height(w, spec.aspect_ratio, screen)
    else:
        h = float(rng.uniform(*spec.h_range))
    if orientation == "vertical" and spec.aspect_ratio is None:
        w, h = h, w
    w = min(w, bounds.w)
    h = min(h, bounds.h)
    cx = float(rng.uniform(bounds.left + w / 2, bounds.right - w / 2))
    cy = float(rng.uniform(bounds.top + h / 2, bounds.bottom - h / 2))
    return UiElement(
        id=spec.id,
        kind=spec.kind,
        label=spec.label,
        rect=Rect(cx, cy, w, h),
        orientation=orientation,
        container_id=spec.host_id,
        aspect_ratio=spec.aspect_ratio,
        label_salience=spec.label_salience,
    )


def generate_random_layout(template: LayoutTemplate, seed: int, max_retries: int = 200) -> Layout:
    """Place every template item at random, re-randomizing on collision.

    Items are placed in template order; each item gets at most ``max_retries``
    re-randomizations before PlacementFailure. Hosted drop targets are placed
    inside their host and only checked against sibling drop targets.
    """
    rng = np.random.default_rng(seed)
    screen = template.screen
    layout = Layout(screen=screen)
    full = Rect(0.5, 0.5, 1.0, 1.0)
    placed_rects = []  # rects participating in top-level collision checks

    def collides(rect: Rect, others: Iterable[Rect]) -> bool:
        return any(overlap_area(rect, o) > _AREA_EPS for o in others)

    for item in template.items:
        if isinstance(item, ContainerSpec):
            ok = False
            for _ in range(max_retries + 1):
                w = float(rng.uniform(*item.w_range))
                h = float(rng.uniform(*item.h_range))
                cx = float(rng.uniform(w / 2, 1 - w / 2))
                cy = float(rng.uniform(h / 2, 1 - h / 2))
                rect = Rect(cx, cy, w, h)
                if collides(rect, placed_rects):
                    continue
                container = GroupContainer(
                    id=item.id, kind=item.kind, rect=rect,
                    member_ids=[m.id for m in item.members],
                )
                members = []
                for mspec in item.members:
                    members.append(UiElement(
                        id=mspec.id, kind=mspec.kind, label=mspec.label,
                        rect=Rect(cx, cy, 1e-2, 1e-2), container_id=item.id,
                        aspect_ratio=mspec.aspect_ratio,
                        label_salience=mspec.label_salience,
                    ))
                try:
                    rects = reflow_group(container, members, screen)
                except DegenerateContainer:
                    continue
                for m in members:
                    m.rect = rects[m.id]
                layout.containers.append(container)
                layout.elements.extend(members)
                placed_rects.append(rect)
                ok = True
                break
            if not ok:
                raise PlacementFailure(f"could not place container {item.id}")
        else:
            hosted = item.host_id is not None
            if hosted:
                host = layout.element(item.host_id)
                bounds = host.rect
                obstacles = [
                    e.rect for e in layout.hosted_drop_targets()
                    if e.container_id == item.host_id
                ]
            else:
                bounds = full
                obstacles = placed_rects
            ok = False
            for _ in range(max_retries + 1):
                el = _draw_element(item, rng, screen, bounds)
                if collides(el.rect, obstacles):
                    continue
                layout.elements.append(el)
                if not hosted:
                    placed_rects.append(el.rect)
                ok = True
                break
            if not ok:
                raise PlacementFailure(f"could not place element {item.id}")
    return layout


def perturb_layout(
    layout: Layout,
    seed: int,
    scale_range: tuple = (0.7, 1.3),
    swap_prob: float = 0.15,
    adjacency_gap: float = 0.05,
) -> Layout:
    """Randomly rescale every top-level entity and swap adjacent pairs.

    Extents are multiplied by independent draws from ``scale_range`` (a single
    draw for aspect-constrained elements); pairs whose rects sit closer than
    ``adjacency_gap`` swap centers with probability ``swap_prob``. Group
    members are reflowed afterwards and hosted drop targets follow their host
    affinely. The result may be infeasible; callers validate.
    """
    rng = np.random.default_rng(seed)
    out = layout.copy()
    hosts_before = {e.id: layout.element(e.container_id).rect
                    for e in layout.hosted_drop_targets()}

    ents = out.top_level_entities()
    for ent in ents:
        if isinstance(ent, UiElement) and ent.aspect_ratio is not None:
            s = float(rng.uniform(*scale_range))
            ent.rect.w *= s
            ent.rect.h *= s
        else:
            ent.rect.w *= float(rng.uniform(*scale_range))
            ent.rect.h *= float(rng.uniform(*scale_range))

    ents_sorted = sorted(ents, key=lambda e: e.id)
    swapped = set()
    for i in range(len(ents_sorted)):
        for j in range(i + 1, len(ents_sorted)):
            a, b = ents_sorted[i], ents_sorted[j]
            if a.id in swapped or b.id in swapped:
                continue
            ra, rb = a.rect, b.rect
            gap_x = max(rb.left - ra.right, ra.left - rb.right)
            gap_y = max(rb.top - ra.bottom, ra.top - rb.bottom)
            if max(gap_x, gap_y) < adjacency_gap and rng.random() < swap_prob:
                ra.cx, rb.cx = rb.cx, ra.cx
                ra.cy, rb.cy = rb.cy, ra.cy
                swapped.update((a.id, b.id))

    apply_reflow(out)
    for drop in out.hosted_drop_targets():
        before = hosts_before[drop.id]
        after = out.element(drop.container_id).rect
        fx = (drop.rect.cx - before.cx) / before.w
        fy = (drop.rect.cy - before.cy) / before.h
        drop.rect = Rect(
            after.cx + fx * after.w,
            after.cy + fy * after.h,
            drop.rect.w * after.w / before.w,
            drop.rect.h * after.h / before.h,
        )
    return out


# ---------------------------------------------------------------------------
# CSS export and JSON serialization


def _px(value: float, size_px: int) -> int:
    return int(math.floor(value * size_px + 0.5))


def export_css(layout: Layout) -> str:
    """One absolute-position rule per element, in top-down/left-right order."""
    sw, sh = layout.screen.width_px, layout.screen.height_px
    lines = [f"/* layout export: {len(layout.elements)} elements on {sw}x{sh} */"]
    for e in order_elements(layout):
        r = e.rect
        lines.append(
            f"#{e.id} {{ position: absolute; "
            f"left: {_px(r.left, sw)}px; top: {_px(r.top, sh)}px; "
            f"width: {_px(r.w, sw)}px; height: {_px(r.h, sh)}px; }}"
        )
    return "\n".join(lines) + "\n"


def layout_to_dict(layout: Layout) -> dict:
    def elem(e: UiElement) -> dict:
        d = {
            "id": e.id, "kind": e.kind, "label": e.label,
            "cx": e.rect.cx, "cy": e.rect.cy, "w": e.rect.w, "h": e.rect.h,
            "orientation": e.orientation, "label_salience": e.label_salience,
        }
        if e.container_id is not None:
            d["container_id"] = e.container_id
        if e.aspect_ratio is not None:
            d["aspect_ratio"] = e.aspect_ratio
        return d

    return {
        "screen": {"width_px": layout.screen.width_px, "height_px": layout.screen.height_px},
        "elements": [elem(e) for e in layout.elements],
        "containers": [
            {
                "id": c.id, "kind": c.kind,
                "cx": c.rect.cx, "cy": c.rect.cy, "w": c.rect.w, "h": c.rect.h,
                "member_ids": list(c.member_ids),
            }
            for c in layout.containers
        ],
    }


def layout_from_dict(data: dict) -> Layout:
    try:
        screen = ScreenSpec(int(data["screen"]["width_px"]), int(data["screen"]["height_px"]))
        elements = []
        for d in data["elements"]:
            elements.append(UiElement(
                id=str(d["id"]), kind=str(d["kind"]), label=str(d["label"]),
                rect=Rect(float(d["cx"]), float(d["cy"]), float(d["w"]), float(d["h"])),
                orientation=str(d.get("orientation", "none")),
                container_id=d.get("container_id"),
                aspect_ratio=(float(d["aspect_ratio"]) if d.get("aspect_ratio") is not None else None),
                label_salience=int(d.get("label_salience", 1)),
            ))
        containers = []
        for d in data.get("containers", []):
            containers.append(GroupContainer(
                id=str(d["id"]), kind=str(d["kind"]),
                rect=Rect(float(d["cx"]), float(d["cy"]), float(d["w"]), float(d["h"])),
                member_ids=[str(m) for m in d["member_ids"]],
            ))
    except (KeyError, TypeError, ValueError) as exc:
        raise LayoutSchemaError(f"bad layout JSON: {exc}") from exc
    return Layout(screen=screen, elements=elements, containers=containers)


def save_layout(layout: Layout, path) -> None:
    with open(path, "w") as fh:
        json.dump(layout_to_dict(layout), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_layout(path) -> Layout:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LayoutSchemaError(f"bad layout JSON: {exc}") from exc
    return layout_from_dict(data)

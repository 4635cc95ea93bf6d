"""Synthetic crowd of virtual users standing in for a live study.

Each virtual user works through a task sequence on a layout; per-step times
come from a pointing law plus a visual-search term that decays as the user
revisits a target. Per-task times across users are outlier-filtered and
folded together with error fractions into a single observed metric, which
is what the performance model trains against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .layout import Layout
from .model import TrainingExample

DEFAULT_SEVERE_IDS = frozenset({"save-btn", "cancel-btn", "get-recipe-btn"})

MINOR_ERROR_WEIGHT = 0.5
SEVERE_ERROR_WEIGHT = 0.8
MAD_K = 1.5


class OracleError(Exception):
    pass


class DatasetSchemaError(OracleError):
    """Dataset JSON-lines file does not match the expected schema."""


@dataclass
class OracleProfile:
    """Knobs of the simulated human: pointing, search, learning, errors."""

    fitts_a: float = 100.0           # ms, reaction intercept
    fitts_b: float = 150.0           # ms per bit of pointing difficulty
    search_base: float = 40.0        # ms per candidate element scanned
    learning_decay: float = 0.6      # search falloff per prior visit
    learning_floor: float = 0.3      # fraction of search that never goes away
    min_comfort_size: float = 0.06   # below this width mis-taps pass 50%
    error_k: float = 60.0            # steepness of the size -> error curve
    handed_penalty: float = 80.0     # ms for targets on the far side
    noise_sigma: float = 0.15        # lognormal spread on every step
    age_slowdown: float = 0.05       # slowdown fraction per decade over 30

    def __post_init__(self):
        for name in ("fitts_a", "fitts_b", "learning_decay", "min_comfort_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("search_base", "error_k", "handed_penalty",
                     "noise_sigma", "age_slowdown"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must not be negative")
        if not 0.0 < self.learning_floor <= 1.0:
            raise ValueError("learning_floor must be in (0, 1]")


@dataclass
class VirtualUser:
    seed: int
    left_handed: bool = False
    age_years: float = 37.7
    speed_factor: float = 1.0

    def __post_init__(self):
        if self.speed_factor <= 0:
            raise ValueError("speed_factor must be positive")


@dataclass
class SessionState:
    """Where the hand is and what the user has already found."""

    point: tuple = (0.5, 0.5)
    visits: dict = field(default_factory=dict)


def draw_users(n_users: int, seed: int = 0, frac_left_handed: float = 0.1,
               avg_age_years: float = 37.7, age_sd: float = 12.0,
               speed_sigma: float = 0.1) -> list:
    """Sample a panel of users around the population demographics."""
    rng = np.random.default_rng(seed)
    users = []
    for i in range(n_users):
        left = bool(rng.random() < frac_left_handed)
        age = float(np.clip(rng.normal(avg_age_years, age_sd), 18.0, 85.0))
        speed = float(rng.lognormal(0.0, speed_sigma))
        users.append(VirtualUser(seed=seed + i, left_handed=left,
                                 age_years=age, speed_factor=speed))
    return users


def age_factor(user: VirtualUser, profile: OracleProfile) -> float:
    decades_over = max(0.0, (user.age_years - 30.0) / 10.0)
    return 1.0 + profile.age_slowdown * decades_over


def mis_tap_probability(width: float, profile: OracleProfile) -> float:
    """Chance of slipping off a target of the given effective width."""
    return float(expit(profile.error_k * (profile.min_comfort_size - width)))


def _slide_geometry(rect, orientation, slide_range):
    lo, hi = slide_range if slide_range is not None else (0.25, 0.75)
    mid = 0.5 * (lo + hi)
    if orientation == "horizontal":
        horizontal = True
    elif orientation == "vertical":
        horizontal = False
    else:
        horizontal = rect.w >= rect.h
    if horizontal:
        return (rect.left + mid * rect.w, rect.cy), (hi - lo) * rect.w
    return (rect.cx, rect.top + mid * rect.h), (hi - lo) * rect.h


def _step_geometry(layout: Layout, step):
    """Point the user must hit and the effective width they must land in."""
    if step.interaction == "slide":
        el = layout.element(step.destination_id)
        return _slide_geometry(el.rect, el.orientation, step.slide_range) \
            + (step.destination_id,)
    if step.interaction == "drag-and-drop":
        rect = layout.element(step.destination_id).rect
        return (rect.cx, rect.cy), min(rect.w, rect.h), step.destination_id
    rect = layout.element(step.target_id).rect
    return (rect.cx, rect.cy), min(rect.w, rect.h), step.target_id


def simulate_step(layout: Layout, step, user: VirtualUser,
                  state: SessionState, profile: OracleProfile = None,
                  rng=None, severe_ids=DEFAULT_SEVERE_IDS):
    """One interaction: returns (time_ms, minor_error, severe_error).

    Advances the session state: the hand moves to the step's landing point
    and the visit count of the element just found goes up by one.
    """
    profile = profile or OracleProfile()
    rng = rng if rng is not None else np.random.default_rng(user.seed)
    (tx, ty), width, found_id = _step_geometry(layout, step)

    px, py = state.point
    distance = math.hypot(tx - px, ty - py)
    pointing = profile.fitts_a + profile.fitts_b * math.log2(distance / width + 1.0)

    visits = state.visits.get(found_id, 0)
    decay = max(profile.learning_floor, math.exp(-profile.learning_decay * visits))
    search = profile.search_base * len(layout.elements) * decay

    far_side = (tx > 0.5) if user.left_handed else (tx < 0.5)
    handed = profile.handed_penalty if far_side else 0.0

    noise = rng.lognormal(0.0, profile.noise_sigma)
    time_ms = (user.speed_factor * age_factor(user, profile)
               * (search + pointing + handed) * noise)

    mis_tap = bool(rng.random() < mis_tap_probability(width, profile))
    severe = mis_tap and found_id in severe_ids
    minor = mis_tap and not severe

    state.point = (tx, ty)
    state.visits[found_id] = visits + 1
    return float(time_ms), minor, severe


def simulate_sequence(layout: Layout, seq, user: VirtualUser,
                      profile: OracleProfile = None, rng=None,
                      severe_ids=DEFAULT_SEVERE_IDS):
    """One user's full run: per-task (times_ms, minor_flags, severe_flags)."""
    profile = profile or OracleProfile()
    rng = rng if rng is not None else np.random.default_rng(user.seed)
    state = SessionState()
    times = np.zeros(len(seq.tasks))
    minors = np.zeros(len(seq.tasks), dtype=bool)
    severes = np.zeros(len(seq.tasks), dtype=bool)
    for t, task in enumerate(seq.tasks):
        for step in task.steps:
            dt, minor, severe = simulate_step(
                layout, step, user, state, profile, rng, severe_ids)
            times[t] += dt
            minors[t] |= minor
            severes[t] |= severe
    return times, minors, severes


def mad_filter(values, k: float = MAD_K):
    """Drop values beyond k median-absolute-deviations from the median."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("mad_filter needs at least one value")
    med = float(np.median(v))
    mad = float(np.median(np.abs(v - med)))
    if mad == 0.0:
        return v[np.abs(v - med) <= 1e-9]
    return v[np.abs(v - med) <= k * mad]


def task_metric(avg_time: float, frac_minor: float, frac_severe: float) -> float:
    """Average correct-completion time inflated by the error fractions."""
    if avg_time <= 0:
        raise ValueError("avg_time must be positive")
    for frac in (frac_minor, frac_severe):
        if not 0.0 <= frac <= 1.0:
            raise ValueError("error fractions must be in [0, 1]")
    return avg_time * (1.0 + MINOR_ERROR_WEIGHT * frac_minor
                       + SEVERE_ERROR_WEIGHT * frac_severe)


def aggregate_task(times, minors, severes, k: float = MAD_K):
    """Fold per-user results for one task into (metric, fracs, n_retained).

    Error runs are excluded from the time average; if every user erred the
    average falls back to the full set so the metric stays defined.
    """
    times = np.asarray(times, dtype=np.float64)
    minors = np.asarray(minors, dtype=bool)
    severes = np.asarray(severes, dtype=bool)
    clean = times[~(minors | severes)]
    kept = mad_filter(clean if clean.size else times, k=k)
    frac_minor = float(minors.mean())
    frac_severe = float(severes.mean())
    metric = task_metric(float(kept.mean()), frac_minor, frac_severe)
    return metric, frac_minor, frac_severe, int(kept.size)


@dataclass
class TaskRecord:
    layout_id: str
    task_index: int
    target_id: str
    trial_index: int
    metric_ms: float
    frac_minor: float
    frac_severe: float
    n_retained: int


@dataclass
class Dataset:
    """Observed task metrics for a batch of layouts under one sequence."""

    records: list = field(default_factory=list)
    n_users: int = 0

    def __post_init__(self):
        for r in self.records:
            if not (math.isfinite(r.metric_ms) and r.metric_ms > 0):
                raise OracleError(f"bad metric for {r.layout_id}/{r.task_index}")

    def layout_ids(self) -> list:
        seen = []
        for r in self.records:
            if r.layout_id not in seen:
                seen.append(r.layout_id)
        return seen

    def metrics_for(self, layout_id: str) -> np.ndarray:
        rows = sorted((r.task_index, r.metric_ms) for r in self.records
                      if r.layout_id == layout_id)
        if not rows:
            raise KeyError(layout_id)
        return np.array([m for _, m in rows])


def simulate_dataset(layouts, sequence, n_users: int, seed: int = 0,
                     profile: OracleProfile = None, layout_ids=None,
                     severe_ids=DEFAULT_SEVERE_IDS) -> Dataset:
    """Run the same user panel over every layout and aggregate per task.

    layouts: list of Layout (optionally named via layout_ids). The panel is
    drawn once from the sequence demographics, so layout differences are
    paired across users.
    """
    if n_users < 3:
        raise ValueError("need at least 3 users per task")
    profile = profile or OracleProfile()
    if layout_ids is None:
        layout_ids = [f"layout-{i:03d}" for i in range(len(layouts))]
    if len(layout_ids) != len(layouts):
        raise ValueError("layout_ids must match layouts")
    users = draw_users(n_users, seed=seed,
                       frac_left_handed=sequence.frac_left_handed,
                       avg_age_years=sequence.avg_age_years)
    records = []
    for li, (lid, layout) in enumerate(zip(layout_ids, layouts)):
        runs = []
        for ui, user in enumerate(users):
            rng = np.random.default_rng((seed, li, ui, 9973))
            runs.append(simulate_sequence(layout, sequence, user,
                                          profile, rng, severe_ids))
        times = np.stack([r[0] for r in runs])
        minors = np.stack([r[1] for r in runs])
        severes = np.stack([r[2] for r in runs])
        for t, task in enumerate(sequence.tasks):
            metric, fm, fs, n_kept = aggregate_task(
                times[:, t], minors[:, t], severes[:, t])
            records.append(TaskRecord(
                layout_id=lid, task_index=t, target_id=task.target_id,
                trial_index=task.trial_index, metric_ms=metric,
                frac_minor=fm, frac_severe=fs, n_retained=n_kept))
    return Dataset(records=records, n_users=n_users)


def training_examples(dataset: Dataset, layouts: dict, sequence,
                      table=None) -> list:
    """Bridge a dataset to model training: one example per layout.

    layouts maps layout_id -> Layout. The single observation row per layout
    is the aggregated metric, paired with the population demographics.
    """
    out = []
    tail = (sequence.frac_left_handed, sequence.avg_age_years)
    for lid in dataset.layout_ids():
        metrics = dataset.metrics_for(lid)
        if metrics.shape[0] != len(sequence.tasks):
            raise OracleError(f"{lid}: {metrics.shape[0]} records for "
                              f"{len(sequence.tasks)} tasks")
        out.append(TrainingExample.build(
            layouts[lid], sequence, user_tails=[tail],
            observed_ms=metrics[None, :], table=table, name=lid))
    return out


# ---------------------------------------------------------------------------
# JSON-lines persistence

_RECORD_FIELDS = ("layout_id", "task_index", "target_id", "trial_index",
                  "metric_ms", "frac_minor", "frac_severe", "n_retained")


def save_dataset(dataset: Dataset, path) -> None:
    lines = []
    for r in dataset.records:
        lines.append(json.dumps({name: getattr(r, name)
                                 for name in _RECORD_FIELDS}, sort_keys=True))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    records = []
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                blob = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetSchemaError(f"line {ln}: {exc}") from None
            if not isinstance(blob, dict) or set(blob) != set(_RECORD_FIELDS):
                raise DatasetSchemaError(f"line {ln}: unexpected fields")
            try:
                records.append(TaskRecord(**blob))
            except TypeError as exc:
                raise DatasetSchemaError(f"line {ln}: {exc}") from None
    return Dataset(records=records)

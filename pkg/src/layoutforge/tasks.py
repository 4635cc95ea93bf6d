"""Deterministic task sequences for the two built-in apps.

A task is a short goal ("drag the star sticker onto the left zone") expanded
into one or two interaction steps. Sequence builders cycle deterministically
through targets so that at full scale every interactive element is exercised
at least five times; a seed only varies slide ranges, drop-zone order per
photo, and similar flavoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

INTERACTIONS = ("tap", "acquire", "drag-and-drop", "slide")

# task_type codes: 1 slider adjust, 2 two-tap select, 3 plain tap,
# 4 drag-and-drop, 5 undo-style tap
TASK_TYPES = (1, 2, 3, 4, 5)


class TaskError(Exception):
    pass


class MissingDestination(TaskError):
    """Task shape requires a destination/second target and none was given."""


class TaskSchemaError(TaskError):
    """Task sequence JSON does not match the expected schema."""


@dataclass
class TaskStep:
    interaction: str
    target_id: str
    step_index: int
    total_steps: int
    destination_id: Optional[str] = None
    slide_range: Optional[tuple] = None

    def __post_init__(self):
        if self.interaction not in INTERACTIONS:
            raise TaskSchemaError(f"bad interaction {self.interaction!r}")
        if self.step_index < 1 or self.step_index > self.total_steps:
            raise TaskSchemaError("step_index out of range")
        needs_dest = self.interaction in ("drag-and-drop", "slide")
        if needs_dest and self.destination_id is None:
            raise MissingDestination(self.interaction)
        if not needs_dest and self.destination_id is not None:
            raise TaskSchemaError("destination on a non-drag step")


@dataclass
class Task:
    task_type: int
    steps: list
    trial_index: int = 0

    @property
    def target_id(self) -> str:
        return self.steps[-1].target_id


@dataclass
class TaskSequence:
    tasks: list = field(default_factory=list)
    frac_left_handed: float = 0.1
    avg_age_years: float = 37.7

    def __len__(self):
        return len(self.tasks)

    def referenced_ids(self) -> set:
        out = set()
        for t in self.tasks:
            for s in t.steps:
                out.add(s.target_id)
                if s.destination_id is not None:
                    out.add(s.destination_id)
        return out


def expand_steps(task_type: int, target: str, destination: Optional[str] = None,
                 slide_range: Optional[tuple] = None) -> list:
    """Expand a task shape into its interaction steps.

    Types 3 and 5 are single taps. Type 2 is two taps; the second target is
    passed in the destination slot. Types 1 and 4 start with target
    acquisition, then a slide or a drag to the destination.
    """
    if task_type in (3, 5):
        return [TaskStep("tap", target, 1, 1)]
    if task_type == 2:
        if destination is None:
            raise MissingDestination("two-tap task needs a second target")
        return [TaskStep("tap", target, 1, 2), TaskStep("tap", destination, 2, 2)]
    if task_type == 4:
        if destination is None:
            raise MissingDestination("drag task needs a drop destination")
        return [
            TaskStep("acquire", target, 1, 2),
            TaskStep("drag-and-drop", target, 2, 2, destination_id=destination),
        ]
    if task_type == 1:
        if destination is None:
            raise MissingDestination("slide task needs the slider as destination")
        return [
            TaskStep("acquire", target, 1, 2),
            TaskStep("slide", target, 2, 2, destination_id=destination,
                     slide_range=slide_range),
        ]
    raise TaskSchemaError(f"unknown task_type {task_type}")


class _Cycler:
    """Round-robin over a fixed option list; a shared global counter keeps
    coverage even across the whole sequence."""

    def __init__(self, options):
        self.options = list(options)
        self.i = 0

    def next(self):
        out = self.options[self.i % len(self.options)]
        self.i += 1
        return out


def _assign_trial_indices(tasks):
    counts = {}
    for t in tasks:
        key = (t.target_id, t.task_type)
        counts[key] = counts.get(key, 0) + 1
        t.trial_index = counts[key]


_SLIDE_RANGES = ((0.0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.0))

_PHOTO_STICKERS = tuple(f"sticker-{n}" for n in
                        ("star", "heart", "smile", "sun", "moon", "tree"))
_PHOTO_TABS = ("tab-text", "tab-emoji", "tab-filter")
_PHOTO_ZONES = ("drop-a", "drop-b", "drop-c")


def build_photo_editing_sequence(n_photos: int = 20, seed: int = 0,
                                 frac_left_handed: float = 0.1,
                                 avg_age_years: float = 37.7) -> TaskSequence:
    """Per-photo schedule of 14 tasks (slider adjusts, sticker selections,
    taps, drags, an undo) ending in a save-or-cancel tap; every fifth photo
    gains one extra undo. n_photos=20 gives 284 tasks total.

    The drop-zone order is reshuffled for each photo from the seed.
    """
    if n_photos < 1:
        raise TaskSchemaError("n_photos must be >= 1")
    rng = np.random.default_rng(seed)
    stickers = _Cycler(_PHOTO_STICKERS)
    tabs = _Cycler(_PHOTO_TABS)
    taps = _Cycler(("upload-btn",) + _PHOTO_TABS)
    tasks = []

    def slider_task():
        lo, hi = _SLIDE_RANGES[rng.integers(0, len(_SLIDE_RANGES))]
        return Task(1, expand_steps(1, "brightness-slider", "brightness-slider",
                                    slide_range=(lo, hi)))

    for p in range(n_photos):
        zone_order = [_PHOTO_ZONES[i] for i in rng.permutation(len(_PHOTO_ZONES))]
        zones = _Cycler(zone_order)
        schedule = [
            Task(2, expand_steps(2, tabs.next(), stickers.next())),
            slider_task(),
            Task(3, expand_steps(3, taps.next())),
            Task(4, expand_steps(4, stickers.next(), zones.next())),
            slider_task(),
            Task(3, expand_steps(3, taps.next())),
            Task(4, expand_steps(4, stickers.next(), zones.next())),
            Task(2, expand_steps(2, tabs.next(), stickers.next())),
            Task(5, expand_steps(5, "undo-btn")),
            slider_task(),
            Task(4, expand_steps(4, stickers.next(), zones.next())),
            Task(3, expand_steps(3, taps.next())),
            Task(5, expand_steps(5, "undo-btn")),
        ]
        if p % 5 == 2:
            schedule.append(Task(5, expand_steps(5, "undo-btn")))
        commit = "cancel-btn" if p % 4 == 3 else "save-btn"
        schedule.append(Task(3, expand_steps(3, commit)))
        tasks.extend(schedule)

    _assign_trial_indices(tasks)
    return TaskSequence(tasks=tasks, frac_left_handed=frac_left_handed,
                        avg_age_years=avg_age_years)


_RECIPE_INGREDIENTS = tuple(f"ingredient-{n}" for n in
                            ("bread", "rice", "apple", "banana", "carrot", "pea"))
_RECIPE_TABS = ("tab-grains", "tab-fruits", "tab-veggies")
_RECIPE_BINS = ("like-bin", "dislike-bin")


def build_recipe_sequence(seed: int = 0, n_rounds: int = 8,
                          frac_left_handed: float = 0.1,
                          avg_age_years: float = 37.7) -> TaskSequence:
    """Recipe-browser sequence: 8 rounds of 17 tasks (drags of ingredient
    stickers to the like/dislike bins, open-then-drag two-step tasks, tab
    taps, undo/back taps, and a Get Recipe tap) for 136 tasks total."""
    rng = np.random.default_rng(seed)
    ingredients = _Cycler(_RECIPE_INGREDIENTS)
    tabs = _Cycler(_RECIPE_TABS)
    bins = _Cycler(_RECIPE_BINS)
    undoish = _Cycler(("undo-btn", "back-btn"))
    tasks = []
    for _ in range(n_rounds):
        round_tasks = []
        for _ in range(6):
            round_tasks.append(Task(4, expand_steps(4, ingredients.next(), bins.next())))
        for _ in range(4):
            # two-step: open a category, then drag an ingredient to a bin
            tab = tabs.next()
            ing = ingredients.next()
            dest = bins.next()
            round_tasks.append(Task(2, [
                TaskStep("tap", tab, 1, 2),
                TaskStep("drag-and-drop", ing, 2, 2, destination_id=dest),
            ]))
        for _ in range(4):
            round_tasks.append(Task(3, expand_steps(3, tabs.next())))
        for _ in range(2):
            round_tasks.append(Task(5, expand_steps(5, undoish.next())))
        # task order within a round is the seeded part; the commit tap stays last
        order = rng.permutation(len(round_tasks))
        tasks.extend(round_tasks[i] for i in order)
        tasks.append(Task(3, expand_steps(3, "get-recipe-btn")))
    _assign_trial_indices(tasks)
    return TaskSequence(tasks=tasks, frac_left_handed=frac_left_handed,
                        avg_age_years=avg_age_years)


# ---------------------------------------------------------------------------
# JSON serialization


def sequence_to_dict(seq: TaskSequence) -> dict:
    def step(s: TaskStep) -> dict:
        d = {
            "interaction": s.interaction,
            "target_id": s.target_id,
            "step_index": s.step_index,
            "total_steps": s.total_steps,
        }
        if s.destination_id is not None:
            d["destination_id"] = s.destination_id
        if s.slide_range is not None:
            d["slide_range"] = [s.slide_range[0], s.slide_range[1]]
        return d

    return {
        "demographics": {
            "frac_left_handed": seq.frac_left_handed,
            "avg_age_years": seq.avg_age_years,
        },
        "tasks": [
            {"task_type": t.task_type, "steps": [step(s) for s in t.steps],
             "trial_index": t.trial_index}
            for t in seq.tasks
        ],
    }


def sequence_from_dict(data: dict) -> TaskSequence:
    try:
        demo = data["demographics"]
        tasks = []
        for td in data["tasks"]:
            steps = []
            for sd in td["steps"]:
                sr = sd.get("slide_range")
                steps.append(TaskStep(
                    interaction=str(sd["interaction"]),
                    target_id=str(sd["target_id"]),
                    step_index=int(sd["step_index"]),
                    total_steps=int(sd["total_steps"]),
                    destination_id=sd.get("destination_id"),
                    slide_range=(float(sr[0]), float(sr[1])) if sr else None,
                ))
            if not steps:
                raise TaskSchemaError("task with no steps")
            tasks.append(Task(task_type=int(td["task_type"]), steps=steps,
                              trial_index=int(td.get("trial_index", 0))))
        seq = TaskSequence(
            tasks=tasks,
            frac_left_handed=float(demo["frac_left_handed"]),
            avg_age_years=float(demo["avg_age_years"]),
        )
    except MissingDestination:
        raise
    except TaskSchemaError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise TaskSchemaError(f"bad task sequence JSON: {exc}") from exc
    return seq


def save_sequence(seq: TaskSequence, path) -> None:
    with open(path, "w") as fh:
        json.dump(sequence_to_dict(seq), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_sequence(path) -> TaskSequence:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TaskSchemaError(f"bad task sequence JSON: {exc}") from exc
    return sequence_from_dict(data)

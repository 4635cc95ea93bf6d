"""Numeric features for (layout, task step, demographics) triples.

Every encodable element becomes a 27-component row; the task itself
contributes an 8-component tail appended to the sequence embedding
downstream. Layout order is top-down then left-right, so the row order
itself carries spatial structure.
"""

from __future__ import annotations

import json

import numpy as np

from .layout import KINDS, ORIENTATIONS, Layout, order_elements
from .tasks import INTERACTIONS, TaskStep

ROW_WIDTH = 27
TAIL_WIDTH = 8

# row component slices
IDX_TARGET = slice(0, 3)
IDX_SALIENCE = 3
IDX_EMBED = slice(4, 8)
IDX_RECT = slice(8, 12)
IDX_ORIENT = slice(12, 15)
IDX_CONTAINER = slice(15, 19)
IDX_KIND = slice(19, 27)

EMBED_DIM = 4
STEP_NORM_CAP = 4.0


class UnknownLabel(Exception):
    """Label word absent from the embedding vocabulary."""


# semantic clusters pull related words together so label similarity carries
# meaning; everything else gets an independent direction
_CLUSTERS = {
    "sticker": ("star", "heart", "smile", "sun", "moon", "tree"),
    "action": ("save", "cancel", "undo", "upload", "back", "recipe"),
    "mode": ("text", "emoji", "filter"),
    "ingredient": ("bread", "rice", "apple", "banana", "carrot", "pea", "pear"),
    "category": ("grains", "fruits", "veggies"),
    "bin": ("like", "dislike"),
}
_SOLO_WORDS = ("photo", "zone", "brightness")

_EMBED_SEED = 70119


def default_vocabulary() -> list:
    vocab = []
    for words in _CLUSTERS.values():
        vocab.extend(words)
    vocab.extend(_SOLO_WORDS)
    return sorted(vocab)


class EmbeddingTable:
    """word -> deterministic 4-component unit vector.

    Built from seeded random directions plus a shared offset per semantic
    cluster, so words in a cluster stay mutually similar.
    """

    def __init__(self, vectors: dict):
        self.vectors = {w: np.asarray(v, dtype=np.float64) for w, v in vectors.items()}
        self.max_word_length = max(len(w) for w in self.vectors)

    @classmethod
    def build(cls, seed: int = _EMBED_SEED) -> "EmbeddingTable":
        rng = np.random.default_rng(seed)

        def unit(v):
            return v / np.linalg.norm(v)

        vectors = {}
        for _, words in sorted(_CLUSTERS.items()):
            center = unit(rng.standard_normal(EMBED_DIM))
            for w in words:
                vectors[w] = unit(1.0 * center + 0.45 * unit(rng.standard_normal(EMBED_DIM)))
        for w in _SOLO_WORDS:
            vectors[w] = unit(rng.standard_normal(EMBED_DIM))
        return cls(vectors)

    def embed(self, word: str) -> np.ndarray:
        try:
            return self.vectors[word.lower()]
        except KeyError:
            raise UnknownLabel(word) from None

    def similarity(self, a: str, b: str) -> float:
        return float(np.dot(self.embed(a), self.embed(b)))

    def to_dict(self) -> dict:
        return {w: [float(x) for x in v] for w, v in sorted(self.vectors.items())}

    @classmethod
    def from_dict(cls, data: dict) -> "EmbeddingTable":
        return cls({str(w): [float(x) for x in v] for w, v in data.items()})

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


_default_table = None


def default_table() -> EmbeddingTable:
    global _default_table
    if _default_table is None:
        _default_table = EmbeddingTable.build()
    return _default_table


def embed_label(word: str, table: EmbeddingTable = None) -> np.ndarray:
    return (table or default_table()).embed(word)


def salience_norm(label_salience: int, table: EmbeddingTable = None) -> float:
    """Map salience (a length proxy) linearly onto [-1, 1]; the longest
    vocabulary word maps to exactly 1."""
    table = table or default_table()
    cap = table.max_word_length
    s = min(max(int(label_salience), 0), cap)
    return 2.0 * s / cap - 1.0


def element_features(element, step: TaskStep, layout: Layout,
                     table: EmbeddingTable = None) -> np.ndarray:
    """27-component row for one element under one interaction step."""
    table = table or default_table()
    row = np.zeros(ROW_WIDTH)
    if element.id == step.target_id:
        row[0] = 1.0
    elif step.destination_id is not None and element.id == step.destination_id:
        row[1] = 1.0
    else:
        row[2] = 1.0
    row[IDX_SALIENCE] = salience_norm(element.label_salience, table)
    row[IDX_EMBED] = table.embed(element.label)
    r = element.rect
    row[IDX_RECT] = (r.cx, r.cy, r.w, r.h)
    row[IDX_ORIENT.start + ORIENTATIONS.index(element.orientation)] = 1.0
    if element.container_id is not None:
        cr = layout.find_rect(element.container_id)
        row[IDX_CONTAINER] = (cr.cx, cr.cy, cr.w, cr.h)
    row[IDX_KIND.start + KINDS.index(element.kind)] = 1.0
    return row


def step_matrix(layout: Layout, step: TaskStep,
                table: EmbeddingTable = None) -> np.ndarray:
    """Rows for every encodable element, top-down left-right."""
    table = table or default_table()
    return np.stack([element_features(e, step, layout, table)
                     for e in order_elements(layout)])


def task_tail(step: TaskStep, frac_left_handed: float,
              avg_age_years: float) -> np.ndarray:
    """8 components: interaction one-hot, step/total normalized by a cap of
    4, handedness fraction, age scaled by 100."""
    tail = np.zeros(TAIL_WIDTH)
    tail[INTERACTIONS.index(step.interaction)] = 1.0
    tail[4] = step.step_index / STEP_NORM_CAP
    tail[5] = step.total_steps / STEP_NORM_CAP
    tail[6] = frac_left_handed
    tail[7] = avg_age_years / 100.0
    return tail


def sequence_steps(seq) -> list:
    """Flatten a TaskSequence to (task, step) pairs in execution order."""
    return [(t, s) for t in seq.tasks for s in t.steps]


def sequence_features(layout: Layout, seq, table: EmbeddingTable = None,
                      frac_left_handed: float = None,
                      avg_age_years: float = None):
    """Feature tensors for a whole sequence.

    Returns (rows, tails): rows has shape (S, N, 27) for S interaction steps
    over N elements; tails has shape (S, 8). Demographics default to the
    sequence's own.
    """
    table = table or default_table()
    flh = seq.frac_left_handed if frac_left_handed is None else frac_left_handed
    age = seq.avg_age_years if avg_age_years is None else avg_age_years
    rows = []
    tails = []
    for _, step in sequence_steps(seq):
        rows.append(step_matrix(layout, step, table))
        tails.append(task_tail(step, flh, age))
    return np.stack(rows), np.stack(tails)

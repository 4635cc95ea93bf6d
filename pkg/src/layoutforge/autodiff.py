"""Reverse-mode autodiff over dense float64 arrays.

A Tape records nodes in creation order, which is already a topological
order, so backward is a single reversed sweep. Every op here has a twin
behaviour: given plain numpy inputs it just computes numpy (used for cheap
inference and finite differences), given Nodes it records the backward
closure. Model code is written once against these functions and runs on
either representation.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class ShapeMismatch(Exception):
    pass


class CycleDetected(Exception):
    """Graphs recorded append-only cannot cycle; kept for API completeness."""


class Node:
    __slots__ = ("value", "grad", "parents", "_backward")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.parents = parents
        self._backward = None

    def __repr__(self):
        return f"Node(shape={self.value.shape})"


class Tape:
    """One forward evaluation's node list; backward sweeps it in reverse."""

    def __init__(self):
        self.nodes = []

    def leaf(self, value) -> Node:
        node = Node(value)
        self.nodes.append(node)
        return node

    def _record(self, value, parents, backward) -> Node:
        node = Node(value, parents)
        node._backward = backward
        self.nodes.append(node)
        return node

    def backward(self, root: Node) -> None:
        if root.value.shape != ():
            raise ShapeMismatch("backward root must be scalar")
        root.grad = np.ones_like(root.value)
        for node in reversed(self.nodes):
            if node._backward is not None:
                node._backward(node.grad)


def is_node(x) -> bool:
    return isinstance(x, Node)


def value_of(x):
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original shape."""
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# ops; every one takes the tape first when any input is a Node


def add(tape, a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    if not (is_node(a) or is_node(b)):
        return out

    def backward(g):
        if is_node(a):
            a.grad += _unbroadcast(g, av.shape)
        if is_node(b):
            b.grad += _unbroadcast(g, bv.shape)
    return tape._record(out, (a, b), backward)


def sub(tape, a, b):
    av, bv = value_of(a), value_of(b)
    out = av - bv
    if not (is_node(a) or is_node(b)):
        return out

    def backward(g):
        if is_node(a):
            a.grad += _unbroadcast(g, av.shape)
        if is_node(b):
            b.grad -= _unbroadcast(g, bv.shape)
    return tape._record(out, (a, b), backward)


def mul(tape, a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv
    if not (is_node(a) or is_node(b)):
        return out

    def backward(g):
        if is_node(a):
            a.grad += _unbroadcast(g * bv, av.shape)
        if is_node(b):
            b.grad += _unbroadcast(g * av, bv.shape)
    return tape._record(out, (a, b), backward)


def scale(tape, a, k: float):
    av = value_of(a)
    out = av * k
    if not is_node(a):
        return out

    def backward(g):
        a.grad += g * k
    return tape._record(out, (a,), backward)


def matmul(tape, a, b):
    """a @ b for (m,)@(m,n), (B,m)@(m,n) and (B,m)@(m,)."""
    av, bv = value_of(a), value_of(b)
    if av.shape[-1] != bv.shape[0]:
        raise ShapeMismatch(f"matmul {av.shape} @ {bv.shape}")
    out = av @ bv
    if not (is_node(a) or is_node(b)):
        return out

    def backward(g):
        if av.ndim == 1 and bv.ndim == 2:
            if is_node(a):
                a.grad += g @ bv.T
            if is_node(b):
                b.grad += np.outer(av, g)
        elif av.ndim == 2 and bv.ndim == 2:
            if is_node(a):
                a.grad += g @ bv.T
            if is_node(b):
                b.grad += av.T @ g
        elif av.ndim == 2 and bv.ndim == 1:
            if is_node(a):
                a.grad += np.outer(g, bv)
            if is_node(b):
                b.grad += av.T @ g
        else:
            raise ShapeMismatch(f"matmul backward {av.shape} @ {bv.shape}")
    return tape._record(out, (a, b), backward)


def sigmoid(tape, a):
    av = value_of(a)
    out = expit(av)
    if not is_node(a):
        return out

    def backward(g):
        a.grad += g * out * (1.0 - out)
    return tape._record(out, (a,), backward)


def tanh(tape, a):
    av = value_of(a)
    out = np.tanh(av)
    if not is_node(a):
        return out

    def backward(g):
        a.grad += g * (1.0 - out * out)
    return tape._record(out, (a,), backward)


def relu(tape, a):
    av = value_of(a)
    out = np.maximum(0.0, av)
    if not is_node(a):
        return out

    def backward(g):
        a.grad += g * (av > 0.0)
    return tape._record(out, (a,), backward)


def square(tape, a):
    av = value_of(a)
    out = av * av
    if not is_node(a):
        return out

    def backward(g):
        a.grad += g * 2.0 * av
    return tape._record(out, (a,), backward)


def vsum(tape, a):
    """Sum of all entries to a scalar."""
    av = value_of(a)
    out = av.sum()
    if not is_node(a):
        return out

    def backward(g):
        a.grad += g * np.ones_like(av)
    return tape._record(out, (a,), backward)


def mean_all(tape, a):
    av = value_of(a)
    out = av.mean()
    if not is_node(a):
        return out
    n = av.size

    def backward(g):
        a.grad += g * np.ones_like(av) / n
    return tape._record(out, (a,), backward)


def concat1d(tape, parts):
    values = [value_of(p) for p in parts]
    out = np.concatenate(values)
    if not any(is_node(p) for p in parts):
        return out
    offsets = np.cumsum([0] + [v.shape[0] for v in values])

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if is_node(p):
                p.grad += g[lo:hi]
    return tape._record(out, tuple(parts), backward)


def concat_cols(tape, parts):
    """Concatenate 2-D blocks along the column axis."""
    values = [value_of(p) for p in parts]
    out = np.concatenate(values, axis=1)
    if not any(is_node(p) for p in parts):
        return out
    offsets = np.cumsum([0] + [v.shape[1] for v in values])

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if is_node(p):
                p.grad += g[:, lo:hi]
    return tape._record(out, tuple(parts), backward)


def broadcast_rows(tape, a, n: int):
    """Tile a vector into n identical rows."""
    av = value_of(a)
    if av.ndim != 1:
        raise ShapeMismatch("broadcast_rows wants a vector")
    out = np.tile(av, (n, 1))
    if not is_node(a):
        return out

    def backward(g):
        a.grad += g.sum(axis=0)
    return tape._record(out, (a,), backward)


def row(tape, a, i: int):
    av = value_of(a)
    out = av[i]
    if not is_node(a):
        return out

    def backward(g):
        a.grad[i] += g
    return tape._record(out, (a,), backward)


def narrow(tape, a, lo: int, hi: int):
    """Slice along the last axis."""
    av = value_of(a)
    out = av[..., lo:hi]
    if not is_node(a):
        return out

    def backward(g):
        a.grad[..., lo:hi] += g
    return tape._record(out, (a,), backward)


def dropout(tape, a, p: float, rng, train: bool):
    """Inverted dropout: scales kept entries by 1/(1-p) at train time so
    inference is the identity."""
    av = value_of(a)
    if not train or p <= 0.0:
        return a
    mask = (rng.random(av.shape) >= p) / (1.0 - p)
    out = av * mask
    if not is_node(a):
        return out

    def backward(g):
        a.grad += g * mask
    return tape._record(out, (a,), backward)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f, leaves, eps: float = 1e-5):
    """Compare analytic gradients of a scalar function against central
    differences on every entry of every leaf.

    f(xs, tape) must compute the same scalar from xs being the leaf Nodes
    (tape active) or their plain value arrays (tape None); the dual-mode ops
    above make a single implementation serve both calls. Returns the worst
    relative error observed.
    """
    tape = Tape()
    root = f(leaves, tape)
    tape.backward(root)
    analytic = [leaf.grad.copy() for leaf in leaves]

    values = [leaf.value for leaf in leaves]
    worst = 0.0
    for leaf, ga in zip(leaves, analytic):
        flat = leaf.value.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            plus = float(f(values, None))
            flat[i] = keep - eps
            minus = float(f(values, None))
            flat[i] = keep
            numeric = (plus - minus) / (2.0 * eps)
            err = abs(gflat[i] - numeric) / max(abs(gflat[i]) + abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst

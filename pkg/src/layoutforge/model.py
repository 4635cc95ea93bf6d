"""Encoder-predictor network over layout/task features, with training.

Two stacked LSTM layers (23 units) read the element rows of one interaction
step and their final hidden state is that step's embedding. A second stack
(30 units) consumes the embedding stream joined with the task tail, so its
state carries practice effects across the whole sequence. A 28-unit ReLU
layer and a linear head emit one scalar per step; a task's prediction is the
sum over its steps.

Times are modelled in seconds (observed milliseconds are scaled down by
1000); reported predictions are scaled back up to milliseconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .features import (
    ROW_WIDTH,
    TAIL_WIDTH,
    default_table,
    sequence_features,
    sequence_steps,
    task_tail,
)

ENCODER_SIZE = 23
PREDICTOR_SIZE = 30
FF_SIZE = 28
PREDICTOR_INPUT = ENCODER_SIZE + TAIL_WIDTH  # 31
EMBEDDING_DROPOUT = 0.1
FF_DROPOUT = 0.4
MS_PER_UNIT = 1000.0


class ModelError(Exception):
    pass


class EmptyLayout(ModelError):
    pass


class ZeroVariance(ModelError):
    pass


class NonFiniteLoss(ModelError):
    pass


class ModelSchemaError(ModelError):
    pass


# ---------------------------------------------------------------------------
# parameters


def _uniform_init(rng, shape, fan_in):
    k = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)


def _init_lstm(rng, input_size, hidden):
    wx = _uniform_init(rng, (input_size, 4 * hidden), input_size)
    wh = _uniform_init(rng, (hidden, 4 * hidden), hidden)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget gate open at init
    return {"wx": wx, "wh": wh, "b": b}


@dataclass
class ModelParams:
    """All weights as plain float64 arrays, keyed by dotted names."""

    arrays: dict

    _SHAPES = {
        "enc1.wx": (ROW_WIDTH, 4 * ENCODER_SIZE),
        "enc1.wh": (ENCODER_SIZE, 4 * ENCODER_SIZE),
        "enc1.b": (4 * ENCODER_SIZE,),
        "enc2.wx": (ENCODER_SIZE, 4 * ENCODER_SIZE),
        "enc2.wh": (ENCODER_SIZE, 4 * ENCODER_SIZE),
        "enc2.b": (4 * ENCODER_SIZE,),
        "pred1.wx": (PREDICTOR_INPUT, 4 * PREDICTOR_SIZE),
        "pred1.wh": (PREDICTOR_SIZE, 4 * PREDICTOR_SIZE),
        "pred1.b": (4 * PREDICTOR_SIZE,),
        "pred2.wx": (PREDICTOR_SIZE, 4 * PREDICTOR_SIZE),
        "pred2.wh": (PREDICTOR_SIZE, 4 * PREDICTOR_SIZE),
        "pred2.b": (4 * PREDICTOR_SIZE,),
        "ff.w": (PREDICTOR_SIZE, FF_SIZE),
        "ff.b": (FF_SIZE,),
        "head.w": (FF_SIZE,),
        "head.b": (),
    }

    @classmethod
    def init(cls, seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        arrays = {}
        for prefix, inp, hid in (
            ("enc1", ROW_WIDTH, ENCODER_SIZE),
            ("enc2", ENCODER_SIZE, ENCODER_SIZE),
            ("pred1", PREDICTOR_INPUT, PREDICTOR_SIZE),
            ("pred2", PREDICTOR_SIZE, PREDICTOR_SIZE),
        ):
            layer = _init_lstm(rng, inp, hid)
            for k, v in layer.items():
                arrays[f"{prefix}.{k}"] = v
        arrays["ff.w"] = _uniform_init(rng, (PREDICTOR_SIZE, FF_SIZE), PREDICTOR_SIZE)
        arrays["ff.b"] = np.zeros(FF_SIZE)
        arrays["head.w"] = _uniform_init(rng, (FF_SIZE,), FF_SIZE)
        arrays["head.b"] = np.zeros(())
        return cls(arrays)

    def __post_init__(self):
        for name, shape in self._SHAPES.items():
            if name not in self.arrays:
                raise ModelSchemaError(f"missing parameter {name}")
            got = np.asarray(self.arrays[name], dtype=np.float64)
            if got.shape != shape:
                raise ModelSchemaError(
                    f"parameter {name} has shape {got.shape}, want {shape}")
            self.arrays[name] = got

    def names(self):
        return list(self._SHAPES)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()})

    def to_dict(self) -> dict:
        return {
            "format": "layoutforge-model-v1",
            "sizes": {"encoder": ENCODER_SIZE, "predictor": PREDICTOR_SIZE,
                      "feed_forward": FF_SIZE, "row_width": ROW_WIDTH},
            "params": {k: self.arrays[k].tolist() for k in sorted(self.arrays)},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        try:
            if data.get("format") != "layoutforge-model-v1":
                raise ModelSchemaError("unknown model format")
            params = {k: np.asarray(v, dtype=np.float64)
                      for k, v in data["params"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelSchemaError(f"bad model JSON: {exc}") from exc
        return cls(params)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ModelParams":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ModelSchemaError(f"bad model JSON: {exc}") from exc
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# network forward


def lstm_cell(tape, x, h_prev, c_prev, weights):
    """One gated recurrence step; works on vectors or row-batched matrices."""
    wx, wh, b = weights
    hidden = ad.value_of(c_prev).shape[-1]
    z = ad.add(tape, ad.add(tape, ad.matmul(tape, x, wx),
                            ad.matmul(tape, h_prev, wh)), b)
    i = ad.sigmoid(tape, ad.narrow(tape, z, 0, hidden))
    f = ad.sigmoid(tape, ad.narrow(tape, z, hidden, 2 * hidden))
    g = ad.tanh(tape, ad.narrow(tape, z, 2 * hidden, 3 * hidden))
    o = ad.sigmoid(tape, ad.narrow(tape, z, 3 * hidden, 4 * hidden))
    c = ad.add(tape, ad.mul(tape, f, c_prev), ad.mul(tape, i, g))
    h = ad.mul(tape, o, ad.tanh(tape, c))
    return h, c


def _layer_weights(params, prefix):
    return (params[f"{prefix}.wx"], params[f"{prefix}.wh"], params[f"{prefix}.b"])


def _run_encoder(tape, element_inputs, params, train, rng, batch: int):
    """Consume element rows in order; element_inputs[i] is the i-th element's
    features for every step at once, shape (batch, 27). Returns the final
    layer-2 hidden state (batch, 23), with embedding dropout if training."""
    if len(element_inputs) == 0:
        raise EmptyLayout("cannot encode a layout with no elements")
    zeros = np.zeros((batch, ENCODER_SIZE))
    h1, c1 = zeros, zeros
    h2, c2 = zeros, zeros
    w1 = _layer_weights(params, "enc1")
    w2 = _layer_weights(params, "enc2")
    for x in element_inputs:
        h1, c1 = lstm_cell(tape, x, h1, c1, w1)
        h2, c2 = lstm_cell(tape, h1, h2, c2, w2)
    emb = h2
    if train:
        emb = ad.dropout(tape, emb, EMBEDDING_DROPOUT, rng, train=True)
    return emb


def _run_predictor(tape, embeddings, tails, params, train, rng):
    """Step through the sequence keeping recurrent state; embeddings is a
    (steps, 23) node/array, tails a plain (users, steps, 8) array. Returns a
    list over steps of (users,) predictions in model units."""
    n_users, n_steps = tails.shape[0], tails.shape[1]
    zeros = np.zeros((n_users, PREDICTOR_SIZE))
    h1, c1 = zeros, zeros
    h2, c2 = zeros, zeros
    w1 = _layer_weights(params, "pred1")
    w2 = _layer_weights(params, "pred2")
    ff_w, ff_b = params["ff.w"], params["ff.b"]
    head_w, head_b = params["head.w"], params["head.b"]
    outputs = []
    for s in range(n_steps):
        emb_s = ad.row(tape, embeddings, s)
        emb_rows = ad.broadcast_rows(tape, emb_s, n_users)
        x = ad.concat_cols(tape, [emb_rows, tails[:, s, :]])
        h1, c1 = lstm_cell(tape, x, h1, c1, w1)
        h2, c2 = lstm_cell(tape, h1, h2, c2, w2)
        ff = ad.relu(tape, ad.add(tape, ad.matmul(tape, h2, ff_w), ff_b))
        if train:
            ff = ad.dropout(tape, ff, FF_DROPOUT, rng, train=True)
        y = ad.add(tape, ad.matmul(tape, ff, head_w), head_b)
        outputs.append(y)
    return outputs


def forward_sequence(tape, step_inputs, tails, params, train=False, rng=None):
    """Full forward pass.

    step_inputs: list over element positions of (steps, 27) Nodes or arrays.
    tails: (users, steps, 8) plain array. Returns list over steps of (users,)
    predictions (model units).
    """
    batch = ad.value_of(step_inputs[0]).shape[0] if step_inputs else 0
    embeddings = _run_encoder(tape, step_inputs, params, train, rng, batch)
    return _run_predictor(tape, embeddings, tails, params, train, rng)


def encode_task(rows, params, train: bool = False, seed: int = 0):
    """Embedding (23-vector) for one step's element rows, shape (n, 27)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != ROW_WIDTH:
        raise ad.ShapeMismatch(f"want (n, {ROW_WIDTH}) rows, got {rows.shape}")
    if rows.shape[0] == 0:
        raise EmptyLayout("no rows to encode")
    arrays = params.arrays if isinstance(params, ModelParams) else params
    rng = np.random.default_rng(seed)
    inputs = [rows[None, i, :] for i in range(rows.shape[0])]
    emb = _run_encoder(None, inputs, arrays, train, rng, batch=1)
    return np.asarray(emb)[0]


@dataclass
class PredictionResult:
    step_ms: np.ndarray        # per interaction step
    task_ms: np.ndarray        # per task: sum over its steps
    total_ms: float
    task_keys: list            # (target_id, trial_index) per task


def _task_slices(seq):
    """Step index ranges per task, in order."""
    out = []
    i = 0
    for t in seq.tasks:
        out.append((i, i + len(t.steps)))
        i += len(t.steps)
    return out


def predict_sequence(layout, seq, params, train: bool = False, seed: int = 0,
                     table=None) -> PredictionResult:
    """Predicted times for one user working through the sequence."""
    table = table or default_table()
    rows, tails = sequence_features(layout, seq, table)
    arrays = params.arrays if isinstance(params, ModelParams) else params
    rng = np.random.default_rng(seed)
    inputs = [rows[:, i, :] for i in range(rows.shape[1])]
    outputs = forward_sequence(None, inputs, tails[None, :, :], arrays,
                               train=train, rng=rng)
    step_units = np.array([float(np.asarray(y)[0]) for y in outputs])
    step_ms = step_units * MS_PER_UNIT
    task_ms = np.array([step_ms[a:b].sum() for a, b in _task_slices(seq)])
    keys = [(t.target_id, t.trial_index) for t in seq.tasks]
    return PredictionResult(step_ms=step_ms, task_ms=task_ms,
                            total_ms=float(step_ms.sum()), task_keys=keys)


# ---------------------------------------------------------------------------
# loss and metrics


def variance_ratio_loss(predicted, observed) -> float:
    """Squared error normalized by the observed variance; 1 - R^2."""
    p = np.asarray(predicted, dtype=np.float64).ravel()
    o = np.asarray(observed, dtype=np.float64).ravel()
    if p.shape != o.shape or p.size < 2:
        raise ad.ShapeMismatch("need matching sequences of length >= 2")
    den = float(((o - o.mean()) ** 2).sum())
    if den <= 0.0:
        raise ZeroVariance("observed sequence has no variance")
    return float(((o - p) ** 2).sum() / den)


def target_level_r2(predictions, observations, task_keys) -> float:
    """R^2 over (target, trial) group means.

    predictions/observations are flat per-task values; task_keys gives each
    task's (target element id, trial_index). Values from repeated keys (for
    example several users) are averaged within their group first.
    """
    p = np.asarray(predictions, dtype=np.float64).ravel()
    o = np.asarray(observations, dtype=np.float64).ravel()
    if not (len(p) == len(o) == len(task_keys)):
        raise ad.ShapeMismatch("predictions, observations, keys must align")
    groups = {}
    for pi, oi, key in zip(p, o, task_keys):
        groups.setdefault(tuple(key), []).append((pi, oi))
    if len(groups) < 2:
        raise ZeroVariance("need at least two (target, trial) groups")
    pm = np.array([np.mean([v[0] for v in vals]) for vals in groups.values()])
    om = np.array([np.mean([v[1] for v in vals]) for vals in groups.values()])
    den = float(((om - om.mean()) ** 2).sum())
    if den <= 0.0:
        raise ZeroVariance("group means have no variance")
    return float(1.0 - ((om - pm) ** 2).sum() / den)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainingExample:
    """One layout's worth of data: features plus per-user observations."""

    layout: object
    sequence: object
    step_inputs: list          # element-position list of (steps, 27) arrays
    tails: np.ndarray          # (users, steps, 8)
    observed: np.ndarray       # (users, tasks), model units (seconds-ish)
    task_keys: list            # (target_id, trial_index) per task
    name: str = ""

    @classmethod
    def build(cls, layout, seq, user_tails, observed_ms, table=None, name=""):
        """user_tails: list of (frac_left_handed, age); observed_ms (U, T)."""
        table = table or default_table()
        rows, _ = sequence_features(layout, seq, table)
        steps = [s for _, s in sequence_steps(seq)]
        tails = []
        for flh, age in user_tails:
            tails.append(np.stack([task_tail(s, flh, age) for s in steps]))
        observed = np.asarray(observed_ms, dtype=np.float64) / MS_PER_UNIT
        return cls(
            layout=layout, sequence=seq,
            step_inputs=[rows[:, i, :] for i in range(rows.shape[1])],
            tails=np.stack(tails), observed=observed,
            task_keys=[(t.target_id, t.trial_index) for t in seq.tasks],
            name=name,
        )


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 3e-4
    clip_norm: float = 1.0
    seed: int = 0
    val_fraction: float = 1.0 / 6.0


@dataclass
class TrainResult:
    params: ModelParams
    train_history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)
    best_epoch: int = -1


def _example_loss_node(tape, example, arrays, train, rng):
    """Variance-ratio loss across every user and task of one example."""
    outputs = forward_sequence(tape, example.step_inputs, example.tails,
                               arrays, train=train, rng=rng)
    obs = example.observed
    den = float(((obs - obs.mean()) ** 2).sum())
    if den <= 0.0:
        raise ZeroVariance(f"no observed variance in example {example.name!r}")
    slices = _task_slices(example.sequence)
    num = None
    for t, (a, b) in enumerate(slices):
        task_pred = outputs[a]
        for s in range(a + 1, b):
            task_pred = ad.add(tape, task_pred, outputs[s])
        err = ad.vsum(tape, ad.square(tape, ad.sub(tape, task_pred, obs[:, t])))
        num = err if num is None else ad.add(tape, num, err)
    return ad.scale(tape, num, 1.0 / den)


def example_loss(example, params, train=False, rng=None) -> float:
    """Plain evaluation of one example's loss (no tape)."""
    arrays = params.arrays if isinstance(params, ModelParams) else params
    val = _example_loss_node(None, example, arrays, train,
                             rng or np.random.default_rng(0))
    return float(ad.value_of(val))


def global_clip(grads: dict, clip_norm: float) -> dict:
    """Scale the whole gradient set so its joint norm stays at clip_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > clip_norm and total > 0.0:
        k = clip_norm / total
        return {name: g * k for name, g in grads.items()}
    return grads


class AdamState:
    def __init__(self, names):
        self.m = {n: None for n in names}
        self.v = {n: None for n in names}
        self.t = 0

    def step(self, arrays, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.t += 1
        for name, g in grads.items():
            if self.m[name] is None:
                self.m[name] = np.zeros_like(arrays[name])
                self.v[name] = np.zeros_like(arrays[name])
            self.m[name] = beta1 * self.m[name] + (1 - beta1) * g
            self.v[name] = beta2 * self.v[name] + (1 - beta2) * g * g
            m_hat = self.m[name] / (1 - beta1 ** self.t)
            v_hat = self.v[name] / (1 - beta2 ** self.t)
            arrays[name] = arrays[name] - lr * m_hat / (np.sqrt(v_hat) + eps)


def train(dataset: list, config: TrainConfig = None,
          params: ModelParams = None) -> TrainResult:
    """Train on a list of TrainingExamples, one Adam step per layout.

    A seeded 1-in-6 slice of the layouts is held aside for selecting the
    best epoch's parameters; training itself uses the rest.
    """
    config = config or TrainConfig()
    if not dataset:
        raise ModelError("empty dataset")
    rng = np.random.default_rng(config.seed)
    params = params or ModelParams.init(seed=config.seed)
    arrays = {k: v.copy() for k, v in params.arrays.items()}

    order = rng.permutation(len(dataset))
    n_val = max(1, int(round(len(dataset) * config.val_fraction))) \
        if len(dataset) > 1 else 0
    val_idx = [int(i) for i in order[:n_val]]
    train_idx = [int(i) for i in order[n_val:]] or val_idx

    adam = AdamState(list(arrays))
    result = TrainResult(params=ModelParams({k: v.copy() for k, v in arrays.items()}))
    best_val = math.inf

    for epoch in range(config.epochs):
        epoch_rng = np.random.default_rng((config.seed, epoch))
        epoch_losses = []
        for i in epoch_rng.permutation(len(train_idx)):
            example = dataset[train_idx[int(i)]]
            tape = ad.Tape()
            leaves = {name: tape.leaf(arr) for name, arr in arrays.items()}
            node_params = dict(leaves)
            loss = _example_loss_node(tape, example, node_params, True, epoch_rng)
            loss_val = float(loss.value)
            if not math.isfinite(loss_val):
                raise NonFiniteLoss(
                    f"loss became {loss_val} at epoch {epoch} on {example.name!r}")
            epoch_losses.append(loss_val)
            tape.backward(loss)
            grads = {name: leaf.grad for name, leaf in leaves.items()}
            grads = global_clip(grads, config.clip_norm)
            adam.step(arrays, grads, config.learning_rate)
        result.train_history.append(float(np.mean(epoch_losses)))

        if val_idx:
            val_losses = [example_loss(dataset[i], arrays) for i in val_idx]
            val_loss = float(np.mean(val_losses))
        else:
            val_loss = result.train_history[-1]
        result.val_history.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            result.best_epoch = epoch
            result.params = ModelParams({k: v.copy() for k, v in arrays.items()})
    return result

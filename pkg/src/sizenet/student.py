"""The student network: a ReLU MLP with a sigmoid unit, trained with plain SGD.

Hidden widths are 256, 128, 64 and 32, each followed by ReLU and inverted
dropout. The loss is binary cross-entropy scaled per example by the teacher
weight ``w``, and training runs as a curriculum: the most confident examples
first, widening to the full set in nested stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import FormatError, SizeNetError
from .featurizer import ProjectionSpec, Standardizer
from .seeding import rng_for

HIDDEN_DIMS = (256, 128, 64, 32)
EPS = 1e-7
MAGIC = b"SIZENET"
FORMAT_VERSION = 1


@dataclass
class MLPModel:
    weights: list[np.ndarray]  # layer l maps dims[l] -> dims[l+1], shape (fan_in, fan_out)
    biases: list[np.ndarray]
    dropout_rate: float = 0.5
    projection: ProjectionSpec | None = None
    scaler: Standardizer | None = None

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise SizeNetError("model needs one bias vector per weight matrix")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise SizeNetError(f"layer {l}: weight {w.shape} and bias {b.shape} do not match")
            if l and w.shape[0] != self.weights[l - 1].shape[1]:
                raise SizeNetError(f"layer {l}: input width {w.shape[0]} != previous output width")
        if self.weights[-1].shape[1] != 1:
            raise SizeNetError("output layer must have a single unit")
        if not 0 <= self.dropout_rate < 1:
            raise SizeNetError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases interleaved in layer order."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MLPModel":
        return MLPModel(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.dropout_rate,
            self.projection,
            self.scaler,
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 128
    epochs: int = 300
    seed: int = 0
    use_weights: bool = True
    curriculum_fractions: tuple[float, ...] = (1 / 3, 2 / 3, 1.0)
    dropout_rate: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "curriculum_fractions", tuple(float(f) for f in self.curriculum_fractions))
        if not self.learning_rate > 0:
            raise SizeNetError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise SizeNetError("batch_size and epochs must be >= 1")
        fr = self.curriculum_fractions
        if not fr or fr[-1] != 1.0 or any(not 0 < f <= 1 for f in fr):
            raise SizeNetError(f"curriculum fractions must lie in (0, 1] and end at 1: {fr}")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise SizeNetError(f"curriculum fractions must be strictly ascending: {fr}")
        if not 0 <= self.dropout_rate < 1:
            raise SizeNetError("dropout_rate must lie in [0, 1)")


@dataclass(frozen=True)
class LabeledExample:
    features: np.ndarray
    y: int
    w: float
    article: str = ""

    def __post_init__(self):
        if self.w < 0:
            raise SizeNetError(f"example weight must be >= 0, got {self.w}")
        if self.y not in (0, 1):
            raise SizeNetError(f"label must be 0 or 1, got {self.y}")


def init_model(
    input_dim: int,
    dropout_rate: float = 0.5,
    seed: int = 0,
    hidden: Sequence[int] = HIDDEN_DIMS,
    projection: ProjectionSpec | None = None,
) -> MLPModel:
    """He-normal weights (std ``sqrt(2 / fan_in)``), zero biases."""
    if input_dim < 1:
        raise SizeNetError(f"input_dim must be >= 1, got {input_dim}")
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPModel(weights, biases, dropout_rate, projection)


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _as_batch(model: MLPModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise SizeNetError(f"expected features of width {model.input_dim}, got shape {x.shape}")
    return x


def _forward(model: MLPModel, x: np.ndarray, rng: np.random.Generator | None):
    """Forward pass keeping what backprop needs.

    Returns (clamped output, inputs to each layer, dropout multipliers).
    """
    acts = [x]
    keeps = []
    a = x
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        if l == last:
            yhat = np.clip(sigmoid(z[:, 0]), EPS, 1 - EPS)
            return yhat, acts, keeps
        a = np.maximum(z, 0.0)
        if rng is not None and model.dropout_rate > 0:
            keep = (rng.random(a.shape) >= model.dropout_rate) / (1.0 - model.dropout_rate)
            a = a * keep
        else:
            keep = None
        keeps.append(keep)
        acts.append(a)
    raise AssertionError("unreachable")


def forward(model: MLPModel, x, rng: np.random.Generator | None = None) -> np.ndarray:
    """Network output for one vector or a batch.

    With ``rng`` the pass runs in training mode (dropout drawn from ``rng``),
    without it in evaluation mode.
    """
    single = np.asarray(x).ndim == 1
    yhat, _, _ = _forward(model, _as_batch(model, x), rng)
    return yhat[0] if single else yhat


def predict(model: MLPModel, features) -> np.ndarray:
    """Evaluation-mode output in (0, 1); applies the model's stored standardizer."""
    x = np.asarray(features, dtype=float)
    if model.scaler is not None:
        x = model.scaler.transform(x)
    return forward(model, x)


def weighted_bce(yhat, y, w) -> np.ndarray:
    yhat = np.clip(np.asarray(yhat, dtype=float), EPS, 1 - EPS)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    return w * -(y * np.log(yhat) + (1 - y) * np.log1p(-yhat))


def _backward(model, yhat, acts, keeps, y, w):
    n = yhat.shape[0]
    # d(mean loss)/d(logit); zero where the output was clamped
    inside = (yhat > EPS) & (yhat < 1 - EPS)
    delta = (np.where(inside, w * (yhat - y), 0.0) / n)[:, None]
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.weights)
    for l in range(len(model.weights) - 1, -1, -1):
        grads_w[l] = acts[l].T @ delta
        grads_b[l] = delta.sum(axis=0)
        if l == 0:
            break
        delta = delta @ model.weights[l].T
        if keeps[l - 1] is not None:
            delta = delta * keeps[l - 1]
        delta = delta * (acts[l] > 0)
    return grads_w, grads_b


def _batch_arrays(batch: Sequence[LabeledExample]):
    x = np.stack([np.asarray(ex.features, dtype=float) for ex in batch])
    y = np.array([ex.y for ex in batch], dtype=float)
    w = np.array([ex.w for ex in batch], dtype=float)
    return x, y, w


def gradients(
    model: MLPModel,
    batch: Sequence[LabeledExample],
    rng: np.random.Generator | None = None,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact gradients of the batch-mean weighted loss, as (weight grads, bias grads).

    ``rng`` draws the dropout masks; pass ``None`` for a dropout-free pass.
    """
    if not batch:
        raise SizeNetError("gradients need a non-empty batch")
    x, y, w = _batch_arrays(batch)
    yhat, acts, keeps = _forward(model, _as_batch(model, x), rng)
    return _backward(model, yhat, acts, keeps, y, w)


def batch_loss(model: MLPModel, batch: Sequence[LabeledExample], use_weights: bool = True) -> float:
    x, y, w = _batch_arrays(batch)
    if not use_weights:
        w = np.ones_like(w)
    return float(np.mean(weighted_bce(forward(model, x), y, w)))


def curriculum_order(examples: Sequence[LabeledExample]) -> list[int]:
    """Example indices by descending weight; ties by article id, then position."""
    return sorted(range(len(examples)), key=lambda i: (-examples[i].w, examples[i].article, i))


def curriculum_stages(examples: Sequence[LabeledExample], fractions: Sequence[float]) -> list[list[int]]:
    """Nested index sets: stage t holds the top ``ceil(f_t * N)`` examples by weight."""
    order = curriculum_order(examples)
    n = len(order)
    return [order[: min(n, math.ceil(f * n - 1e-9))] for f in fractions]


def stage_epochs(epochs: int, n_stages: int) -> list[int]:
    base = epochs // n_stages
    counts = [base] * n_stages
    counts[-1] += epochs - base * n_stages
    return counts


EpochCallback = Callable[[int, int, MLPModel, float], None]


def train(
    dataset: Sequence[LabeledExample],
    config: TrainConfig,
    on_epoch: EpochCallback | None = None,
    model: MLPModel | None = None,
) -> tuple[MLPModel, list[float]]:
    """Curriculum SGD. Returns the trained model and the mean training loss per epoch.

    ``on_epoch(epoch, stage, model, loss)`` runs after every epoch; the CLI
    uses it to track validation loss. With ``use_weights`` off the loss treats
    every weight as 1, but stages are still formed from the true weights.
    """
    if not dataset:
        raise SizeNetError("cannot train on an empty dataset")
    x_all, y_all, w_all = _batch_arrays(dataset)
    if model is None:
        model = init_model(x_all.shape[1], config.dropout_rate, rng_for(config.seed, "init").integers(2**63))
    else:
        model = model.copy()
    loss_w = w_all if config.use_weights else np.ones_like(w_all)

    shuffle_rng = rng_for(config.seed, "shuffle")
    dropout_rng = rng_for(config.seed, "dropout")
    stages = curriculum_stages(dataset, config.curriculum_fractions)
    history: list[float] = []
    epoch = 0
    for stage_idx, (members, n_epochs) in enumerate(zip(stages, stage_epochs(config.epochs, len(stages)))):
        members = np.asarray(members)
        for _ in range(n_epochs):
            perm = members[shuffle_rng.permutation(len(members))]
            total = 0.0
            for start in range(0, len(perm), config.batch_size):
                idx = perm[start:start + config.batch_size]
                yhat, acts, keeps = _forward(model, x_all[idx], dropout_rng)
                total += float(weighted_bce(yhat, y_all[idx], loss_w[idx]).sum())
                gw, gb = _backward(model, yhat, acts, keeps, y_all[idx], loss_w[idx])
                for l in range(len(model.weights)):
                    model.weights[l] -= config.learning_rate * gw[l]
                    model.biases[l] -= config.learning_rate * gb[l]
            loss = total / len(perm)
            history.append(loss)
            if on_epoch is not None:
                on_epoch(epoch, stage_idx, model, loss)
            epoch += 1
    return model, history


def save_model(model: MLPModel, path) -> None:
    """Write the versioned binary model file.

    Layout: ``SIZENET1`` line, then ASCII header lines (projection, layer
    widths, dropout rate as a hex float, optional standardizer width), then
    little-endian float64 parameters per layer (weights row-major, then
    biases), then the standardizer mean and scale if present.
    """
    proj = model.projection
    header = [
        MAGIC + str(FORMAT_VERSION).encode(),
        b"projection " + (f"{proj.input_dim} {proj.output_dim} {proj.seed}".encode() if proj else b"none"),
        b"layers " + " ".join(str(d) for d in model.layer_dims).encode(),
        b"dropout " + float(model.dropout_rate).hex().encode(),
        b"scaler " + (str(model.scaler.mean.size).encode() if model.scaler is not None else b"none"),
    ]
    blobs = []
    for w, b in zip(model.weights, model.biases):
        blobs.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        blobs.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    if model.scaler is not None:
        blobs.append(np.ascontiguousarray(model.scaler.mean, dtype="<f8").tobytes())
        blobs.append(np.ascontiguousarray(model.scaler.scale, dtype="<f8").tobytes())
    payload = b"".join(blobs)
    header.append(f"params {len(payload) // 8}".encode())
    with open(path, "wb") as fh:
        fh.write(b"\n".join(header) + b"\n")
        fh.write(payload)


def _header_field(fh, key: str, path) -> list[str]:
    line = fh.readline().decode("ascii", errors="replace").rstrip("\n")
    parts = line.split()
    if not parts or parts[0] != key:
        raise FormatError(f"expected '{key}' header line", path, text=line)
    return parts[1:]


def load_model(path) -> MLPModel:
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if not magic.startswith(MAGIC):
            raise FormatError("not a SizeNet model file (bad magic)", path, text=magic[:16].decode("latin-1"))
        version = magic[len(MAGIC):].decode("ascii", errors="replace")
        if version != str(FORMAT_VERSION):
            raise FormatError(
                f"unsupported model format version {version!r} (this build reads version {FORMAT_VERSION})", path
            )
        try:
            proj_f = _header_field(fh, "projection", path)
            projection = None if proj_f == ["none"] else ProjectionSpec(*(int(v) for v in proj_f))
            dims = [int(v) for v in _header_field(fh, "layers", path)]
            dropout = float.fromhex(_header_field(fh, "dropout", path)[0])
            scaler_f = _header_field(fh, "scaler", path)
            scaler_dim = None if scaler_f == ["none"] else int(scaler_f[0])
            n_params = int(_header_field(fh, "params", path)[0])
        except (ValueError, IndexError, TypeError) as exc:
            raise FormatError(f"corrupt model header: {exc}", path) from None
        payload = fh.read()
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    if len(payload) != 8 * n_params or values.size != n_params:
        raise FormatError(f"expected {n_params} parameters, found {len(payload) / 8:g}", path)
    expected = sum(a * b + b for a, b in zip(dims, dims[1:])) + (2 * scaler_dim if scaler_dim else 0)
    if expected != n_params:
        raise FormatError(f"layer widths {dims} need {expected} parameters, header says {n_params}", path)
    weights, biases = [], []
    pos = 0
    for a, b in zip(dims, dims[1:]):
        weights.append(values[pos:pos + a * b].reshape(a, b).copy())
        pos += a * b
        biases.append(values[pos:pos + b].copy())
        pos += b
    scaler = None
    if scaler_dim:
        scaler = Standardizer(values[pos:pos + scaler_dim].copy(), values[pos + scaler_dim:pos + 2 * scaler_dim].copy())
    if not np.all(np.isfinite(values)):
        raise FormatError("model parameters contain non-finite values", path)
    return MLPModel(weights, biases, dropout, projection, scaler)

"""Per-pixel surface-normal regressor: a small fully-connected network.

The network maps a 5-vector per pixel -- (r, g, b, x_norm, y_norm), where
x_norm/y_norm are image coordinates scaled to [0, 1] -- to a (possibly
unnormalised) surface normal, through two ReLU hidden layers.  Training uses
mean-squared error over all output elements, inverted dropout on both hidden
layers, and Adam.

Everything here is deliberately plain NumPy: forward, backward and the
optimiser are spelled out so they can be verified against finite
differences, and training is bit-reproducible from a seed.  Training runs in
float64; inference runs in float32 (see :func:`predict_normal_map` and the
buffer-reusing :class:`~tactiforce.pipeline.ForcePipeline`).

Checkpoints use a small binary container (magic ``MLP1``): uint32 LE layer
count, then per layer uint32 ``rows``/``cols``, the float64 LE row-major
weight matrix, and the float64 LE bias vector.  A JSON sidecar carries the
training configuration and dataset/config fingerprints.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import CheckpointError, DomainError
from .fields import NZ_FLOOR, NormalMap, TactileFrame

CHECKPOINT_MAGIC = b"MLP1"

FEATURES = 5  # r, g, b, x_norm, y_norm
OUTPUTS = 3  # nx, ny, nz


@dataclass
class TrainConfig:
    """Hyperparameters for :func:`train`."""

    hidden: tuple[int, int] = (48, 48)
    lr: float = 1e-3
    dropout_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 4096
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.hidden) != 2 or any(h < 1 for h in self.hidden):
            raise DomainError(f"hidden must be two positive sizes, got {self.hidden}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DomainError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.epochs < 1:
            raise DomainError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if self.lr <= 0:
            raise DomainError("lr must be > 0")


@dataclass
class MlpParams:
    """Weights and biases; layer i maps width[i] -> width[i+1]."""

    weights: list[np.ndarray]  # each (fan_in, fan_out) float64
    biases: list[np.ndarray]  # each (fan_out,) float64

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @classmethod
    def init(cls, sizes: tuple[int, ...], rng: np.random.Generator) -> "MlpParams":
        """He-style uniform fan-in initialisation, zero biases."""
        if len(sizes) < 2:
            raise DomainError("need at least an input and an output size")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out, dtype=np.float64))
        return cls(weights, biases)


# ---------------------------------------------------------------------------
# Forward / loss / backward


def _apply_dropout(h: np.ndarray, mask: np.ndarray, rate: float) -> np.ndarray:
    # Inverted dropout: scaling by 1/(1-rate) at train time keeps the layer's
    # expectation equal to its inference-mode activation.
    return h * (mask / (1.0 - rate))


def forward(
    params: MlpParams,
    x: np.ndarray,
    dropout_masks: list[np.ndarray] | None = None,
    dropout_rate: float = 0.0,
) -> np.ndarray:
    """Batch forward pass; ReLU on hidden layers, linear output.

    ``dropout_masks`` (one 0/1 array per hidden layer, shaped like that
    layer's activation) enables train-mode dropout; inference passes None.
    """
    return _forward_cached(params, x, dropout_masks, dropout_rate)[-1]


def _forward_cached(
    params: MlpParams,
    x: np.ndarray,
    dropout_masks: list[np.ndarray] | None,
    dropout_rate: float,
) -> list[np.ndarray]:
    """Forward pass keeping post-dropout activations (index 0 is the input)."""
    n_hidden = params.n_layers - 1
    if dropout_masks is not None and len(dropout_masks) != n_hidden:
        raise DomainError(f"expected {n_hidden} dropout masks, got {len(dropout_masks)}")
    acts = [x]
    for i in range(n_hidden):
        h = np.maximum(acts[-1] @ params.weights[i] + params.biases[i], 0.0)
        if dropout_masks is not None:
            h = _apply_dropout(h, dropout_masks[i], dropout_rate)
        acts.append(h)
    acts.append(acts[-1] @ params.weights[-1] + params.biases[-1])
    return acts


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over every output element."""
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def backward(
    params: MlpParams,
    x: np.ndarray,
    target: np.ndarray,
    dropout_masks: list[np.ndarray] | None = None,
    dropout_rate: float = 0.0,
) -> tuple[float, MlpParams]:
    """Loss and its gradient w.r.t. every weight and bias.

    The gradient is returned in an :class:`MlpParams` of matching shapes.
    """
    acts = _forward_cached(params, x, dropout_masks, dropout_rate)
    pred = acts[-1]
    loss = mse_loss(pred, target)

    d_weights = [np.empty(0)] * params.n_layers
    d_biases = [np.empty(0)] * params.n_layers
    delta = (2.0 / pred.size) * (pred - target)
    for i in range(params.n_layers - 1, -1, -1):
        d_weights[i] = acts[i].T @ delta
        d_biases[i] = delta.sum(axis=0)
        if i == 0:
            break
        delta = delta @ params.weights[i].T
        if dropout_masks is not None:
            delta = _apply_dropout(delta, dropout_masks[i - 1], dropout_rate)
        # ReLU gate: the stored activation is positive exactly where the
        # pre-activation was (dropout only ever zeroes or rescales).
        delta = delta * (acts[i] > 0.0)
    return loss, MlpParams(d_weights, d_biases)


def make_dropout_masks(
    rng: np.random.Generator, batch: int, hidden: tuple[int, ...], rate: float
) -> list[np.ndarray]:
    """Bernoulli(1 - rate) keep masks for each hidden layer."""
    return [(rng.random((batch, h)) >= rate).astype(np.float64) for h in hidden]


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Adam optimiser state; created lazily to match the parameter shapes."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: MlpParams | None = None
    v: MlpParams | None = None


def adam_step(
    params: MlpParams, grads: MlpParams, state: AdamState
) -> tuple[MlpParams, AdamState]:
    """One Adam update; returns new parameters and advanced state.

    Bias-corrected first/second moments; epsilon sits outside the square
    root: ``p -= lr * m_hat / (sqrt(v_hat) + eps)``.
    """
    if state.m is None or state.v is None:
        zeros = lambda ps: MlpParams(
            [np.zeros_like(w) for w in ps.weights], [np.zeros_like(b) for b in ps.biases]
        )
        state = AdamState(state.lr, state.beta1, state.beta2, state.eps, state.t, zeros(params), zeros(params))

    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t

    new_params = MlpParams([], [])
    new_m = MlpParams([], [])
    new_v = MlpParams([], [])
    for kind in ("weights", "biases"):
        for p, g, m, v in zip(
            getattr(params, kind), getattr(grads, kind), getattr(state.m, kind), getattr(state.v, kind)
        ):
            m2 = b1 * m + (1.0 - b1) * g
            v2 = b2 * v + (1.0 - b2) * (g * g)
            update = state.lr * (m2 / corr1) / (np.sqrt(v2 / corr2) + state.eps)
            getattr(new_params, kind).append(p - update)
            getattr(new_m, kind).append(m2)
            getattr(new_v, kind).append(v2)
    return new_params, AdamState(state.lr, state.beta1, state.beta2, state.eps, t, new_m, new_v)


# ---------------------------------------------------------------------------
# Dataset container and training loop


@dataclass
class TrainingSet:
    """Array-backed supervised dataset of per-pixel samples."""

    inputs: np.ndarray  # (N, 5) float64
    targets: np.ndarray  # (N, 3) float64
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or self.inputs.shape[1] != FEATURES:
            raise DomainError(f"inputs must be (N, {FEATURES}), got {self.inputs.shape}")
        if self.targets.shape != (self.inputs.shape[0], OUTPUTS):
            raise DomainError(
                f"targets must be ({self.inputs.shape[0]}, {OUTPUTS}), got {self.targets.shape}"
            )

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def sample(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.inputs[i], self.targets[i]

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.inputs).tobytes())
        digest.update(np.ascontiguousarray(self.targets).tobytes())
        digest.update(json.dumps(self.meta, sort_keys=True).encode())
        return digest.hexdigest()


def train(
    data: TrainingSet,
    cfg: TrainConfig,
    init: MlpParams | None = None,
    epoch_callback=None,
) -> tuple[MlpParams, list[float]]:
    """Mini-batch Adam training; deterministic for a given seed.

    Returns the trained parameters and the per-epoch mean training loss.
    ``epoch_callback(epoch_index, loss)`` is invoked after each epoch when
    given (used by the CLI for progress lines).
    """
    rng = np.random.default_rng(cfg.seed)
    params = init.copy() if init is not None else MlpParams.init(
        (FEATURES, *cfg.hidden, OUTPUTS), rng
    )
    if params.sizes[0] != FEATURES or params.sizes[-1] != OUTPUTS:
        raise DomainError(f"parameter sizes {params.sizes} do not fit {FEATURES}->...->{OUTPUTS}")
    state = AdamState(lr=cfg.lr)
    hidden = params.sizes[1:-1]

    n = len(data)
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            masks = (
                make_dropout_masks(rng, len(idx), hidden, cfg.dropout_rate)
                if cfg.dropout_rate > 0.0
                else None
            )
            loss, grads = backward(
                params, data.inputs[idx], data.targets[idx], masks, cfg.dropout_rate
            )
            params, state = adam_step(params, grads, state)
            total += loss * len(idx)
        losses.append(total / n)
        if epoch_callback is not None:
            epoch_callback(epoch, losses[-1])
    return params, losses


# ---------------------------------------------------------------------------
# Inference


def frame_features(pixels: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Per-pixel feature rows (r, g, b, x_norm, y_norm) as float32 (H*W, 5).

    Normalised image coordinates make the learned mapping independent of
    resolution, so a network trained on a coarse grid transfers to a finer
    one over the same gel area.
    """
    h, w = pixels.shape[:2]
    if out is None:
        out = np.empty((h * w, FEATURES), dtype=np.float32)
    out[:, :3] = pixels.reshape(h * w, 3)
    grid = _coord_features(h, w)
    out[:, 3] = grid[:, 0]
    out[:, 4] = grid[:, 1]
    return out


def _coord_features(h: int, w: int) -> np.ndarray:
    key = (h, w)
    cached = _coord_cache.get(key)
    if cached is None:
        xs = np.linspace(0.0, 1.0, w, dtype=np.float32) if w > 1 else np.zeros(1, np.float32)
        ys = np.linspace(0.0, 1.0, h, dtype=np.float32) if h > 1 else np.zeros(1, np.float32)
        cached = np.empty((h * w, 2), dtype=np.float32)
        cached[:, 0] = np.tile(xs, h)
        cached[:, 1] = np.repeat(ys, w)
        _coord_cache[key] = cached
    return cached


_coord_cache: dict[tuple[int, int], np.ndarray] = {}


def params_float32(params: MlpParams) -> MlpParams:
    """Float32 copies of the parameters for the inference hot path."""
    return MlpParams(
        [np.ascontiguousarray(w, dtype=np.float32) for w in params.weights],
        [np.ascontiguousarray(b, dtype=np.float32) for b in params.biases],
    )


def predict(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Raw network output for a feature batch (no dropout)."""
    return forward(params, x)


def predict_normal_map(
    params: MlpParams, frame: TactileFrame, nz_floor: float = NZ_FLOOR
) -> NormalMap:
    """Predict a unit normal map for a tactile frame (float32 inference).

    The raw network output has its z component floored at ``nz_floor`` and
    is then normalised to unit length, guaranteeing a valid
    :class:`NormalMap` regardless of what the network produced.
    """
    h, w = frame.pixels.shape[:2]
    feats = frame_features(np.asarray(frame.pixels, dtype=np.float32))
    raw = forward(params_float32(params), feats)
    vec = kernels.normalize_rows_floor(raw, nz_floor)
    return NormalMap(vec.reshape(h, w, 3))


# ---------------------------------------------------------------------------
# Checkpoint IO


def save_checkpoint(path: str | Path, params: MlpParams, meta: dict | None = None) -> None:
    """Write the binary checkpoint and its JSON metadata sidecar."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", params.n_layers))
        for w, b in zip(params.weights, params.biases):
            rows, cols = w.shape
            if b.shape != (cols,):
                raise CheckpointError(f"bias shape {b.shape} does not match weights {w.shape}")
            fh.write(struct.pack("<II", rows, cols))
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    sidecar = {"format": "MLP1", "sizes": list(params.sizes), **(meta or {})}
    sidecar_path = path.with_suffix(".json")
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> tuple[MlpParams, dict]:
    """Read a checkpoint; returns (params, sidecar metadata).

    A missing sidecar yields empty metadata; a malformed binary raises
    :class:`CheckpointError`.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 8 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not an MLP1 checkpoint")
    (n_layers,) = struct.unpack_from("<I", blob, 4)
    if not 1 <= n_layers <= 64:
        raise CheckpointError(f"{path}: implausible layer count {n_layers}")
    offset = 8
    weights, biases = [], []
    for i in range(n_layers):
        if offset + 8 > len(blob):
            raise CheckpointError(f"{path}: truncated at layer {i} header")
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        if rows < 1 or cols < 1:
            raise CheckpointError(f"{path}: layer {i} has empty shape {rows}x{cols}")
        need = 8 * (rows * cols + cols)
        if offset + need > len(blob):
            raise CheckpointError(f"{path}: truncated in layer {i} payload")
        w = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols)
        offset += 8 * rows * cols
        b = np.frombuffer(blob, dtype="<f8", count=cols, offset=offset)
        offset += 8 * cols
        weights.append(w.copy())
        biases.append(b.copy())
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    for prev, nxt in zip(weights[:-1], weights[1:]):
        if prev.shape[1] != nxt.shape[0]:
            raise CheckpointError(f"{path}: layer shapes do not chain: {prev.shape} -> {nxt.shape}")
    params = MlpParams(weights, biases)
    sidecar_path = path.with_suffix(".json")
    meta: dict = {}
    if sidecar_path.exists():
        with open(sidecar_path) as fh:
            meta = json.load(fh)
    return params, meta

"""Fully connected network runtime with pluggable MAC backends.

Inference quantizes each layer's weights (per tensor) and input activations
(per sample) to symmetric ``bits``-bit integers, runs the integer matmul on
the selected backend, then rescales and adds the float bias. Training is
plain float minibatch SGD.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .array import CapacityError, EnergyLedger, batched_matmul
from .files import atomic_write_bytes
from .gro import DEFAULT_COUNTER_BITS, DEFAULT_STAGES, CounterSaturationError

log = logging.getLogger(__name__)

ACTIVATIONS = ("identity", "relu")


# -- quantization -----------------------------------------------------------

@dataclass
class QuantizedTensor:
    values: np.ndarray
    scale: float | np.ndarray
    bits: int

    def dequantize(self) -> np.ndarray:
        return self.values * self.scale


def qmax(bits: int) -> int:
    if not 2 <= bits <= 8:
        raise ValueError(f"bits must be in [2, 8], got {bits}")
    return (1 << (bits - 1)) - 1


def round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def quantize(x, bits: int = 8, axis: int | None = None) -> QuantizedTensor:
    """Symmetric quantization; ``axis`` is reduced when finding max|x|, so
    ``axis=0`` on an (features, batch) array gives one scale per sample."""
    x = np.asarray(x, dtype=np.float64)
    q = qmax(bits)
    if x.size == 0:
        raise ValueError("cannot quantize an empty tensor")
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite values")
    max_abs = np.max(np.abs(x), axis=axis, keepdims=axis is not None)
    scale = np.where(max_abs > 0, max_abs / q, 1.0)  # all-zero slices get scale 1
    scale = np.maximum(scale, np.finfo(np.float64).tiny)  # subnormal max_abs underflows
    values = np.clip(round_half_away(x / scale), -q, q).astype(np.int64)
    if axis is None:
        scale = float(scale)
    return QuantizedTensor(values, scale, bits)


# -- model ------------------------------------------------------------------

@dataclass
class FcModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have one entry per layer")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input dim {w.shape[1]} does not match "
                                 f"previous output {self.weights[i - 1].shape[0]}")
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @classmethod
    def random(cls, dims: Sequence[int], seed: int = 0, hidden: str = "relu",
               output: str = "identity") -> FcModel:
        """He-initialised model with zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases, acts = [], [], []
        for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / n_in), (n_out, n_in)))
            biases.append(np.zeros(n_out))
            acts.append(output if i == len(dims) - 2 else hidden)
        return cls(weights, biases, acts)

    def copy(self) -> FcModel:
        return FcModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                       list(self.activations))


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    return np.maximum(z, 0.0) if act == "relu" else z


# -- backends ---------------------------------------------------------------

class FloatBackend:
    name = "float"
    quantized = False


class ReferenceBackend:
    """Plain wide-integer matmul; the oracle for the PMAC path."""

    name = "reference"
    quantized = True

    def matmul(self, W: np.ndarray, X: np.ndarray) -> np.ndarray:
        return W.astype(np.int64) @ X.astype(np.int64)


@dataclass
class PmacBackend:
    """Integer matmul simulated on GRO-based PMAC units."""

    counter_bits: int = DEFAULT_COUNTER_BITS
    num_stages: int = DEFAULT_STAGES
    ledger: EnergyLedger = field(default_factory=EnergyLedger)
    name = "pmac"
    quantized = True

    def matmul(self, W: np.ndarray, X: np.ndarray) -> np.ndarray:
        return batched_matmul(W, X, self.ledger, counter_bits=self.counter_bits,
                              num_stages=self.num_stages)


BACKENDS = {"float": FloatBackend, "reference": ReferenceBackend, "pmac": PmacBackend}


def get_backend(backend) -> FloatBackend | ReferenceBackend | PmacBackend:
    if isinstance(backend, str):
        try:
            return BACKENDS[backend]()
        except KeyError:
            raise ValueError(f"unknown backend {backend!r}; pick one of {sorted(BACKENDS)}") from None
    return backend


class LayerSaturationError(RuntimeError):
    def __init__(self, layer: int, cause: Exception):
        self.layer = layer
        super().__init__(f"layer {layer}: {cause}. Reduce the layer fan-in or raise counter_bits.")


# -- inference --------------------------------------------------------------

def fc_forward(model: FcModel, x, backend="pmac", bits: int = 8,
               trace: list | None = None) -> np.ndarray:
    """Run the network on one sample (1-D) or a batch (rows of a 2-D array).

    If ``trace`` is a list, the integer accumulators of every layer are
    appended to it (quantized backends only).
    """
    backend = get_backend(backend)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[:, None] if single else x.T
    if a.shape[0] != model.dims[0]:
        raise ValueError(f"input has {a.shape[0]} features, model expects {model.dims[0]}")

    for i, (W, b, act) in enumerate(zip(model.weights, model.biases, model.activations)):
        if not backend.quantized:
            z = W @ a + b[:, None]
        else:
            qw = quantize(W, bits)
            qa = quantize(a, bits, axis=0)
            try:
                acc = backend.matmul(qw.values, qa.values)
            except (CounterSaturationError, CapacityError) as e:
                raise LayerSaturationError(i, e) from e
            if trace is not None:
                trace.append(acc)
            z = acc * (qw.scale * qa.scale) + b[:, None]
        a = _activate(z, act)

    return a[:, 0] if single else a.T


# -- training ---------------------------------------------------------------

class TrainingDiverged(FloatingPointError):
    pass


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def train_sgd(model: FcModel, X, Y, lr: float = 0.01, epochs: int = 10, batch: int = 32,
              seed: int = 0, loss: str = "mse", momentum: float = 0.0,
              history: list | None = None) -> FcModel:
    """Minibatch SGD in float. Returns a new model; ``model`` is not modified.

    ``loss`` is ``"mse"`` (Y is an (n, out) array) or ``"xent"`` (softmax
    cross-entropy; Y holds integer class labels).
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    n = len(X)
    if n == 0 or len(Y) != n:
        raise ValueError("need a non-empty dataset with one target per sample")
    if loss not in ("mse", "xent"):
        raise ValueError(f"unknown loss {loss!r}")

    model = model.copy()
    rng = np.random.default_rng(seed)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]

    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, batch)):
            idx = order[start:start + batch]
            xb, yb = X[idx], Y[idx]
            acts = [xb]
            for W, b, act in zip(model.weights, model.biases, model.activations):
                acts.append(_activate(acts[-1] @ W.T + b, act))
            out = acts[-1]
            m = len(idx)
            if loss == "mse":
                diff = out - yb
                with np.errstate(over="ignore", invalid="ignore"):
                    batch_loss = float(np.mean(diff ** 2))
                grad = 2.0 * diff / diff.size
            else:
                probs = _softmax(out)
                batch_loss = float(-np.mean(np.log(probs[np.arange(m), yb] + 1e-12)))
                grad = probs
                grad[np.arange(m), yb] -= 1.0
                grad /= m
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"loss became {batch_loss} at epoch {epoch}, batch {bi} (lr={lr}); "
                    "try a smaller learning rate")
            total += batch_loss * m

            for i in reversed(range(len(model.weights))):
                if model.activations[i] == "relu":
                    grad = grad * (acts[i + 1] > 0)
                gw = grad.T @ acts[i]
                gb = grad.sum(axis=0)
                if i:
                    grad = grad @ model.weights[i]
                vel_w[i] = momentum * vel_w[i] - lr * gw
                vel_b[i] = momentum * vel_b[i] - lr * gb
                model.weights[i] += vel_w[i]
                model.biases[i] += vel_b[i]

        log.debug("epoch %d loss %.6g", epoch, total / n)
        if history is not None:
            history.append(total / n)
    return model


# -- anomaly scoring --------------------------------------------------------

def anomaly_scores(model: FcModel, windows, bits: int = 8, backend="pmac") -> np.ndarray:
    """Prediction MSE per window; each window is H inputs followed by H targets."""
    windows = np.atleast_2d(np.asarray(windows, dtype=np.float64))
    h = model.dims[0]
    if windows.shape[1] != 2 * h or model.dims[-1] != h:
        raise ValueError(f"windows must have length {2 * h} for a {h}-sample predictor, "
                         f"got {windows.shape[1]}")
    pred = fc_forward(model, windows[:, :h], backend, bits)
    return np.mean((pred - windows[:, h:]) ** 2, axis=1)


def anomaly_score(model: FcModel, window, bits: int = 8, backend="pmac") -> float:
    return float(anomaly_scores(model, np.asarray(window)[None, :], bits, backend)[0])


def detect(scores, threshold: float) -> np.ndarray:
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return np.asarray(scores) > threshold


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties averaged)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative samples")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# -- serialization ----------------------------------------------------------
#
# Little-endian binary layout:
#   0   4 bytes   magic b"PMFC"
#   4   u16       format version (1)
#   6   u16       number of layers L
#   8   u32[L+1]  layer dims, input first
#   .   u8[L]     activation codes (0 identity, 1 relu)
#   .   per layer: f64[out*in] weights (row-major, out x in), then f64[out] biases

MODEL_MAGIC = b"PMFC"
MODEL_VERSION = 1


def save_model(model: FcModel, path: str | Path) -> None:
    dims = model.dims
    parts = [MODEL_MAGIC, struct.pack("<HH", MODEL_VERSION, len(model.weights)),
             struct.pack(f"<{len(dims)}I", *dims),
             bytes(ACTIVATIONS.index(a) for a in model.activations)]
    for W, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_model(path: str | Path) -> FcModel:
    data = Path(path).read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a PMFC model file")
    version, n_layers = struct.unpack_from("<HH", data, 4)
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    off = 8
    dims = struct.unpack_from(f"<{n_layers + 1}I", data, off)
    off += 4 * (n_layers + 1)
    acts = [ACTIVATIONS[c] for c in data[off:off + n_layers]]
    off += n_layers
    weights, biases = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(data, dtype="<f8", count=n_out * n_in, offset=off).reshape(n_out, n_in)
        off += 8 * n_out * n_in
        b = np.frombuffer(data, dtype="<f8", count=n_out, offset=off)
        off += 8 * n_out
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    return FcModel(weights, biases, acts)

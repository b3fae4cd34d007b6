"""Datasets: MNIST IDX ingestion and synthetic vibration series."""

from __future__ import annotations

import gzip
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .files import atomic_write_text

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    def __init__(self, path, offset: int, reason: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{path}: malformed IDX data at byte {offset}: {reason}")


def data_root(explicit: str | Path | None = None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get("PHASEMAC_DATA", "data"))


def parse_idx(raw: bytes, expected_magic: int, path="<bytes>") -> np.ndarray:
    """Decode an unsigned-byte IDX blob (big-endian header)."""
    want = expected_magic.to_bytes(4, "big")
    for i in range(4):
        if i >= len(raw):
            raise IdxFormatError(path, len(raw), "truncated magic number")
        if raw[i] != want[i]:
            got = int.from_bytes(raw[:4].ljust(4, b"\0"), "big")
            raise IdxFormatError(path, i, f"magic {got} != {expected_magic}")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(path, len(raw), "truncated dimension header")
    dims = [int.from_bytes(raw[4 + 4 * k:8 + 4 * k], "big") for k in range(ndim)]
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise IdxFormatError(path, len(raw), f"expected {size} data bytes, file ends early")
    if len(raw) > header + size:
        raise IdxFormatError(path, header + size, "trailing bytes after data")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def read_idx(path: str | Path, expected_magic: int) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return parse_idx(raw, expected_magic, path)


def _find(root: Path, name: str) -> Path:
    for cand in (name, name + ".gz", name.replace("-idx", ".idx"), name.replace("-idx", ".idx") + ".gz"):
        if (root / cand).exists():
            return root / cand
    raise FileNotFoundError(f"{name} not found under {root}")


def load_mnist(root: str | Path | None = None, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    """Return (images uint8 [n, 28, 28], labels uint8 [n])."""
    root = data_root(root)
    if (root / "mnist").is_dir():
        root = root / "mnist"
    img_name, lbl_name = MNIST_FILES[split]
    lbl_path = _find(root, lbl_name)
    images = read_idx(_find(root, img_name), IDX_IMAGES_MAGIC)
    labels = read_idx(lbl_path, IDX_LABELS_MAGIC)
    if images.ndim != 3 or labels.ndim != 1 or len(images) != len(labels):
        raise ValueError(f"{root}: image/label shapes {images.shape} / {labels.shape} disagree")
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise IdxFormatError(lbl_path, 8 + int(bad[0]), f"label {labels[bad[0]]} > 9")
    return images, labels


# -- synthetic vibration data -----------------------------------------------

ANOMALY_KINDS = ("none", "amplitude", "frequency", "mixed")


@dataclass
class SyntheticSeries:
    samples: np.ndarray
    anomaly_spans: list[tuple[int, int]] = field(default_factory=list)
    span_kinds: list[str] = field(default_factory=list)


def _check_spans(spans, n: int) -> list[tuple[int, int]]:
    spans = sorted((int(a), int(b)) for a, b in spans)
    prev_end = 0
    for a, b in spans:
        if not 0 <= a < b <= n:
            raise ValueError(f"span ({a}, {b}) outside [0, {n})")
        if a < prev_end:
            raise ValueError(f"span ({a}, {b}) overlaps the previous span")
        prev_end = b
    return spans


def _random_spans(rng: np.random.Generator, n: int, count: int, length: int,
                  margin: int) -> list[tuple[int, int]]:
    # one span per equal slot, so they never overlap
    slot = n // count
    if slot < length + 2 * margin:
        raise ValueError("series too short for the requested anomaly spans")
    spans = []
    for k in range(count):
        start = k * slot + margin + int(rng.integers(0, slot - length - 2 * margin + 1))
        spans.append((start, start + length))
    return spans


def gen_synthetic(n: int = 20000, base_freqs: Sequence[float] = (1 / 50, 1 / 23),
                  amplitudes: Sequence[float] | None = None, noise_sigma: float = 0.05,
                  anomaly_kind: str = "none", anomaly_spans=None, n_anomalies: int = 4,
                  span_length: int = 1200, amplitude_gain: float = 1.5,
                  frequency_gain: float = 1.3, seed: int = 0) -> SyntheticSeries:
    """Sum of sinusoids plus Gaussian noise, with labelled anomaly spans.

    ``amplitude`` spans scale the clean signal by ``amplitude_gain``;
    ``frequency`` spans scale every tone's frequency by ``frequency_gain``
    (phase-continuous). ``mixed`` alternates the two kinds.
    """
    if n < 1600:
        raise ValueError("series needs at least two 800-sample windows")
    if anomaly_kind not in ANOMALY_KINDS:
        raise ValueError(f"anomaly_kind must be one of {ANOMALY_KINDS}")
    rng = np.random.default_rng(seed)
    freqs = np.asarray(base_freqs, dtype=np.float64)
    amps = np.ones_like(freqs) if amplitudes is None else np.asarray(amplitudes, dtype=np.float64)
    phases0 = rng.uniform(0, 2 * np.pi, len(freqs))

    if anomaly_kind == "none":
        spans, kinds = [], []
    else:
        if anomaly_spans is not None:
            spans = _check_spans(anomaly_spans, n)
        else:
            spans = _random_spans(rng, n, n_anomalies, span_length, margin=span_length // 4)
        if anomaly_kind == "mixed":
            kinds = [("amplitude", "frequency")[k % 2] for k in range(len(spans))]
        else:
            kinds = [anomaly_kind] * len(spans)

    t = np.arange(n, dtype=np.float64)
    gain = np.ones(n)
    # extra elapsed "time" accumulated while a frequency anomaly is active
    dt_extra = np.zeros(n)
    for (a, b), kind in zip(spans, kinds):
        if kind == "amplitude":
            gain[a:b] = amplitude_gain
        else:
            dt_extra[a:b] = frequency_gain - 1.0
    extra = np.concatenate(([0.0], np.cumsum(dt_extra)[:-1]))
    clean = sum(A * np.sin(2 * np.pi * f * (t + extra) + p0)
                for A, f, p0 in zip(amps, freqs, phases0))
    noise = rng.normal(0.0, noise_sigma, n) if noise_sigma > 0 else 0.0
    return SyntheticSeries(gain * clean + noise, spans, kinds)


def make_windows(samples: np.ndarray, width: int = 800, stride: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Sliding windows (rows) and their start indices."""
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < width:
        raise ValueError("series shorter than one window")
    starts = np.arange(0, len(samples) - width + 1, stride)
    view = np.lib.stride_tricks.sliding_window_view(samples, width)
    return view[starts].copy(), starts


def window_labels(starts: np.ndarray, width: int, spans) -> np.ndarray:
    """True where a window overlaps any anomaly span."""
    labels = np.zeros(len(starts), dtype=bool)
    for a, b in spans:
        labels |= (starts < b) & (starts + width > a)
    return labels


def save_windows_csv(path: str | Path, windows: np.ndarray) -> None:
    lines = [",".join(repr(float(v)) for v in row) for row in np.asarray(windows)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_windows_csv(path: str | Path) -> np.ndarray:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return np.array([[float(v) for v in ln.split(",")] for ln in rows])

"""Matrix products on arrays of PMAC units, with energy-event accounting."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, fields

import numpy as np

from .gro import DEFAULT_COUNTER_BITS, DEFAULT_STAGES
from .pmac import MAG_MAX, LSB_MASK, PmacBank

# worst case per MAC on the LSB GRO: 127 * 15 transitions
_LSB_WORST = MAG_MAX * LSB_MASK


class CapacityError(ValueError):
    def __init__(self, length: int, max_safe: int):
        self.length = length
        self.max_safe = max_safe
        hint = "" if max_safe else " (counter too small for even one full-scale MAC)"
        super().__init__(
            f"dot length {length} may saturate the LSB GRO counter; "
            f"max safe length is {max_safe}{hint}"
        )


@dataclass
class EnergyLedger:
    """Event counts accumulated during a run. Ledgers add like a monoid."""

    inverter_transitions: int = 0
    mac_ops: int = 0
    weight_reads: int = 0
    output_writes: int = 0

    def __add__(self, other: EnergyLedger) -> EnergyLedger:
        return EnergyLedger(*(getattr(self, f.name) + getattr(other, f.name)
                              for f in fields(self)))

    def __iadd__(self, other: EnergyLedger) -> EnergyLedger:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self


def max_safe_dot_length(counter_bits: int = DEFAULT_COUNTER_BITS,
                        num_stages: int = DEFAULT_STAGES) -> int:
    """Largest N such that N full-scale MACs cannot saturate a GRO counter."""
    n = ((1 << counter_bits) * 2 * num_stages - 1) // _LSB_WORST
    if n == 0:
        warnings.warn(f"counter_bits={counter_bits} cannot hold a single full-scale MAC",
                      RuntimeWarning, stacklevel=2)
    return n


def _as_int8_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.size and not np.issubdtype(a.dtype, np.integer):
        if not np.array_equal(a, np.round(a)):
            raise TypeError(f"{name} must hold integers")
    a = a.astype(np.int64)
    if a.size and (a.min() < -128 or a.max() > 127):
        raise ValueError(f"{name} has values outside int8")
    return a


def batched_matmul(W, X, ledger: EnergyLedger | None = None, *,
                   counter_bits: int = DEFAULT_COUNTER_BITS,
                   num_stages: int = DEFAULT_STAGES,
                   precheck: bool = True, max_units: int = 1 << 18) -> np.ndarray:
    """Compute ``W @ X`` (M x N times N x b) on PMAC units.

    Each weight is fetched once and broadcast across the b batch columns, so
    the ledger gains M*N weight reads and M*N*b MAC ops. Columns are processed
    in chunks of at most ``max_units`` units to bound memory; this does not
    change the result or the accounting.
    """
    W = _as_int8_matrix(W, "W")
    X = _as_int8_matrix(X, "X")
    if W.ndim != 2 or X.ndim != 2:
        raise ValueError("W and X must be 2-D")
    M, N = W.shape
    if X.shape[0] != N:
        raise ValueError(f"dimension mismatch: W is {M}x{N}, X is {X.shape[0]}x{X.shape[1]}")
    b = X.shape[1]
    if precheck:
        limit = max_safe_dot_length(counter_bits, num_stages)
        if N > limit:
            raise CapacityError(N, limit)

    out = np.zeros((M, b), dtype=np.int64)
    transitions = 0
    step = max(1, max_units // max(M, 1))
    for c0 in range(0, b, step):
        cols = X[:, c0:c0 + step]
        bank = PmacBank((M, cols.shape[1]), num_stages, counter_bits)
        for k in range(N):
            transitions += bank.mac(cols[k][None, :], W[:, k][:, None])
        out[:, c0:c0 + step] = bank.readout()

    if ledger is not None:
        ledger += EnergyLedger(inverter_transitions=transitions, mac_ops=M * N * b,
                               weight_reads=M * N, output_writes=M * b)
    return out


def matvec(W, x, ledger: EnergyLedger | None = None, **kwargs) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("x must be a vector")
    return batched_matmul(W, x[:, None], ledger, **kwargs)[:, 0]

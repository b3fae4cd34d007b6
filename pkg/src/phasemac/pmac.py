"""Signed 8-bit phase-domain MAC built from four GROs.

Products are routed by sign: equal operand signs accumulate on the positive
pair, opposite signs on the negative pair. Within a pair, the 7-bit weight
magnitude is split into a 3-bit MSB field and a 4-bit LSB field, each driving
its own GRO. Readout is ``(msb << 4) + lsb`` per pair, then ``pos - neg``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .gro import DEFAULT_COUNTER_BITS, DEFAULT_STAGES, CounterSaturationError, GroBank, GroState

MAG_MAX = 127
LSB_BITS = 4
LSB_MASK = (1 << LSB_BITS) - 1
GRO_NAMES = ("pos_msb", "pos_lsb", "neg_msb", "neg_lsb")


class SignMag(NamedTuple):
    sign: int
    mag: int


def to_sign_mag(v: int) -> SignMag:
    if not -128 <= v <= 127:
        raise ValueError(f"{v} is not an int8 value")
    # -128 has no 7-bit magnitude; clamp to 127
    return SignMag(1, int(v)) if v >= 0 else SignMag(-1, min(-int(v), MAG_MAX))


def split_weight(w_mag):
    """Split a 7-bit magnitude into (3-bit MSB, 4-bit LSB) fields.

    Accepts a Python int or an integer ndarray.
    """
    if np.any(np.asarray(w_mag) < 0) or np.any(np.asarray(w_mag) > MAG_MAX):
        raise ValueError("weight magnitude outside [0, 127]")
    return w_mag >> LSB_BITS, w_mag & LSB_MASK


def _sign_mag_arrays(v: np.ndarray):
    v = np.asarray(v, dtype=np.int64)
    if v.size and (v.min() < -128 or v.max() > 127):
        raise ValueError("operands must be int8")
    return v >= 0, np.minimum(np.abs(v), MAG_MAX)


@dataclass
class PmacUnit:
    """One signed MAC accumulator: positive/negative pairs of MSB/LSB GROs."""

    num_stages: int = DEFAULT_STAGES
    counter_bits: int = DEFAULT_COUNTER_BITS
    strict: bool = True
    ops_count: int = 0
    pos_msb: GroState = field(init=False)
    pos_lsb: GroState = field(init=False)
    neg_msb: GroState = field(init=False)
    neg_lsb: GroState = field(init=False)

    def __post_init__(self):
        for name in GRO_NAMES:
            setattr(self, name, GroState(self.num_stages, self.counter_bits,
                                         strict=self.strict, name=name))

    @property
    def gros(self) -> tuple[GroState, ...]:
        return tuple(getattr(self, n) for n in GRO_NAMES)

    @property
    def saturated(self) -> bool:
        return any(g.saturated for g in self.gros)

    def mac(self, d: int, w: int) -> int:
        """Accumulate d*w; return the inverter transitions spent."""
        sd, md = to_sign_mag(d)
        sw, mw = to_sign_mag(w)
        wm, wl = split_weight(mw)
        # XNOR of the sign bits selects the pair
        msb, lsb = (self.pos_msb, self.pos_lsb) if sd == sw else (self.neg_msb, self.neg_lsb)
        adv_msb, adv_lsb = md * wm, md * wl
        if self.strict:
            for g, k in ((msb, adv_msb), (lsb, adv_lsb)):
                if g.saturated or k > g.headroom():
                    total = g.read_raw() + k
                    raise CounterSaturationError(g.name, total // g.period, g.counter_capacity)
        msb.advance(adv_msb)
        lsb.advance(adv_lsb)
        self.ops_count += 1
        return adv_msb + adv_lsb

    def readout(self, reset_after: bool = False) -> int:
        pos = (self.pos_msb.read_raw() << LSB_BITS) + self.pos_lsb.read_raw()
        neg = (self.neg_msb.read_raw() << LSB_BITS) + self.neg_lsb.read_raw()
        if reset_after:
            self.reset()
        return pos - neg

    def reset(self) -> None:
        for g in self.gros:
            g.reset()
        self.ops_count = 0


def pmac_dot(d: Sequence[int], w: Sequence[int], **unit_kwargs) -> int:
    """Fold a dot product through a fresh :class:`PmacUnit`."""
    if len(d) != len(w):
        raise ValueError(f"length mismatch: {len(d)} vs {len(w)}")
    unit = PmacUnit(**unit_kwargs)
    for a, b in zip(d, w):
        unit.mac(int(a), int(b))
    return unit.readout()


class PmacBank:
    """A grid of PmacUnits advanced in lockstep.

    ``mac(d, w)`` takes operand arrays broadcastable to the bank shape and
    returns the total inverter transitions of that step as a Python int.
    """

    def __init__(self, shape, num_stages: int = DEFAULT_STAGES,
                 counter_bits: int = DEFAULT_COUNTER_BITS):
        self.shape = tuple(np.broadcast_shapes(shape))
        for name in GRO_NAMES:
            setattr(self, name, GroBank(self.shape, num_stages, counter_bits, name))
        self.ops_count = 0

    def mac(self, d: np.ndarray, w: np.ndarray) -> int:
        d_pos, md = _sign_mag_arrays(d)
        w_pos, mw = _sign_mag_arrays(w)
        wm, wl = split_weight(mw)
        pos = np.broadcast_to(d_pos == w_pos, self.shape)
        adv_msb = np.broadcast_to(md * wm, self.shape)
        adv_lsb = np.broadcast_to(md * wl, self.shape)
        zero = np.int64(0)
        self.pos_msb.advance(np.where(pos, adv_msb, zero))
        self.pos_lsb.advance(np.where(pos, adv_lsb, zero))
        self.neg_msb.advance(np.where(pos, zero, adv_msb))
        self.neg_lsb.advance(np.where(pos, zero, adv_lsb))
        self.ops_count += 1
        return int(adv_msb.sum(dtype=np.int64)) + int(adv_lsb.sum(dtype=np.int64))

    def readout(self, reset_after: bool = False) -> np.ndarray:
        pos = (self.pos_msb.read_raw() << LSB_BITS) + self.pos_lsb.read_raw()
        neg = (self.neg_msb.read_raw() << LSB_BITS) + self.neg_lsb.read_raw()
        if reset_after:
            self.reset()
        return pos - neg

    def reset(self) -> None:
        for name in GRO_NAMES:
            getattr(self, name).reset()
        self.ops_count = 0


def _sat8(v: int) -> int:
    return -MAG_MAX if v == -128 else v


def ref_dot(d: Sequence[int], w: Sequence[int]) -> int:
    """Exact integer dot product, with -128 treated as -127."""
    if len(d) != len(w):
        raise ValueError(f"length mismatch: {len(d)} vs {len(w)}")
    return sum(_sat8(int(a)) * _sat8(int(b)) for a, b in zip(d, w))

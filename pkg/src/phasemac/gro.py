"""Gated ring oscillator (GRO) model.

A GRO is an odd ring of inverters behind a power-gating switch. While the
gate is on, the ring advances one inverter transition per ``t_inv``; while it
is off, the phase is frozen. Accumulation happens in the phase domain: each
burst starts where the previous one stopped. A counter increments whenever
the phase wraps past 2*pi, so the counter holds the MSBs of the running sum
and the latched phase holds the LSBs.

One phase unit is one inverter transition, i.e. ``pi / num_stages`` radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

DEFAULT_STAGES = 5
DEFAULT_COUNTER_BITS = 20
DTC_MAX = 127


class CounterSaturationError(OverflowError):
    """Raised when a wrap counter would exceed its capacity.

    ``gro`` names the offending oscillator (e.g. ``"pos_lsb"``); for banks,
    ``index`` is the flat index of the first offending unit.
    """

    def __init__(self, gro: str, requested: int, capacity: int, index: int | None = None):
        self.gro = gro
        self.requested = requested
        self.capacity = capacity
        self.index = index
        where = f"GRO '{gro}'" if index is None else f"GRO '{gro}' (unit {index})"
        super().__init__(
            f"{where} wrap counter saturated: needs {requested} wraps, "
            f"capacity is {capacity - 1}; read out before accumulating further"
        )


class InvalidPhaseCode(ValueError):
    pass


def _check_geometry(num_stages: int, counter_bits: int) -> None:
    if num_stages < 3 or num_stages % 2 == 0:
        raise ValueError(f"ring needs an odd number of stages >= 3, got {num_stages}")
    if counter_bits < 1:
        raise ValueError(f"counter_bits must be >= 1, got {counter_bits}")


@dataclass
class GroState:
    """One gated ring oscillator with its wrap counter.

    With ``strict=True`` (default) an advance that would overflow the counter
    raises :class:`CounterSaturationError` and leaves the state untouched.
    With ``strict=False`` the counter sticks at its maximum, ``saturated`` is
    set, and :meth:`read_raw` becomes a lower bound.
    """

    num_stages: int = DEFAULT_STAGES
    counter_bits: int = DEFAULT_COUNTER_BITS
    phase_index: int = 0
    wrap_counter: int = 0
    saturated: bool = False
    strict: bool = True
    name: str = "gro"

    def __post_init__(self):
        _check_geometry(self.num_stages, self.counter_bits)

    @property
    def period(self) -> int:
        """Transitions per full 2*pi cycle."""
        return 2 * self.num_stages

    @property
    def counter_capacity(self) -> int:
        return 1 << self.counter_bits

    @property
    def phase_radians(self) -> float:
        return self.phase_index * math.pi / self.num_stages

    def headroom(self) -> int:
        """Transitions that can still be applied without saturating."""
        return self.counter_capacity * self.period - self.read_raw() - 1

    def advance(self, transitions: int) -> GroState:
        if transitions < 0:
            raise ValueError("a GRO cannot run backwards")
        if self.saturated and self.strict:
            raise CounterSaturationError(self.name, self.wrap_counter, self.counter_capacity)
        total = self.phase_index + transitions
        wraps, phase = divmod(total, self.period)
        counter = self.wrap_counter + wraps
        if counter >= self.counter_capacity:
            if self.strict:
                raise CounterSaturationError(self.name, counter, self.counter_capacity)
            counter = self.counter_capacity - 1
            self.saturated = True
        self.phase_index = phase
        self.wrap_counter = counter
        return self

    def read_raw(self) -> int:
        return self.wrap_counter * self.period + self.phase_index

    def reset(self) -> GroState:
        self.phase_index = 0
        self.wrap_counter = 0
        self.saturated = False
        return self

    def phase_code(self) -> tuple[int, ...]:
        """Latched inverter outputs for the current phase."""
        return encode_phase(self.phase_index, self.num_stages)


def new_gro(num_stages: int = DEFAULT_STAGES, counter_bits: int = DEFAULT_COUNTER_BITS,
            **kwargs) -> GroState:
    return GroState(num_stages=num_stages, counter_bits=counter_bits, **kwargs)


class GroBank:
    """Many independent GROs stepped together.

    Same arithmetic as :class:`GroState`, held in integer arrays so that a
    whole grid of MAC units can advance in one numpy call. Always strict.
    """

    def __init__(self, shape, num_stages: int = DEFAULT_STAGES,
                 counter_bits: int = DEFAULT_COUNTER_BITS, name: str = "gro"):
        _check_geometry(num_stages, counter_bits)
        self.num_stages = num_stages
        self.counter_bits = counter_bits
        self.name = name
        self.period = 2 * num_stages
        self.capacity = 1 << counter_bits
        self.phase = np.zeros(shape, dtype=np.int64)
        self.counter = np.zeros(shape, dtype=np.int64)

    @property
    def shape(self):
        return self.phase.shape

    def advance(self, transitions: np.ndarray) -> None:
        total = self.phase + transitions
        wraps, phase = np.divmod(total, self.period)
        counter = self.counter + wraps
        if counter.max(initial=0) >= self.capacity:
            idx = int(np.argmax(counter >= self.capacity))
            raise CounterSaturationError(self.name, int(counter.flat[idx]), self.capacity, idx)
        self.phase = phase
        self.counter = counter

    def read_raw(self) -> np.ndarray:
        return self.counter * self.period + self.phase

    def reset(self) -> None:
        self.phase[...] = 0
        self.counter[...] = 0


def _phase_zero(num_stages: int) -> tuple[int, ...]:
    # alternating 0,1,0,1,... with the last stage repeating its input -> unstable
    return tuple(i % 2 for i in range(num_stages - 1)) + (1,)


def unstable_stages(code: Sequence[int]) -> list[int]:
    """Stages whose output equals their ring input (i.e. about to toggle)."""
    n = len(code)
    return [i for i in range(n) if code[i] == code[i - 1]]


@lru_cache(maxsize=None)
def _code_table(num_stages: int) -> tuple[tuple[int, ...], ...]:
    code = list(_phase_zero(num_stages))
    table = []
    for _ in range(2 * num_stages):
        table.append(tuple(code))
        (k,) = unstable_stages(code)
        code[k] ^= 1
    if tuple(code) != table[0]:
        raise AssertionError("ring did not close after 2N transitions")
    return tuple(table)


@lru_cache(maxsize=None)
def _decode_table(num_stages: int) -> dict[tuple[int, ...], int]:
    return {code: p for p, code in enumerate(_code_table(num_stages))}


def encode_phase(phase_index: int, num_stages: int = DEFAULT_STAGES) -> tuple[int, ...]:
    _check_geometry(num_stages, 1)
    if not 0 <= phase_index < 2 * num_stages:
        raise ValueError(f"phase {phase_index} outside [0, {2 * num_stages})")
    return _code_table(num_stages)[phase_index]


def decode_phase(code: Sequence[int], num_stages: int = DEFAULT_STAGES) -> int:
    _check_geometry(num_stages, 1)
    if len(code) != num_stages:
        raise InvalidPhaseCode(f"code has {len(code)} bits, ring has {num_stages} stages")
    key = tuple(int(b) for b in code)
    try:
        return _decode_table(num_stages)[key]
    except KeyError:
        n_unstable = len(unstable_stages(key))
        raise InvalidPhaseCode(
            f"unreachable ring state {key}: {n_unstable} unstable stages, expected 1"
        ) from None


def dtc_pulse(d_mag: int) -> int:
    """DTC output width in t_inv ticks for a 7-bit input magnitude."""
    if not 0 <= d_mag <= DTC_MAX:
        raise ValueError(f"DTC input {d_mag} outside [0, {DTC_MAX}]")
    return int(d_mag)

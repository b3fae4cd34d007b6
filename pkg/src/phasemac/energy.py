"""Energy and throughput model for PMAC vs digital MAC (DMAC) datapaths.

PMAC energy per MAC is linear in the inverter transitions it causes plus a
fixed per-op cost (DTC pulse + readout). A DMAC costs the same per op
regardless of operand values. Memory energy per inference is a weight-read
term amortised over the batch plus a batch-independent constant.

All energies are in femtojoules.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .array import EnergyLedger
from .pmac import LSB_MASK, MAG_MAX

# Reported figures for the fabricated chip and its comparison targets.
CHIP_TOPS_PER_W = 14.0
CHIP_POWER_UW = 152.0
CHIP_MAC_RATE_HZ = 780e6
CHIP_DMAC_RATIO = 8.0
CHIP_RATIO_BATCH1 = 10.0
CHIP_RATIO_BATCH64 = 1.0 / 3.0

COMPARISON_TABLE = (
    # (metric, this work MNIST, this work anomaly, time domain, charge domain, unit)
    ("Domain", "Phase", "Phase", "Time", "Charge", ""),
    ("Process", "28", "28", "65", "40", "nm"),
    ("Resolution", "8", "8", "1", "3", "bit"),
    ("MAC area", "1200", "1200", "13000*", "12000", "um^2"),
    ("MAC area/bit", "150", "150", "13000*", "4000", "um^2"),
    ("Application", "MNIST", "Anomaly Detection", "MNIST", "CIFAR10", ""),
    ("Power", "152", "170", "N.A.", "228**", "uW"),
    ("MAC rate", "780", "700", "N.A.", "1000", "MHz"),
    ("Efficiency", "14", "11.6", "77", "8.77", "TOPS/W"),
    ("Efficiency/bit", "112", "92.8", "77", "26.3", "TOPS/W*bit"),
)
COMPARISON_NOTES = ("* assuming 256 MAC ops", "** includes memory power")
STATIC_OVERHEADS = (
    ("memory area increase for 64x batching", "5", "%"),
    ("area overhead vs DMAC", "~20", "%"),
    ("max operation speed penalty vs DMAC", "~20", "%"),
)

# 400-256-64-256-400 autoencoder: weights read once per batch, one MAC each
REFERENCE_WEIGHTS = 400 * 256 + 256 * 64 + 64 * 256 + 256 * 400

# Each of the 7 magnitude bits is 1 with probability `activity`, so the mean
# magnitude is activity * 127 and the mean MSB+LSB field sum is activity * 22.
_FIELD_SUM_FULL = (MAG_MAX >> 4) + LSB_MASK


@dataclass(frozen=True)
class EnergyParams:
    e_inv: float
    e_fixed: float
    e_dmac: float
    e_weight_read: float
    e_const_mem: float
    mac_rate: float = CHIP_MAC_RATE_HZ
    ops_per_mac: int = 2
    macs_per_inference: int = REFERENCE_WEIGHTS
    weight_reads_per_inference: int = REFERENCE_WEIGHTS

    def __post_init__(self):
        for f in ("e_inv", "e_fixed", "e_dmac", "e_weight_read", "e_const_mem"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be >= 0")
        if self.mac_rate <= 0:
            raise ValueError("mac_rate must be > 0")
        if self.ops_per_mac not in (1, 2):
            raise ValueError("ops_per_mac must be 1 or 2")


@dataclass(frozen=True)
class Calibration:
    """Solved values from :func:`calibrate_defaults`, for the report."""

    params: EnergyParams
    operating_activity: float
    energy_per_mac_at_operating: float
    weight_term: float
    const_term: float

    def lines(self) -> list[tuple[str, float, str]]:
        p = self.params
        return [
            ("e_fixed = ops_per_mac / peak TOPS/W", p.e_fixed, "fJ"),
            ("energy/MAC at operating point = power / MAC rate", self.energy_per_mac_at_operating, "fJ"),
            ("e_inv = (energy/MAC - e_fixed) / transitions/MAC", p.e_inv, "fJ"),
            ("e_dmac = DMAC ratio * energy/MAC at operating point", p.e_dmac, "fJ"),
            ("weight-read term / E_MAC", self.weight_term, "1"),
            ("constant memory term / E_MAC", self.const_term, "1"),
            ("e_weight_read", p.e_weight_read, "fJ"),
            ("e_const_mem per inference", p.e_const_mem, "fJ"),
        ]


def expected_transitions_per_mac(activity: float) -> float:
    """Mean inverter transitions per MAC when each magnitude bit is set with
    probability ``activity`` (independently for input and weight)."""
    if not 0.0 <= activity <= 1.0:
        raise ValueError("activity must be in [0, 1]")
    return (MAG_MAX * activity) * (_FIELD_SUM_FULL * activity)


def solve_memory_anchors(r1: float, b2: int, r2: float) -> tuple[float, float]:
    """Return (weight term, constant term), both relative to E_MAC, such that
    ratio(b) = weight/b + const passes through (1, r1) and (b2, r2)."""
    if b2 <= 1:
        raise ValueError("second anchor must be at batch > 1")
    r1f, r2f = Fraction(r1).limit_denominator(10**9), Fraction(r2).limit_denominator(10**9)
    weight = (r1f - r2f) / (1 - Fraction(1, b2))
    const = r1f - weight
    if weight <= 0 or const < 0:
        raise ValueError(f"anchors ({r1} @ 1, {r2} @ {b2}) give an infeasible memory model")
    return float(weight), float(const)


def calibrate(peak_tops_per_w: float = CHIP_TOPS_PER_W,
              power_uw: float = CHIP_POWER_UW,
              mac_rate: float = CHIP_MAC_RATE_HZ,
              dmac_ratio: float = CHIP_DMAC_RATIO,
              operating_activity: float = 0.10,
              ops_per_mac: int = 2,
              macs_per_inference: int = REFERENCE_WEIGHTS,
              weight_reads_per_inference: int = REFERENCE_WEIGHTS) -> Calibration:
    """Solve the linear calibration equations.

    * peak efficiency (activity -> 0) fixes ``e_fixed``;
    * power at ``mac_rate`` fixes energy/MAC at the operating activity, and
      with it ``e_inv``;
    * the DMAC ratio at the operating activity fixes ``e_dmac``;
    * the batch-1 and batch-64 memory/compute anchors fix the memory terms,
      with E_MAC taken as the DMAC energy of one inference.
    """
    e_fixed = ops_per_mac / (peak_tops_per_w * 1e12) * 1e15
    e_op = power_uw * 1e-6 / mac_rate * 1e15
    t_op = expected_transitions_per_mac(operating_activity)
    if e_op < e_fixed or t_op <= 0:
        raise ValueError("infeasible anchors: operating-point energy below the fixed floor")
    e_inv = (e_op - e_fixed) / t_op
    e_dmac = dmac_ratio * e_op
    weight, const = solve_memory_anchors(CHIP_RATIO_BATCH1, 64, CHIP_RATIO_BATCH64)
    e_mac_inf = macs_per_inference * e_dmac
    params = EnergyParams(
        e_inv=e_inv, e_fixed=e_fixed, e_dmac=e_dmac,
        e_weight_read=weight * e_mac_inf / weight_reads_per_inference,
        e_const_mem=const * e_mac_inf,
        mac_rate=mac_rate, ops_per_mac=ops_per_mac,
        macs_per_inference=macs_per_inference,
        weight_reads_per_inference=weight_reads_per_inference,
    )
    return Calibration(params, operating_activity, e_op, weight, const)


def calibrate_defaults() -> EnergyParams:
    return calibrate().params


def load_params(path: str | Path | None = None, **overrides) -> EnergyParams:
    """Calibrated defaults, overridden by a key=value file and then kwargs."""
    values: dict = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
    values.update(overrides)
    known = {f.name: f.type for f in fields(EnergyParams)}
    unknown = set(values) - set(known)
    if unknown:
        raise ValueError(f"unknown energy parameter(s): {', '.join(sorted(unknown))}")
    ints = {"ops_per_mac", "macs_per_inference", "weight_reads_per_inference"}
    typed = {k: (int(v) if k in ints else float(v)) for k, v in values.items()}
    return replace(calibrate_defaults(), **typed)


def pmac_energy(ledger: EnergyLedger, p: EnergyParams) -> float:
    return ledger.inverter_transitions * p.e_inv + ledger.mac_ops * p.e_fixed


def dmac_energy(n_ops: int, p: EnergyParams) -> float:
    return n_ops * p.e_dmac


def pmac_energy_per_mac(activity: float, p: EnergyParams) -> float:
    return expected_transitions_per_mac(activity) * p.e_inv + p.e_fixed


def vs_dmac_ratio(activity: float, p: EnergyParams) -> float:
    return p.e_dmac / pmac_energy_per_mac(activity, p)


def memory_compute_ratio(batch: int, p: EnergyParams) -> float:
    """E_Memory / E_MAC per inference when weights are shared by ``batch`` inputs."""
    if batch < 1:
        raise ValueError("batch must be >= 1")
    e_weights = p.weight_reads_per_inference * p.e_weight_read
    e_mac = p.macs_per_inference * p.e_dmac
    return (e_weights / batch + p.e_const_mem) / e_mac


def batch_ratio_sweep(batches, p: EnergyParams) -> list[tuple[int, float]]:
    batches = list(batches)
    if not batches:
        raise ValueError("empty batch list")
    return [(int(b), memory_compute_ratio(int(b), p)) for b in batches]


def crossover_batch(p: EnergyParams, limit: int = 1 << 20) -> int:
    """First integer batch at which memory energy drops below compute energy."""
    for b in range(1, limit + 1):
        if memory_compute_ratio(b, p) < 1.0:
            return b
    raise ValueError("memory energy never drops below compute energy")


@dataclass(frozen=True)
class EfficiencyReport:
    energy_per_mac_fj: float
    transitions_per_op: float
    tops_per_w: float
    power_uw: float
    vs_dmac: float

    def rows(self) -> list[tuple[str, float, str]]:
        return [
            ("energy_per_mac", self.energy_per_mac_fj, "fJ"),
            ("transitions_per_op", self.transitions_per_op, "1"),
            ("efficiency", self.tops_per_w, "TOPS/W"),
            ("power_at_mac_rate", self.power_uw, "uW"),
            ("vs_dmac", self.vs_dmac, "x"),
        ]


def _report(e_per_mac: float, transitions_per_op: float, p: EnergyParams) -> EfficiencyReport:
    return EfficiencyReport(
        energy_per_mac_fj=e_per_mac,
        transitions_per_op=transitions_per_op,
        tops_per_w=p.ops_per_mac / (e_per_mac * 1e-15) / 1e12,
        power_uw=e_per_mac * 1e-15 * p.mac_rate * 1e6,
        vs_dmac=p.e_dmac / e_per_mac,
    )


def efficiency_report(ledger: EnergyLedger, elapsed_macs: int, p: EnergyParams) -> EfficiencyReport:
    if elapsed_macs <= 0:
        raise ValueError("no MAC operations to report on")
    return _report(pmac_energy(ledger, p) / elapsed_macs,
                   ledger.inverter_transitions / elapsed_macs, p)


def activity_report(activity: float, p: EnergyParams) -> EfficiencyReport:
    """Report at a modelled mean operand activity, without running the array."""
    return _report(pmac_energy_per_mac(activity, p), expected_transitions_per_mac(activity), p)


def consistency_tops_per_w(power_uw: float = CHIP_POWER_UW,
                                  mac_rate: float = CHIP_MAC_RATE_HZ,
                                  ops_per_mac: int = 2) -> float:
    """TOPS/W implied directly by a power and MAC-rate pair."""
    return ops_per_mac * mac_rate / (power_uw * 1e-6) / 1e12


def activity_operands(rng: np.random.Generator, activity: float, size) -> np.ndarray:
    """Random int8 operands whose 7 magnitude bits are each set w.p. ``activity``."""
    bits = rng.random((*np.atleast_1d(size), 7)) < activity
    mag = (bits * (1 << np.arange(7))).sum(axis=-1)
    sign = np.where(rng.random(np.atleast_1d(size)) < 0.5, -1, 1)
    return (sign * mag).astype(np.int64)

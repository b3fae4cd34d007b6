"""Acceptance criteria; one test per criterion, reported in the terminal summary."""

import itertools
import math
import time

import numpy as np
import pytest

from phasemac.array import EnergyLedger, batched_matmul, max_safe_dot_length
from phasemac.energy import (activity_operands, calibrate_defaults, crossover_batch, dmac_energy,
                             memory_compute_ratio, vs_dmac_ratio)
from phasemac.experiments import (ExperimentConfig, cmd_anomaly, cmd_energy, cmd_mnist,
                                  cmd_oracle, cmd_report, run_oracle)
from phasemac.gro import CounterSaturationError, InvalidPhaseCode, decode_phase, encode_phase, new_gro
from phasemac.pmac import PmacUnit, ref_dot

pytestmark = pytest.mark.acceptance

P = calibrate_defaults()


def test_ac1_oracle():
    """AC1: 10^6 random int8 dot products match ref_dot exactly, < 60 s"""
    t0 = time.perf_counter()
    res = run_oracle(10**6, seed=0)
    elapsed = time.perf_counter() - t0
    assert res.trials >= 10**6
    assert res.mismatches == 0, res.counterexample
    assert elapsed < 60.0
    # the scalar unit path agrees on a sample as well
    rng = np.random.default_rng(1)
    for _ in range(2000):
        n = int(rng.integers(0, 65))
        d, w = rng.integers(-128, 128, (2, n)).tolist()
        unit = PmacUnit()
        for a, b in zip(d, w):
            unit.mac(a, b)
        assert unit.readout() == ref_dot(d, w)


def test_ac2_trace():
    """AC2: d=3, w=1 gives phase 3 (0.6 pi), counter 0; then +7 gives counter 1, phase 0"""
    unit = PmacUnit()
    unit.mac(3, 1)
    g = unit.pos_lsb
    assert g.phase_index == 3 and g.wrap_counter == 0
    assert g.phase_radians == pytest.approx(0.6 * math.pi, abs=1e-15)
    g.advance(7)
    assert (g.wrap_counter, g.phase_index) == (1, 0)
    bare = new_gro(5, 20).advance(3)
    assert (bare.phase_index, bare.wrap_counter) == (3, 0)


def test_ac3_phase_codes():
    """AC3: 10 valid 5-stage phase codes form a bijection, all 22 others rejected"""
    codes = [encode_phase(p, 5) for p in range(10)]
    assert len(set(codes)) == 10
    assert [decode_phase(c, 5) for c in codes] == list(range(10))
    rejected = 0
    for code in itertools.product((0, 1), repeat=5):
        if code in codes:
            continue
        with pytest.raises(InvalidPhaseCode):
            decode_phase(code, 5)
        rejected += 1
    assert rejected == 22


def test_ac4_memory_ratio():
    """AC4: memory/compute ratio 10 at batch 1, 1/3 at batch 64, decreasing, crossover 12"""
    assert abs(memory_compute_ratio(1, P) - 10.0) <= 1e-9
    assert abs(memory_compute_ratio(64, P) - 1 / 3) <= 1e-9
    r = [memory_compute_ratio(b, P) for b in range(1, 129)]
    assert all(a > b for a, b in zip(r, r[1:]))
    assert crossover_batch(P) == 12
    assert r[10] >= 1.0 > r[11]


def test_ac5_dmac_comparison():
    """AC5: vs-DMAC ratio 8.00 at 10% activity, above 8 at 3%, DMAC energy activity-invariant"""
    assert abs(vs_dmac_ratio(0.10, P) - 8.0) <= 1e-6
    assert vs_dmac_ratio(0.03, P) > 8.0
    rng = np.random.default_rng(0)
    dmac = set()
    for a in (0.03, 0.10, 1.0):
        ledger = EnergyLedger()
        batched_matmul(activity_operands(rng, a, (16, 64)), activity_operands(rng, a, (64, 4)), ledger)
        dmac.add(dmac_energy(ledger.mac_ops, P))
    assert len(dmac) == 1


def test_ac6_report(tmp_path):
    """AC6: report shows 14 TOPS/W, 152 uW, 780 MHz, 1200 um^2 and the derived 10.26 TOPS/W"""
    text = cmd_report(ExperimentConfig(out_dir=str(tmp_path)))
    lines = text.splitlines()

    def row(label):
        return next(ln for ln in lines if ln.strip().startswith(label))

    assert row("Efficiency ").split()[1] == "14" and row("Efficiency ").endswith("TOPS/W")
    assert row("Power").split()[1] == "152" and row("Power").endswith("uW")
    assert row("MAC rate").split()[2] == "780" and row("MAC rate").endswith("MHz")
    assert row("MAC area ").split()[2] == "1200" and row("MAC area ").endswith("um^2")
    check = row("efficiency from 152 uW @ 780 MHz")
    assert check.split()[-2:] == ["10.26", "TOPS/W"]


def test_ac7_anomaly_sweep(tmp_path):
    """AC7: anomaly sweep over 5 seeds: 8b corr >= 0.95, corr non-increasing, 2b AUC <= float - 0.10, < 10 min"""
    t0 = time.perf_counter()
    res = cmd_anomaly(ExperimentConfig(task="anomaly", anomaly_seeds=5, out_dir=str(tmp_path)))
    elapsed = time.perf_counter() - t0
    corr = [res.mean_corr(f"{b}b") for b in (8, 6, 4, 2)]
    print("mean corr 8/6/4/2:", corr, "AUC float/2b:", res.mean_auc("float"), res.mean_auc("2b"))
    assert corr[0] >= 0.95
    assert all(a >= b for a, b in zip(corr, corr[1:]))
    assert res.mean_auc("2b") <= res.mean_auc("float") - 0.10
    assert elapsed < 600


def test_ac8_mnist(tmp_path, mnist_dir):
    """AC8: MNIST 8k/1k over 3 seeds: float >= 90%, |float - 8b| <= 1.5 points, < 10 min"""
    t0 = time.perf_counter()
    res = cmd_mnist(ExperimentConfig(task="mnist", data_dir=str(mnist_dir), out_dir=str(tmp_path)))
    elapsed = time.perf_counter() - t0
    assert len(res.float_acc) == 3
    assert res.mean_float >= 0.90
    assert res.gap_points <= 1.5
    assert elapsed < 600


def test_ac9_saturation():
    """AC9: full-scale length max_safe+k raises naming the GRO; length max_safe succeeds"""
    n = max_safe_dot_length()
    assert n == 5504
    for sign, target in ((1, "pos_lsb"), (-1, "neg_lsb")):
        unit = PmacUnit()
        for _ in range(n):
            unit.mac(127, sign * 127)
        assert unit.readout() == sign * n * 127 * 127
        for k in (1, 2, 10):
            unit = PmacUnit()
            with pytest.raises(CounterSaturationError) as exc:
                for _ in range(n + k):
                    unit.mac(127, sign * 127)
            assert exc.value.gro == target
            assert target in str(exc.value)


def _csvs(out):
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


def test_ac10_determinism(tmp_path, mnist_dir):
    """AC10: re-running every command with the same seed gives byte-identical CSVs"""
    small = dict(seed=3, oracle_trials=20000, anomaly_seeds=1, series_length=8000, horizon=100,
                 ae_hidden=(64,), ae_epochs=3, mnist_seeds=1, mnist_train=1000, mnist_test=300,
                 mnist_epochs=2, data_dir=str(mnist_dir))
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        for task, cmd in (("oracle", cmd_oracle), ("energy", cmd_energy), ("anomaly", cmd_anomaly),
                          ("mnist", cmd_mnist), ("report", cmd_report)):
            cmd(ExperimentConfig(task=task, out_dir=str(out), **small))
        runs.append(_csvs(out))
    assert set(runs[0]) >= {"oracle.csv", "energy_batch.csv", "energy_activity.csv",
                            "anomaly_scores.csv", "anomaly_summary.csv", "mnist.csv", "report.csv"}
    assert runs[0] == runs[1]

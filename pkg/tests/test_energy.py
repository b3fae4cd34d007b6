import math

import numpy as np
import pytest

from phasemac import energy
from phasemac.array import EnergyLedger, batched_matmul
from phasemac.energy import (EnergyParams, activity_report, batch_ratio_sweep, calibrate,
                             calibrate_defaults, crossover_batch, dmac_energy, efficiency_report,
                             expected_transitions_per_mac, memory_compute_ratio, pmac_energy,
                             vs_dmac_ratio)

P = calibrate_defaults()


def _unit_params(**kw):
    base = dict(e_inv=1.0, e_fixed=5.0, e_dmac=100.0, e_weight_read=1.0, e_const_mem=0.0)
    base.update(kw)
    return EnergyParams(**base)


def test_pmac_energy_linear_form():
    p = _unit_params()
    assert pmac_energy(EnergyLedger(), p) == 0
    assert pmac_energy(EnergyLedger(inverter_transitions=100, mac_ops=1), p) == 105
    assert pmac_energy(EnergyLedger(inverter_transitions=0, mac_ops=7), p) == 35


def test_zero_activations_hit_the_fixed_floor():
    ledger = EnergyLedger()
    batched_matmul(np.full((3, 4), 90), np.zeros((4, 2), dtype=int), ledger)
    assert pmac_energy(ledger, P) == pytest.approx(ledger.mac_ops * P.e_fixed)


def test_dmac_energy():
    assert dmac_energy(0, P) == 0
    assert dmac_energy(2000, P) == pytest.approx(2 * dmac_energy(1000, P))


def test_params_validation():
    with pytest.raises(ValueError):
        _unit_params(e_inv=-1.0)
    with pytest.raises(ValueError):
        _unit_params(mac_rate=0.0)
    with pytest.raises(ValueError):
        _unit_params(ops_per_mac=3)


@pytest.mark.parametrize("a", [0.0, 0.03, 0.1, 0.37, 1.0])
def test_expected_transitions_by_enumeration(a):
    # every magnitude bit is set with probability a, independently
    p_mag = np.array([math.prod(a if (m >> k) & 1 else 1 - a for k in range(7))
                      for m in range(128)])
    t = np.array([[d * (w // 16 + w % 16) for w in range(128)] for d in range(128)])
    assert expected_transitions_per_mac(a) == pytest.approx(p_mag @ t @ p_mag, rel=1e-12, abs=1e-12)
    assert (np.arange(128) @ p_mag) == pytest.approx(127 * a)


def test_simulated_activity_close_to_model():
    rng = np.random.default_rng(0)
    ledger = EnergyLedger()
    W = energy.activity_operands(rng, 0.1, (64, 256))
    X = energy.activity_operands(rng, 0.1, (256, 16))
    batched_matmul(W, X, ledger)
    assert ledger.inverter_transitions / ledger.mac_ops == pytest.approx(27.94, rel=0.05)


def test_memory_anchors_match_linear_solve():
    # ratio(b) = weight / b + const through (1, 10) and (64, 1/3)
    weight, const = np.linalg.solve([[1.0, 1.0], [1 / 64, 1.0]], [10.0, 1 / 3])
    assert memory_compute_ratio(1, P) == pytest.approx(10.0, abs=1e-12)
    assert memory_compute_ratio(64, P) == pytest.approx(1 / 3, abs=1e-12)
    assert memory_compute_ratio(10**12, P) == pytest.approx(const, abs=1e-9)
    assert weight == pytest.approx(9.8201, abs=1e-4)
    assert const == pytest.approx(0.1799, abs=1e-4)
    # first integer batch past weight / (1 - const) ~= 11.97
    assert crossover_batch(P) == math.ceil(weight / (1 - const)) == 12


def test_memory_ratio_decreasing_and_convex():
    r = np.array([memory_compute_ratio(b, P) for b in range(1, 257)])
    assert (np.diff(r) < 0).all()
    assert (np.diff(r, 2) > 0).all()
    with pytest.raises(ValueError):
        memory_compute_ratio(0, P)


def test_batch_sweep():
    rows = batch_ratio_sweep([1, 2, 4, 8, 16, 32, 64], P)
    ratios = [r for _, r in rows]
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    assert batch_ratio_sweep([1], P)[0][1] == pytest.approx(10.0)
    assert batch_ratio_sweep([64], P)[0][1] == pytest.approx(0.3333333, abs=1e-7)
    with pytest.raises(ValueError):
        batch_ratio_sweep([], P)


def test_calibration_identities():
    cal = calibrate()
    p = cal.params
    assert p.ops_per_mac / (p.e_fixed * 1e-15) / 1e12 == pytest.approx(14.0)
    assert cal.energy_per_mac_at_operating * 1e-15 * 780e6 == pytest.approx(152e-6)
    assert vs_dmac_ratio(0.10, p) == pytest.approx(8.0, abs=1e-9)
    assert vs_dmac_ratio(0.03, p) > 8.0
    assert vs_dmac_ratio(0.0, p) == pytest.approx(p.e_dmac / p.e_fixed)


def test_calibration_rejects_infeasible_anchor():
    with pytest.raises(ValueError):
        calibrate(peak_tops_per_w=1.0)
    with pytest.raises(ValueError):
        energy.solve_memory_anchors(1.0, 64, 2.0)


def test_pmac_energy_strictly_increasing_in_activity_dmac_flat():
    acts = np.linspace(0.0, 1.0, 51)
    e = [energy.pmac_energy_per_mac(a, P) for a in acts]
    assert all(x < y for x, y in zip(e, e[1:]))
    ratios = [vs_dmac_ratio(a, P) for a in acts]
    assert max(ratios) == ratios[0]
    assert len({dmac_energy(1000, P) for _ in acts}) == 1


def test_efficiency_report_195fj():
    p = _unit_params(e_inv=0.0, e_fixed=195.0, e_dmac=1560.0)
    rep = efficiency_report(EnergyLedger(mac_ops=1000), 1000, p)
    assert rep.tops_per_w == pytest.approx(2 / 195e-15 / 1e12)
    assert round(rep.tops_per_w, 2) == 10.26
    assert rep.vs_dmac == pytest.approx(8.0)
    half = efficiency_report(EnergyLedger(mac_ops=1000), 1000, _unit_params(e_inv=0.0, e_fixed=97.5))
    assert half.tops_per_w == pytest.approx(2 * rep.tops_per_w)
    with pytest.raises(ValueError):
        efficiency_report(EnergyLedger(), 0, p)


def test_activity_report_ceiling():
    assert activity_report(0.0, P).tops_per_w == pytest.approx(P.ops_per_mac / P.e_fixed * 1e3)
    assert activity_report(0.1, P).power_uw == pytest.approx(152.0)


def test_consistency_arithmetic():
    assert energy.consistency_tops_per_w() == pytest.approx(10.263, abs=1e-3)
    assert energy.consistency_tops_per_w(ops_per_mac=1) == pytest.approx(5.132, abs=1e-3)


def test_load_params_from_file(tmp_path):
    cfg = tmp_path / "energy.cfg"
    cfg.write_text("# overrides\ne_inv = 2.5\nops_per_mac=1\n\n")
    p = energy.load_params(cfg)
    assert p.e_inv == 2.5 and p.ops_per_mac == 1
    assert p.e_fixed == P.e_fixed
    assert energy.load_params() == P
    cfg.write_text("bogus=1\n")
    with pytest.raises(ValueError):
        energy.load_params(cfg)

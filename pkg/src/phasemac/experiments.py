"""Experiment suites behind the ``phasemac`` command.

Each ``cmd_*`` function takes an :class:`ExperimentConfig`, writes its CSV
(and gnuplot) outputs under ``config.out_dir`` and returns a result object
that tests can inspect. Outputs depend only on the config and seed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import energy
from .array import EnergyLedger, batched_matmul, max_safe_dot_length
from .data import gen_synthetic, load_mnist, make_windows, window_labels
from .files import atomic_write_text, write_csv
from .gro import DEFAULT_COUNTER_BITS, DEFAULT_STAGES, CounterSaturationError
from .nn import FcModel, PmacBackend, anomaly_scores, fc_forward, roc_auc, train_sgd
from .pmac import PmacBank, ref_dot

log = logging.getLogger(__name__)

TASKS = ("oracle", "energy", "anomaly", "mnist", "report")


@dataclass
class ExperimentConfig:
    task: str = "report"
    seed: int = 0
    bits: tuple[int, ...] = (8, 6, 4, 2)
    batches: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64, 128)
    activities: tuple[float, ...] = (0.03, 0.10, 1.0)
    data_dir: str | None = None
    out_dir: str = "out"
    energy_config: str | None = None
    full: bool = False
    counter_bits: int = DEFAULT_COUNTER_BITS
    num_stages: int = DEFAULT_STAGES
    # oracle
    oracle_trials: int = 10**6
    oracle_max_len: int = 64
    # anomaly
    anomaly_seeds: int = 5
    anomaly_kind: str = "mixed"
    series_length: int = 20000
    noise_sigma: float = 0.1
    horizon: int = 400
    ae_hidden: tuple[int, ...] = (256, 64, 256)
    ae_epochs: int = 30
    ae_lr: float = 0.01
    # mnist
    mnist_seeds: int = 3
    mnist_train: int = 8000
    mnist_test: int = 1000
    mnist_hidden: tuple[int, ...] = (128,)
    mnist_epochs: int = 15
    mnist_lr: float = 0.05

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        bad = [b for b in self.bits if not 2 <= b <= 8]
        if bad:
            raise ValueError(f"bit widths must be in [2, 8], got {bad}")
        if any(b < 1 for b in self.batches):
            raise ValueError("batch sizes must be >= 1")

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    @classmethod
    def field_types(cls) -> dict[str, str]:
        return {f.name: f.type for f in fields(cls)}


# -- oracle -----------------------------------------------------------------

@dataclass
class OracleResult:
    trials: int
    mismatches: int
    max_length: int
    boundary_lengths: tuple[int, ...]
    counterexample: tuple | None = None
    elapsed_s: float = 0.0

    @property
    def passed(self) -> bool:
        return self.mismatches == 0


def _oracle_cases(rng: np.random.Generator, n_trials: int, max_len: int, boundary: tuple[int, ...]):
    """Yield (d_rows, w_rows) groups sharing one length."""
    n_boundary = 0
    for L in boundary:
        signs = rng.choice([-1, 1], size=(4, 1))
        full_d = np.broadcast_to(127 * signs, (4, L)).copy()
        full_w = np.broadcast_to(127 * signs, (4, L)).copy()
        rand = rng.integers(-128, 128, size=(2, 4, L))
        yield np.vstack([full_d, rand[0]]), np.vstack([full_w, rand[1]])
        n_boundary += 8
    n_rest = max(n_trials - n_boundary, 0)
    lengths = rng.integers(0, max_len + 1, size=n_rest)
    for L in range(max_len + 1):
        k = int(np.count_nonzero(lengths == L))
        if k:
            yield rng.integers(-128, 128, size=(k, L)), rng.integers(-128, 128, size=(k, L))


def run_oracle(n_trials: int = 10**6, seed: int = 0, max_len: int = 64,
               counter_bits: int = DEFAULT_COUNTER_BITS,
               num_stages: int = DEFAULT_STAGES) -> OracleResult:
    """Compare PMAC dot products against :func:`ref_dot` on random int8 vectors.

    Besides uniformly random lengths in [0, max_len], the run includes
    full-scale and random vectors at the last two counter-safe lengths.
    """
    t0 = time.perf_counter()
    safe = max_safe_dot_length(counter_bits, num_stages)
    if max_len > safe:
        raise ValueError(f"oracle_max_len={max_len} exceeds the counter-safe length {safe}")
    boundary = tuple(L for L in (safe - 1, safe) if L > 0)
    rng = np.random.default_rng(seed)
    trials = mismatches = 0
    first = None
    for D, W in _oracle_cases(rng, n_trials, max_len, boundary):
        bank = PmacBank((len(D),), num_stages, counter_bits)
        try:
            for j in range(D.shape[1]):
                bank.mac(D[:, j], W[:, j])
            got = [int(v) for v in bank.readout()]
        except CounterSaturationError as e:
            # every length here is counter-safe, so saturation is itself a defect
            log.warning("oracle: %s", e)
            got = [None] * len(D)
        for i in range(len(D)):
            want = ref_dot(D[i].tolist(), W[i].tolist())
            if got[i] != want:
                mismatches += 1
                if first is None:
                    first = (D[i].tolist(), W[i].tolist(), got[i], want)
        trials += len(D)
    return OracleResult(trials, mismatches, max(max_len, *boundary, 0), boundary, first,
                        time.perf_counter() - t0)


def cmd_oracle(cfg: ExperimentConfig) -> OracleResult:
    res = run_oracle(cfg.oracle_trials, cfg.seed, cfg.oracle_max_len, cfg.counter_bits,
                     cfg.num_stages)
    write_csv(cfg.out / "oracle.csv", "oracle", ["metric", "value"], [
        ("trials", res.trials),
        ("mismatches", res.mismatches),
        ("max_length", res.max_length),
        ("boundary_lengths", " ".join(map(str, res.boundary_lengths))),
        ("passed", res.passed),
    ])
    print(f"oracle: {res.trials} trials, {res.mismatches} mismatches "
          f"({res.elapsed_s:.1f} s)")
    if res.counterexample:
        d, w, got, want = res.counterexample
        print(f"first counterexample: len={len(d)} pmac={got} ref={want}\n  d={d}\n  w={w}")
    return res


# -- energy -----------------------------------------------------------------

@dataclass
class EnergyResult:
    sweep: list[tuple[int, float]]
    crossover: int
    activity_rows: list[tuple]
    calibration: energy.Calibration


def _simulated_ledger(rng: np.random.Generator, activity: float, cfg: ExperimentConfig,
                      rows: int = 64, cols: int = 256, batch: int = 16) -> EnergyLedger:
    ledger = EnergyLedger()
    W = energy.activity_operands(rng, activity, (rows, cols))
    X = energy.activity_operands(rng, activity, (cols, batch))
    batched_matmul(W, X, ledger, counter_bits=cfg.counter_bits, num_stages=cfg.num_stages)
    return ledger


def cmd_energy(cfg: ExperimentConfig) -> EnergyResult:
    cal = energy.calibrate()
    p = energy.load_params(cfg.energy_config) if cfg.energy_config else cal.params
    sweep = energy.batch_ratio_sweep(cfg.batches, p)
    write_csv(cfg.out / "energy_batch.csv", "energy_batch", ["batch", "ratio"], sweep)

    rng = np.random.default_rng(cfg.seed)
    rows = []
    for a in cfg.activities:
        model = energy.activity_report(a, p)
        rows.append((a, "model", model.transitions_per_op, model.energy_per_mac_fj,
                     model.tops_per_w, model.power_uw, model.vs_dmac))
        ledger = _simulated_ledger(rng, a, cfg)
        sim = energy.efficiency_report(ledger, ledger.mac_ops, p)
        rows.append((a, "simulated", sim.transitions_per_op, sim.energy_per_mac_fj,
                     sim.tops_per_w, sim.power_uw, sim.vs_dmac))
    write_csv(cfg.out / "energy_activity.csv", "energy_activity",
              ["activity", "source", "transitions_per_op", "energy_fj_per_mac", "tops_per_w",
               "power_uw", "vs_dmac"], rows)
    write_csv(cfg.out / "energy_calibration.csv", "energy_calibration",
              ["metric", "value", "unit"], cal.lines())
    atomic_write_text(cfg.out / "energy_batch.gp", GNUPLOT_BATCH)
    crossover = energy.crossover_batch(p)
    for b, r in sweep:
        print(f"batch {b:4d}  memory/compute {r:.4f}")
    print(f"crossover batch: {crossover}")
    return EnergyResult(sweep, crossover, rows, cal)


GNUPLOT_BATCH = """\
set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set logscale x 2
set xlabel 'batch size'
set ylabel 'E_memory / E_compute'
set terminal pngcairo size 800,500
set output 'energy_batch.png'
plot 'energy_batch.csv' using 1:2 with linespoints title 'memory/compute', 1 with lines dt 2 title 'parity'
"""

GNUPLOT_ANOMALY = """\
set datafile separator ','
set datafile commentschars '#'
set xlabel 'window'
set ylabel 'anomaly score (MSE)'
set logscale y
set terminal pngcairo size 900,500
set output 'anomaly_scores.png'
res = '{resolutions}'
plot for [r in res] 'anomaly_scores.csv' using ($1=={seed} && strcol(4) eq r ? $2 : 1/0):5 \\
    with lines title r
"""


# -- anomaly ----------------------------------------------------------------

@dataclass
class AnomalyResult:
    resolutions: list[str]
    auc: dict[str, list[float]] = field(default_factory=dict)
    corr: dict[str, list[float]] = field(default_factory=dict)

    def mean_auc(self, res: str) -> float:
        return float(np.mean(self.auc[res]))

    def mean_corr(self, res: str) -> float:
        return float(np.mean(self.corr[res]))


def anomaly_task(seed: int, cfg: ExperimentConfig):
    """Train a predictor on normal data; return (model, test windows, labels)."""
    h = cfg.horizon
    train = gen_synthetic(cfg.series_length, noise_sigma=cfg.noise_sigma, seed=seed)
    test = gen_synthetic(cfg.series_length, noise_sigma=cfg.noise_sigma,
                         anomaly_kind=cfg.anomaly_kind, seed=seed + 1000)
    w_train, _ = make_windows(train.samples, 2 * h, stride=20)
    w_test, starts = make_windows(test.samples, 2 * h, stride=50)
    labels = window_labels(starts, 2 * h, test.anomaly_spans)
    model = FcModel.random([h, *cfg.ae_hidden, h], seed=seed)
    model = train_sgd(model, w_train[:, :h], w_train[:, h:], lr=cfg.ae_lr, epochs=cfg.ae_epochs,
                      batch=32, seed=seed, momentum=0.9)
    return model, w_test, labels


def cmd_anomaly(cfg: ExperimentConfig) -> AnomalyResult:
    resolutions = ["float"] + [f"{b}b" for b in cfg.bits]
    result = AnomalyResult(resolutions, {r: [] for r in resolutions}, {r: [] for r in resolutions})
    score_rows, summary_rows = [], []
    for k in range(cfg.anomaly_seeds):
        seed = cfg.seed + k
        model, windows, labels = anomaly_task(seed, cfg)
        ref = anomaly_scores(model, windows, backend="float")
        for res in resolutions:
            if res == "float":
                scores = ref
            else:
                backend = PmacBackend(cfg.counter_bits, cfg.num_stages)
                scores = anomaly_scores(model, windows, bits=int(res[:-1]), backend=backend)
            auc = roc_auc(scores, labels)
            corr = float(np.corrcoef(ref, scores)[0, 1])
            result.auc[res].append(auc)
            result.corr[res].append(corr)
            summary_rows.append((seed, res, auc, corr))
            score_rows.extend((seed, i, bool(labels[i]), res, float(s)) for i, s in enumerate(scores))
            print(f"seed {seed} {res:>5}: AUC {auc:.3f}  corr(float) {corr:.4f}")
    for res in resolutions:
        summary_rows.append(("mean", res, result.mean_auc(res), result.mean_corr(res)))
    write_csv(cfg.out / "anomaly_scores.csv", "anomaly_scores",
              ["seed", "window", "label", "resolution", "score"], score_rows)
    write_csv(cfg.out / "anomaly_summary.csv", "anomaly_summary",
              ["seed", "resolution", "auc", "corr_float"], summary_rows)
    atomic_write_text(cfg.out / "anomaly_scores.gp",
                      GNUPLOT_ANOMALY.format(resolutions=" ".join(resolutions), seed=cfg.seed))
    return result


# -- mnist ------------------------------------------------------------------

@dataclass
class MnistResult:
    float_acc: list[float]
    pmac_acc: list[float]

    @property
    def mean_float(self) -> float:
        return float(np.mean(self.float_acc))

    @property
    def mean_pmac(self) -> float:
        return float(np.mean(self.pmac_acc))

    @property
    def gap_points(self) -> float:
        return 100.0 * abs(self.mean_float - self.mean_pmac)


def mnist_setup(cfg: ExperimentConfig):
    """Sizes and architecture: desk subset by default, full Table-1 scale with ``full``."""
    if cfg.full:
        return 60000, 10000, [784, 512, 256, 128, 64, 10], 20
    return cfg.mnist_train, cfg.mnist_test, [784, *cfg.mnist_hidden, 10], cfg.mnist_epochs


def cmd_mnist(cfg: ExperimentConfig) -> MnistResult:
    x_train, y_train = load_mnist(cfg.data_dir, "train")
    x_test, y_test = load_mnist(cfg.data_dir, "test")
    n_train, n_test, dims, epochs = mnist_setup(cfg)
    res = MnistResult([], [])
    rows = []
    seeds = 1 if cfg.full else cfg.mnist_seeds
    for k in range(seeds):
        seed = cfg.seed + k
        rng = np.random.default_rng(seed)
        i_tr = rng.permutation(len(x_train))[:n_train]
        i_te = rng.permutation(len(x_test))[:n_test]
        xtr = x_train[i_tr].reshape(len(i_tr), -1) / 255.0
        xte = x_test[i_te].reshape(len(i_te), -1) / 255.0
        ytr, yte = y_train[i_tr].astype(np.int64), y_test[i_te].astype(np.int64)
        model = train_sgd(FcModel.random(dims, seed=seed), xtr, ytr, lr=cfg.mnist_lr,
                          epochs=epochs, batch=32, seed=seed, loss="xent", momentum=0.9)
        acc_f = float(np.mean(fc_forward(model, xte, "float").argmax(axis=1) == yte))
        backend = PmacBackend(cfg.counter_bits, cfg.num_stages)
        acc_p = float(np.mean(fc_forward(model, xte, backend, bits=8).argmax(axis=1) == yte))
        res.float_acc.append(acc_f)
        res.pmac_acc.append(acc_p)
        rows.append((seed, 100 * acc_f, 100 * acc_p, 100 * (acc_f - acc_p)))
        print(f"seed {seed}: float {100 * acc_f:.1f}%  8b PMAC {100 * acc_p:.1f}%")
    rows.append(("mean", 100 * res.mean_float, 100 * res.mean_pmac,
                 100 * (res.mean_float - res.mean_pmac)))
    write_csv(cfg.out / "mnist.csv", "mnist",
              ["seed", "float_acc_pct", "pmac8_acc_pct", "gap_pct"], rows)
    return res


# -- report -----------------------------------------------------------------

def report_rows(p: energy.EnergyParams | None = None) -> list[tuple[str, str, str, str]]:
    """(section, metric, value, unit) rows for the comparison report."""
    cal = energy.calibrate()
    p = p or cal.params
    rows = []
    columns = ("this work (MNIST)", "this work (anomaly)", "time-domain MAC", "charge-domain MAC")
    for k, column in enumerate(columns, 1):
        rows.extend((f"reported {column}", r[0], r[k], r[-1]) for r in energy.COMPARISON_TABLE)
    check = energy.consistency_tops_per_w(ops_per_mac=p.ops_per_mac)
    rows.append(("arithmetic check", "efficiency from 152 uW @ 780 MHz", f"{check:.2f}", "TOPS/W"))
    rows.append(("arithmetic check", "ops per MAC convention", str(p.ops_per_mac), "1"))
    for name, value, unit in cal.lines():
        rows.append(("model calibration", name, f"{value:.6g}", unit))
    for a in (0.03, 0.10, 1.0):
        rep = energy.activity_report(a, p)
        for name, value, unit in rep.rows():
            rows.append((f"model @ {a:.0%} activity", name, f"{value:.4g}", unit))
    rows.append(("model", "memory/compute crossover batch", str(energy.crossover_batch(p)), "1"))
    for name, value, unit in energy.STATIC_OVERHEADS:
        rows.append(("reported static", name, value, unit))
    return rows


def render_report(rows) -> str:
    heads = ("metric", "this work (MNIST)", "this work (anomaly)", "time domain", "charge domain")
    widths = (16, 19, 20, 13, 14)
    lines = ["PhaseMAC comparison report", "",
             "[reported performance comparison]",
             "  " + "".join(h.ljust(w) for h, w in zip(heads, widths)) + "unit"]
    for row in energy.COMPARISON_TABLE:
        lines.append("  " + "".join(c.ljust(w) for c, w in zip(row, widths)) + row[-1])
    lines.extend(f"  {note}" for note in energy.COMPARISON_NOTES)
    section = None
    for sec, metric, value, unit in rows:
        if sec.startswith("reported") and "static" not in sec:
            continue
        if sec != section:
            lines += ["", f"[{sec}]"]
            section = sec
        lines.append(f"  {metric:<52} {value:>12} {unit}")
    return "\n".join(lines) + "\n"


def cmd_report(cfg: ExperimentConfig) -> str:
    p = energy.load_params(cfg.energy_config) if cfg.energy_config else None
    rows = report_rows(p)
    text = render_report(rows)
    atomic_write_text(cfg.out / "report.txt", text)
    write_csv(cfg.out / "report.csv", "report", ["section", "metric", "value", "unit"], rows)
    print(text, end="")
    return text


COMMANDS = {"oracle": cmd_oracle, "energy": cmd_energy, "anomaly": cmd_anomaly,
            "mnist": cmd_mnist, "report": cmd_report}

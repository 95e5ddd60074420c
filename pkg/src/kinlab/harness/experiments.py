"""Experiment drivers: quantum ensembles, kinetic comparisons, report CSVs.

Seeding layout: disorder realization i uses the counter-based stream
(master_seed, i); auxiliary consumers (Boltzmann particles, dos table,
bootstrap, the expansion study) use generators keyed by [master_seed, tag]
so adding realizations never shifts existing ones.  All reductions run in
realization order, so results are independent of the worker count.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from kinlab import boltzmann as bz
from kinlab.dynamics import PropagatorConfig, duhamel_ladder, evolve_full
from kinlab.graphs import (
    BoundParams,
    amplitude_bound,
    classify,
    enumerate_connected,
    schedule_parameters,
    variance_bound,
)
from kinlab.harness.config import ExperimentConfig
from kinlab.harness.manifest import RunManifest
from kinlab.harness.stats import EnsembleStats, bootstrap_slope, fit_loglog_slope
from kinlab.lattice import WaveFunction, sample_disorder, wkb_state
from kinlab.resolvent import fit_scaling, integral_1res, integral_2res, integral_3res
from kinlab.wigner import pair_wigner, wkb_limit_sampler

# auxiliary seed tags (second word of the generator key)
SEED_BOLTZMANN = 7001
SEED_DOS = 7002
SEED_BOOTSTRAP = 7003
SEED_STUDY = 7004


# ---------------------------------------------------------------------------
# CSV helpers (repr round-trip for floats)
# ---------------------------------------------------------------------------


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow(
                [repr(float(c)) if isinstance(c, (float, np.floating)) else str(c) for c in row]
            )


def read_csv(path):
    """Rows as dicts; numeric-looking fields parsed back to int/float."""
    out = []
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        for row in r:
            d = {}
            for key, cell in zip(header, row):
                try:
                    d[key] = int(cell)
                except ValueError:
                    try:
                        d[key] = float(cell)
                    except ValueError:
                        d[key] = cell
            out.append(d)
    return out


# ---------------------------------------------------------------------------
# Quantum ensemble
# ---------------------------------------------------------------------------


def _realization_value(args):
    """One disorder realization: build, evolve, pair.  Returns (stream, value, trunc)."""
    cfg, lam, stream, coupling = args
    eta = lam**2
    box = cfg.box()
    V = sample_disorder(box, cfg.master_seed, stream)
    psi0 = wkb_state(cfg.wkb, eta, box)
    t = cfg.T / eta
    psi_t = evolve_full(psi0, V, coupling, t, PropagatorConfig(dt=cfg.dt))
    pairing = pair_wigner(cfg.observable, psi_t, eta)
    return stream, pairing.value, pairing.truncation_error


def run_ensemble(
    cfg: ExperimentConfig, lam: float, workers: int = 1, coupling_override: float = None
) -> EnsembleStats:
    """Disorder ensemble of the Wigner observable at coupling lam.

    Realization i draws disorder stream i; stats aggregate in stream order
    regardless of the worker pool, so growing n_realizations leaves existing
    realizations unchanged.  `coupling_override` evolves with a different
    disorder coupling at fixed eta = lam^2 (0 disables the disorder).
    """
    if lam not in cfg.lambdas:
        raise ValueError(f"lam={lam} not in the configured list {cfg.lambdas}")
    coupling = lam if coupling_override is None else coupling_override
    jobs = [(cfg, lam, i, coupling) for i in range(1, cfg.n_realizations + 1)]
    stats = EnsembleStats(lam=lam, eta=lam**2)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_realization_value, jobs, chunksize=1))
    else:
        results = [_realization_value(j) for j in jobs]
    for stream, value, trunc in results:  # already in stream order
        stats.values.append(value)
        stats.truncation_errors.append(trunc)
    return stats


def ensemble_csv_rows(stats: EnsembleStats):
    rows = []
    for i, (v, tr) in enumerate(zip(stats.values, stats.truncation_errors), start=1):
        rows.append([i, float(v.real), float(v.imag), float(tr)])
    return rows


# ---------------------------------------------------------------------------
# Self-averaging experiment
# ---------------------------------------------------------------------------


@dataclass
class SelfAveragingReport:
    lams: tuple
    stats: list
    variances: tuple
    slope: float
    slope_ci: tuple
    strictly_decreasing: bool
    envelopes: tuple  # variance_bound headline per coupling (nan when lam > 1/2)


def run_selfaveraging(cfg: ExperimentConfig, workers: int = 1) -> SelfAveragingReport:
    stats = [run_ensemble(cfg, lam, workers) for lam in cfg.lambdas]
    variances = tuple(s.variance for s in stats)
    rng = np.random.default_rng([cfg.master_seed, SEED_BOOTSTRAP])
    slope, lo, hi = bootstrap_slope(
        cfg.lambdas, [s.real_parts() for s in stats], n_boot=2000, rng=rng
    )
    dec = all(b < a for a, b in zip(variances, variances[1:]))
    envelopes = tuple(
        variance_bound(cfg.T, lam).envelope if lam <= 0.5 else float("nan")
        for lam in cfg.lambdas
    )
    return SelfAveragingReport(cfg.lambdas, stats, variances, slope, (lo, hi), dec, envelopes)


def selfavg_csv_rows(rep: SelfAveragingReport):
    rows = []
    for lam, s, env in zip(rep.lams, rep.stats, rep.envelopes):
        m = s.mean
        rows.append(
            [
                float(lam),
                float(lam**2),
                s.n,
                float(m.real),
                float(m.imag),
                float(s.variance),
                float(s.stderr_mean),
                float(s.central_moment(2)),
                float(s.central_moment(4)),
                float(env),
            ]
        )
    return rows


SELFAVG_HEADER = [
    "lam", "eta", "n_realizations", "mean_re", "mean_im",
    "variance", "stderr_mean", "m2", "m4", "envelope",
]


# ---------------------------------------------------------------------------
# Kinetic comparison
# ---------------------------------------------------------------------------


@dataclass
class KineticComparison:
    lams: tuple
    quantum_mean: tuple
    quantum_stderr: tuple
    boltzmann_value: tuple
    boltzmann_stderr: tuple
    differences: tuple
    combined_errors: tuple
    nonincreasing_within_errors: bool


def _dos_table(cfg: ExperimentConfig) -> bz.DosTable:
    rng = np.random.default_rng([cfg.master_seed, SEED_DOS])
    return bz.build_dos_table(cfg.dos_samples, rng, bins=cfg.dos_bins)


def boltzmann_observable(cfg: ExperimentConfig, T: float, table=None, collisions=True):
    """(value, stderr) of the observable under the transport solution at time T."""
    if table is None:
        table = _dos_table(cfg)
    rng = np.random.default_rng([cfg.master_seed, SEED_BOLTZMANN])
    shell = bz.ShellSamplerConfig(shell_halfwidth=cfg.shell_halfwidth)

    def init(n, r):
        return wkb_limit_sampler(cfg.wkb, n, r)

    ens = bz.solve(init, T, cfg.n_particles, shell, rng, table, collisions=collisions)
    return bz.observable(ens, cfg.observable)


def run_kinetic_comparison(
    cfg: ExperimentConfig, workers: int = 1, ensemble_stats=None
) -> KineticComparison:
    """E<J, W> per coupling against the transport value <J, mu_T>.

    The transport side is coupling-independent; its sampling error and the
    quantum-side realization error combine in quadrature, plus the Wigner
    truncation bound linearly.
    """
    if ensemble_stats is None:
        ensemble_stats = [run_ensemble(cfg, lam, workers) for lam in cfg.lambdas]
    table = _dos_table(cfg)
    b_val, b_err = boltzmann_observable(cfg, cfg.T, table)

    q_means, q_errs, diffs, combined = [], [], [], []
    for s in ensemble_stats:
        qm = s.mean.real
        qe = s.stderr_mean
        q_means.append(qm)
        q_errs.append(qe)
        diffs.append(abs(qm - b_val.real))
        combined.append(math.sqrt(qe**2 + b_err**2) + s.max_truncation)
    ok = all(
        diffs[i + 1] <= diffs[i] + combined[i] + combined[i + 1]
        for i in range(len(diffs) - 1)
    )
    return KineticComparison(
        cfg.lambdas,
        tuple(q_means),
        tuple(q_errs),
        (float(b_val.real),) * len(cfg.lambdas),
        (float(b_err),) * len(cfg.lambdas),
        tuple(diffs),
        tuple(combined),
        ok,
    )


COMPARE_HEADER = [
    "lam", "quantum_mean", "quantum_stderr", "boltzmann", "boltzmann_stderr",
    "difference", "combined_error",
]


def compare_csv_rows(rep: KineticComparison):
    return [
        [float(l), float(q), float(qe), float(b), float(be), float(d), float(c)]
        for l, q, qe, b, be, d, c in zip(
            rep.lams, rep.quantum_mean, rep.quantum_stderr, rep.boltzmann_value,
            rep.boltzmann_stderr, rep.differences, rep.combined_errors,
        )
    ]


# ---------------------------------------------------------------------------
# Time-grid supremum experiment
# ---------------------------------------------------------------------------


@dataclass
class TimeGridReport:
    lams: tuple
    taus: tuple
    deviations: dict  # lam -> tuple of |<J,W> - <J,mu_tau>| on the grid
    sup_deviation: dict
    decreasing_across_lams: bool


def run_timegrid_sup(cfg: ExperimentConfig, workers: int = 1, stream: int = 1) -> TimeGridReport:
    """Single-realization deviation from the transport value on a tau grid."""
    if cfg.tau_grid < 4:
        raise ValueError("tau grid needs >= 4 points")
    taus = tuple(float(x) for x in np.linspace(0.0, cfg.T, cfg.tau_grid))
    table = _dos_table(cfg)
    shell = bz.ShellSamplerConfig(shell_halfwidth=cfg.shell_halfwidth)
    rng = np.random.default_rng([cfg.master_seed, SEED_BOLTZMANN])

    def init(n, r):
        return wkb_limit_sampler(cfg.wkb, n, r)

    snaps = bz.snapshots(init, taus, cfg.n_particles, shell, rng, table)
    mu_vals = [bz.observable(s, cfg.observable)[0].real for s in snaps]

    box = cfg.box()
    deviations = {}
    sup = {}
    for lam in cfg.lambdas:
        eta = lam**2
        V = sample_disorder(box, cfg.master_seed, stream)
        psi = wkb_state(cfg.wkb, eta, box)
        devs = []
        prev_tau = 0.0
        prop = PropagatorConfig(dt=cfg.dt)
        for tau, mu in zip(taus, mu_vals):
            if tau > prev_tau:
                psi = evolve_full(psi, V, lam, (tau - prev_tau) / eta, prop)
                prev_tau = tau
            w = pair_wigner(cfg.observable, psi, eta).value.real
            devs.append(abs(w - mu))
        deviations[lam] = tuple(devs)
        sup[lam] = max(devs)
    sups = [sup[lam] for lam in cfg.lambdas]
    dec = all(b < a for a, b in zip(sups, sups[1:]))
    return TimeGridReport(cfg.lambdas, taus, deviations, sup, dec)


SUPNORM_HEADER = ["lam", "tau", "deviation", "sup_deviation"]


def supnorm_csv_rows(rep: TimeGridReport):
    rows = []
    for lam in rep.lams:
        for tau, dev in zip(rep.taus, rep.deviations[lam]):
            rows.append([float(lam), float(tau), float(dev), float(rep.sup_deviation[lam])])
    return rows


# ---------------------------------------------------------------------------
# Resolvent and graph suites
# ---------------------------------------------------------------------------

RESOLVENT_HEADER = [
    "sweep", "epsilon", "value", "normalized", "N",
    "gamma1", "gamma2", "gamma3", "p_or_k", "fit_exponent",
]

BAND_SWEEP = ((1.0 / 3.0, 48), (0.1, 96), (0.03, 288), (0.01, 800))
TWORES_SWEEP = ((0.1, 96), (0.05, 192), (0.02, 512), (0.01, 800))
THREERES_SWEEP = ((0.1, 512), (0.05, 512), (0.02, 512))
TWORES_P = (0.5, 0.0, 0.0)
THREERES_K = (0.25, 0.25, 0.25)


@dataclass
class ResolventReport:
    band_ratio: float
    two_res_exponent: float
    three_res_exponent: float
    rows: list = field(default_factory=list)


def run_resolvent_suite(cfg: ExperimentConfig = None, gamma: float = 3.0) -> ResolventReport:
    """The three scaling sweeps; spans are pinned, so fits opt out of the span guard."""
    rows = []

    band_vals = []
    for eps, N in BAND_SWEEP:
        v = integral_1res(gamma, eps, N)
        band_vals.append((eps, v))
        rows.append(["one_res", eps, v, v / abs(math.log(eps)), N, gamma, "", "", "", ""])
    ratios = [v / abs(math.log(e)) for e, v in band_vals]
    band_ratio = max(ratios) / min(ratios)

    eps2, vals2 = [], []
    for eps, N in TWORES_SWEEP:
        v = integral_2res(TWORES_P, gamma, gamma, eps, N)
        eps2.append(eps)
        vals2.append(v)
    fit2 = fit_scaling(eps2, vals2, 2, enforce_span=False)
    for (eps, N), v in zip(TWORES_SWEEP, vals2):
        rows.append(
            ["two_res", eps, v, v / math.log(eps) ** 2, N, gamma, gamma, "",
             " ".join(map(str, TWORES_P)), fit2.exponent]
        )

    eps3, vals3 = [], []
    for eps, N in THREERES_SWEEP:
        v = integral_3res(THREERES_K, gamma, gamma, eps, N, gamma3=gamma, sign=+1)
        eps3.append(eps)
        vals3.append(v)
    fit3 = fit_scaling(eps3, vals3, 4, enforce_span=False)
    for (eps, N), v in zip(THREERES_SWEEP, vals3):
        rows.append(
            ["three_res", eps, v, v / abs(math.log(eps)) ** 4, N, gamma, gamma, gamma,
             " ".join(map(str, THREERES_K)), fit3.exponent]
        )

    return ResolventReport(band_ratio, fit2.exponent, fit3.exponent, rows)


GRAPH_HEADER = ["n1", "n2", "class", "count", "bound"]
SCHEDULE_HEADER = ["lam", "t", "eps", "N", "kappa", "envelope_exponent"]


def run_graph_suite(cfg: ExperimentConfig):
    """Exhaustive classification table for nbar <= 5 plus the schedule echo."""
    lam_for_bound = min([l for l in cfg.lambdas if l <= 0.5], default=0.5)
    sched = schedule_parameters(cfg.T, lam_for_bound)
    t = cfg.T / lam_for_bound**2
    graph_rows = []
    for nbar in range(1, 6):
        for n1 in range(nbar + 1):
            n2 = nbar - n1
            counts = {}
            for p in enumerate_connected(n1, n2):
                label = classify(p).label()
                counts[label] = counts.get(label, 0) + 1
            params = BoundParams(lam=lam_for_bound, eps=sched.eps, t=t, nbar=nbar)
            bound = amplitude_bound(None, params)
            for label in sorted(counts):
                graph_rows.append([n1, n2, label, counts[label], float(bound)])

    sched_rows = []
    for lam in cfg.lambdas:
        if lam > 0.5:
            continue  # the variance bound assumes lam <= 1/2
        s = schedule_parameters(cfg.T, lam)
        sched_rows.append(
            [float(lam), float(cfg.T / lam**2), float(s.eps), s.N, s.kappa, 1.0 / 90.0]
        )
    return graph_rows, sched_rows


# ---------------------------------------------------------------------------
# Expansion-decay study
# ---------------------------------------------------------------------------

DUHAMEL_HEADER = ["order_cap", "residual_norm"]


def run_duhamel_study(cfg: ExperimentConfig):
    """Residual norm of full evolution minus expansion partial sums."""
    from kinlab.lattice import BoxSpec

    d = cfg.duhamel
    box = BoxSpec(d.L)
    rng = np.random.default_rng([cfg.master_seed, SEED_STUDY])
    v = rng.normal(size=box.volume) + 1j * rng.normal(size=box.volume)
    v /= np.linalg.norm(v)
    psi0 = WaveFunction(box, v)
    V = sample_disorder(box, cfg.master_seed, 1)
    prop = PropagatorConfig(dt=d.dt)
    full = evolve_full(psi0, V, d.lam, d.t, prop)
    ladder = duhamel_ladder(d.N, d.t, psi0, V, d.lam, d.dt)
    rows = []
    acc = full.values.copy()
    for n in range(d.N + 1):
        acc -= ladder.terms[n].values
        rows.append([n, float(np.linalg.norm(acc))])
    return rows


# ---------------------------------------------------------------------------
# Output assembly
# ---------------------------------------------------------------------------


def make_manifest(cfg: ExperimentConfig, task_seeds: dict) -> RunManifest:
    return RunManifest(config_digest=cfg.digest(), master_seed=cfg.master_seed,
                       task_seeds=task_seeds)


def ensure_outdir(cfg: ExperimentConfig, override=None) -> Path:
    out = Path(override) if override else Path(cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    return out

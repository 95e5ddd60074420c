"""Particle Monte Carlo for the linear Boltzmann transport equation.

The equation transports a phase-space density mu(X, V) with X in R^3 and V
on the unit torus: free flight with velocity sin(2 pi V) per axis, and
elastic jumps with kernel 2 pi delta(e(U) - e(V)).  Because the jump law
depends on V only through the conserved energy e(V), each particle carries
an exponential clock with a fixed rate R = 2 pi Phi(e(V)), where Phi is the
density of states of e pushed forward from the uniform torus measure.

The delta kernel is regularized by a shell of half-width `shell_halfwidth`:
proposals uniform on the torus are accepted inside the shell and then
Newton-projected onto the exact level set, so post-collision energies match
the pre-collision energy to the projection tolerance while the angular law
converges to the level-set measure as the shell shrinks (bias O(shell)).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from kinlab.lattice import dispersion, group_velocity, reduce_torus


class ShellEmpty(RuntimeError):
    """Rejection sampling exhausted its tries; E too close to a band edge."""


class ProjectionStalled(RuntimeError):
    """Newton projection hit a near-critical point of the dispersion."""


@dataclass(frozen=True)
class ShellSamplerConfig:
    shell_halfwidth: float = 1e-3
    projection_tol: float = 1e-12
    max_tries: int = 2_000_000

    def __post_init__(self):
        if not 0.0 < self.shell_halfwidth <= 0.1:
            raise ValueError("shell_halfwidth must lie in (0, 0.1]")
        if self.projection_tol <= 0 or self.max_tries < 1:
            raise ValueError("bad sampler config")


# ---------------------------------------------------------------------------
# Density of states
# ---------------------------------------------------------------------------


@dataclass
class DosEstimate:
    value: float
    stderr: float


def dos(E: float, n_samples: int, shell_halfwidth: float, rng: np.random.Generator) -> DosEstimate:
    """Monte Carlo estimate of Phi(E) = vol{ |e(U) - E| < shell } / (2 shell)."""
    if E < -shell_halfwidth or E > 6.0 + shell_halfwidth:
        return DosEstimate(0.0, 0.0)
    U = rng.random((n_samples, 3))
    hits = np.abs(dispersion(U) - E) < shell_halfwidth
    p = float(np.mean(hits))
    value = p / (2.0 * shell_halfwidth)
    stderr = math.sqrt(max(p * (1.0 - p), 1.0 / n_samples) / n_samples) / (2.0 * shell_halfwidth)
    return DosEstimate(value, stderr)


@dataclass
class DosTable:
    """Histogram estimate of Phi on [0, 6] with per-bin standard errors."""

    edges: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_samples: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def interp(self, E) -> np.ndarray:
        """Linear interpolation on bin centers; 0 outside the band."""
        E = np.asarray(E, dtype=float)
        out = np.interp(E, self.centers, self.values, left=0.0, right=0.0)
        return np.where((E < 0.0) | (E > 6.0), 0.0, out)

    def integral(self) -> float:
        width = np.diff(self.edges)
        return float(np.sum(self.values * width))


def build_dos_table(
    n_samples: int, rng: np.random.Generator, bins: int = 512, chunk: int = 4_000_000
) -> DosTable:
    """Tabulate Phi by histogramming e(U) over uniform torus samples."""
    edges = np.linspace(0.0, 6.0, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    left = n_samples
    while left > 0:
        n = min(left, chunk)
        U = rng.random((n, 3))
        counts += np.histogram(dispersion(U), bins=edges)[0]
        left -= n
    width = np.diff(edges)
    values = counts / (n_samples * width)
    stderr = np.sqrt(np.maximum(counts, 1)) / (n_samples * width)
    return DosTable(edges, values, stderr, n_samples)


def collision_rate(V, table: DosTable) -> np.ndarray:
    """Total jump rate R(V) = 2 pi Phi(e(V))."""
    return 2.0 * math.pi * table.interp(dispersion(V))


# ---------------------------------------------------------------------------
# Energy-shell sampling
# ---------------------------------------------------------------------------


def _project_to_shell(U: np.ndarray, E: np.ndarray, tol: float, grad_floor: float = 1e-8):
    """Newton steps along grad e to the exact level set; returns (U, ok mask)."""
    U = U.copy()
    ok = np.ones(len(U), dtype=bool)
    for _ in range(60):
        r = dispersion(U) - E
        live = ok & (np.abs(r) > tol)
        if not np.any(live):
            break
        g = 2.0 * math.pi * group_velocity(U[live])
        g2 = np.sum(g * g, axis=1)
        stall = g2 < grad_floor**2
        if np.any(stall):
            idx = np.flatnonzero(live)[stall]
            ok[idx] = False
        step = np.zeros_like(g)
        good = ~stall
        step[good] = (r[live][good] / g2[good])[:, None] * g[good]
        U[live] -= step
    r = dispersion(U) - E
    ok &= np.abs(r) <= tol
    return reduce_torus(U), ok


_ACCEPTANCE_CACHE: dict = {}  # (E rounded, shell) -> observed acceptance rate


def _fill_same_energy(E_val: float, count: int, cfg, rng) -> np.ndarray:
    """Flat-pool rejection for `count` draws on one shell (fast common case)."""
    out = np.empty((count, 3))
    filled = 0
    tries = 0
    total_hits = 0
    cache_key = (round(E_val, 9), cfg.shell_halfwidth)
    p_prior = _ACCEPTANCE_CACHE.get(cache_key, 0.0)
    while filled < count:
        remaining = count - filled
        if total_hits > 0:
            M = int(remaining * tries / total_hits * 1.2) + 8192
        elif p_prior > 0.0:
            M = int(remaining / p_prior * 1.2) + 8192
        else:
            M = max(131072, remaining * 3000)
        M = min(M, 12_000_000)
        # float32 proposals: the coarse shell test tolerates 1e-7 rounding,
        # and the Newton projection afterwards runs in float64 anyway
        U = rng.random((M, 3), dtype=np.float32)
        e32 = np.float32(3.0) - np.sum(np.cos(np.float32(2.0 * math.pi) * U), axis=-1)
        hits = np.abs(e32 - np.float32(E_val)) < cfg.shell_halfwidth * (1.0 - 1e-5)
        tries += M
        total_hits += int(np.sum(hits))
        idx = np.flatnonzero(hits)[: 2 * remaining]
        if idx.size:
            proj, ok = _project_to_shell(
                U[idx].astype(np.float64), np.full(idx.size, E_val), cfg.projection_tol
            )
            good = proj[ok]
            take = min(len(good), remaining)
            out[filled : filled + take] = good[:take]
            filled += take
        if filled == 0 and tries >= cfg.max_tries:
            raise ShellEmpty(
                f"no shell hit after {tries} proposals at E={E_val:.4f}, "
                f"shell={cfg.shell_halfwidth}"
            )
    if tries > 0:
        _ACCEPTANCE_CACHE[cache_key] = max(total_hits, 1) / tries
    return out


def project_to_shell(U, E, tol: float = 1e-12) -> np.ndarray:
    """Newton-project points onto the exact level set e = E.

    Raises ProjectionStalled when an iterate lands where |grad e| < 1e-8;
    the rejection sampler handles that case by drawing a fresh proposal.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    E = np.broadcast_to(np.asarray(E, dtype=float), (len(U),))
    out, ok = _project_to_shell(U, E, tol)
    if not np.all(ok):
        raise ProjectionStalled("near-critical point of the dispersion; resample")
    return out


def sample_energy_shell_batch(
    E, n: int, cfg: ShellSamplerConfig, rng: np.random.Generator
) -> np.ndarray:
    """n torus points with e(U) = E_i exactly (to the projection tolerance).

    E may be a scalar or an array of per-slot energies.  Uniform proposals
    are accepted inside the shell |e - E| < shell_halfwidth, then projected.
    Batches sharing few distinct energies use one flat proposal pool per
    shell; fully heterogeneous batches fall back to per-slot proposals.
    """
    E = np.broadcast_to(np.asarray(E, dtype=float), (n,)).copy()
    if np.any((E <= 0.0) | (E >= 6.0)):
        raise ShellEmpty("energy outside the open band (0, 6)")
    out = np.empty((n, 3))

    uniq, inverse = np.unique(E, return_inverse=True)
    if uniq.size <= 32:
        for g, E_val in enumerate(uniq):
            slots = np.flatnonzero(inverse == g)
            out[slots] = _fill_same_energy(float(E_val), slots.size, cfg, rng)
        return out

    pending = np.arange(n)
    tries = np.zeros(n, dtype=np.int64)
    budget = 6_000_000  # proposals per round, across pending slots
    while pending.size:
        k = max(1, min(4096, budget // pending.size))
        U = rng.random((pending.size, k, 3))
        hit = np.abs(dispersion(U) - E[pending][:, None]) < cfg.shell_halfwidth
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        rows = np.flatnonzero(any_hit)
        if rows.size:
            cand = U[rows, first[rows]]
            proj, ok = _project_to_shell(cand, E[pending[rows]], cfg.projection_tol)
            good = rows[ok]
            out[pending[good]] = proj[ok]
            solved = np.zeros(pending.size, dtype=bool)
            solved[good] = True
        else:
            solved = np.zeros(pending.size, dtype=bool)
        tries[pending] += k
        pending = pending[~solved]
        if pending.size and np.any(tries[pending] >= cfg.max_tries):
            raise ShellEmpty(
                f"no shell hit after {cfg.max_tries} proposals at E={E[pending[0]]:.4f}, "
                f"shell={cfg.shell_halfwidth}"
            )
    return out


def sample_energy_shell(E: float, cfg: ShellSamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """Single draw from the regularized level-set law at energy E."""
    return sample_energy_shell_batch(E, 1, cfg, rng)[0]


# ---------------------------------------------------------------------------
# Particles
# ---------------------------------------------------------------------------


@dataclass
class Particle:
    X: np.ndarray
    V: np.ndarray
    weight: float = 1.0


@dataclass
class ParticleEnsemble:
    """Weighted samples (X, V); X macroscopic in R^3, V on the torus."""

    X: np.ndarray
    V: np.ndarray
    weight: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weight)

    def total_weight(self) -> float:
        return float(np.sum(self.weight))

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["X1", "X2", "X3", "V1", "V2", "V3", "weight"])
            for x, v, wt in zip(self.X, self.V, self.weight):
                w.writerow([repr(float(c)) for c in (*x, *v, wt)])

    @staticmethod
    def read_csv(path) -> "ParticleEnsemble":
        rows = []
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r)
            if header != ["X1", "X2", "X3", "V1", "V2", "V3", "weight"]:
                raise ValueError(f"unexpected ensemble header {header}")
            for row in r:
                rows.append([float(c) for c in row])
        arr = np.asarray(rows, dtype=float)
        return ParticleEnsemble(arr[:, 0:3], arr[:, 3:6], arr[:, 6])


def _advance_batch(X, V, dT, table, cfg, rng, rate=None):
    """Advance all particles by dT in place; returns (X, V)."""
    n = len(X)
    if rate is None:
        R = collision_rate(V, table)
    else:
        R = np.broadcast_to(np.asarray(rate, dtype=float), (n,)).copy()
    E = dispersion(V)
    t_left = np.full(n, float(dT))
    active = np.flatnonzero(R > 0.0)
    # rate-zero particles fly ballistically for the whole step
    idle = np.flatnonzero(R <= 0.0)
    X[idle] += t_left[idle, None] * group_velocity(V[idle])
    t_left[idle] = 0.0
    while active.size:
        tau = rng.exponential(1.0 / R[active])
        flight = np.minimum(tau, t_left[active])
        X[active] += flight[:, None] * group_velocity(V[active])
        t_left[active] -= flight
        # clock fired strictly before the step ended -> jump, keep evolving
        collided = active[t_left[active] > 0.0]
        if collided.size:
            V[collided] = sample_energy_shell_batch(E[collided], collided.size, cfg, rng)
        active = collided
    return X, V


def step_particle(
    p: Particle,
    dT: float,
    table: DosTable,
    cfg: ShellSamplerConfig,
    rng: np.random.Generator,
    rate=None,
) -> Particle:
    """Free flight at velocity sin(2 pi V) with elastic jumps; weight unchanged.

    `rate` overrides the table-derived clock rate (0 disables collisions).
    """
    if dT < 0:
        raise ValueError("dT must be nonnegative")
    X = np.array([p.X], dtype=float)
    V = np.array([p.V], dtype=float)
    X, V = _advance_batch(X, V, dT, table, cfg, rng, rate=rate)
    return Particle(X[0], V[0], p.weight)


def solve(
    initial_sampler,
    T: float,
    n_particles: int,
    cfg: ShellSamplerConfig,
    rng: np.random.Generator,
    table: DosTable,
    collisions: bool = True,
    mass: float = 1.0,
) -> ParticleEnsemble:
    """Evolve n_particles to macroscopic time T; total weight conserved exactly.

    `initial_sampler(n, rng)` returns initial (X, V) arrays; each particle
    carries weight mass/n.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    X, V = initial_sampler(n_particles, rng)
    X = np.array(X, dtype=float)
    V = reduce_torus(np.array(V, dtype=float))
    weight = np.full(n_particles, mass / n_particles)
    if T > 0:
        X, V = _advance_batch(X, V, T, table, cfg, rng, rate=None if collisions else 0.0)
    return ParticleEnsemble(X, V, weight)


def snapshots(
    initial_sampler,
    times,
    n_particles: int,
    cfg: ShellSamplerConfig,
    rng: np.random.Generator,
    table: DosTable,
    collisions: bool = True,
    mass: float = 1.0,
):
    """Ensemble states at an increasing sequence of times (shared trajectories)."""
    times = list(times)
    if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < 0):
        raise ValueError("times must be nondecreasing and nonnegative")
    X, V = initial_sampler(n_particles, rng)
    X = np.array(X, dtype=float)
    V = reduce_torus(np.array(V, dtype=float))
    weight = np.full(n_particles, mass / n_particles)
    prev = 0.0
    out = []
    for t in times:
        if t > prev:
            X, V = _advance_batch(X, V, t - prev, table, cfg, rng, rate=None if collisions else 0.0)
            prev = t
        out.append(ParticleEnsemble(X.copy(), V.copy(), weight.copy()))
    return out


def observable(ens: ParticleEnsemble, J) -> tuple:
    """Weighted estimate of Int conj(J) dmu; returns (value, stderr of real part)."""
    vals = np.conj(J.evaluate(ens.X, ens.V))
    value = complex(np.sum(ens.weight * vals))
    n = ens.size
    mean_r = np.sum(ens.weight * vals.real) / ens.total_weight()
    var = np.sum(ens.weight**2 * (vals.real - mean_r) ** 2)
    stderr = math.sqrt(var * n / max(n - 1, 1))
    return value, stderr

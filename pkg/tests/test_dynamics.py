import math

import mpmath as mp
import numpy as np
import pytest

from kinlab.dynamics import (
    DENSE,
    DimensionTooLarge,
    HypothesisViolated,
    PropagatorConfig,
    RemainderBoundParams,
    dense_hamiltonian,
    duhamel_ladder,
    duhamel_term,
    evolve_dense,
    evolve_free,
    evolve_full,
    remainder,
    remainder_bound,
)
from kinlab.lattice import BoxSpec, DisorderField, WaveFunction, sample_disorder
from kinlab.wigner import TestObservable, pair_wigner

from conftest import random_state


@pytest.fixture
def small_system(rng):
    box = BoxSpec(8)
    return box, sample_disorder(box, 99, 0), random_state(box, rng)


# ---------------------------------------------------------------------------
# free evolution
# ---------------------------------------------------------------------------


def test_free_t0_identity(small_system):
    box, V, psi = small_system
    out = evolve_free(psi, 0.0)
    assert np.array_equal(out.values, psi.values)


def test_free_plane_wave_eigenstate():
    box = BoxSpec(8)
    L = box.side
    x = np.arange(L)
    pw = np.exp(2j * np.pi * x[:, None, None] / 4.0) * np.ones((L, L, L))
    pw = pw.ravel() / np.linalg.norm(pw)
    out = evolve_free(WaveFunction(box, pw), 1.0)
    # k0 = (1/4, 0, 0), e(k0) = 1: global phase exp(-i)
    assert np.max(np.abs(out.values - np.exp(-1j) * pw)) < 1e-12


def test_free_norm_drift_1000_applications(small_system):
    box, V, psi = small_system
    out = psi
    for _ in range(1000):
        out = evolve_free(out, 0.37)
    assert abs(out.norm() - psi.norm()) < 1e-10


# ---------------------------------------------------------------------------
# full evolution
# ---------------------------------------------------------------------------


def test_full_lam_zero_matches_free(small_system):
    box, V, psi = small_system
    a = evolve_full(psi, V, 0.0, 0.7, PropagatorConfig(dt=0.01))
    b = evolve_free(psi, 0.7)
    assert np.max(np.abs(a.values - b.values)) < 1e-12


def test_full_matches_dense_oracle(rng):
    box = BoxSpec(4)
    V = sample_disorder(box, 42, 0)
    psi = random_state(box, rng)
    errs = []
    for dt in (1e-3, 5e-4):
        a = evolve_full(psi, V, 0.5, 1.0, PropagatorConfig(dt=dt))
        b = evolve_dense(psi, V, 0.5, 1.0)
        errs.append(np.linalg.norm(a.values - b.values))
    assert errs[0] <= 1e-5
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_full_unitarity_any_dt(rng):
    box = BoxSpec(8)
    V = sample_disorder(box, 5, 2)
    psi = random_state(box, rng)
    for dt in (0.3, 0.05, 0.009):
        out = evolve_full(psi, V, 0.7, 1.1, PropagatorConfig(dt=dt))
        assert abs(out.norm() - 1.0) < 1e-12


def test_full_gauge_shift_constant(rng):
    box = BoxSpec(8)
    V = sample_disorder(box, 5, 2)
    psi = random_state(box, rng)
    c, lam, t = 0.41, 0.5, 0.9
    shifted = DisorderField(box, V.values + c, V.seed, V.stream)
    a = evolve_full(psi, V, lam, t, PropagatorConfig(dt=0.01))
    b = evolve_full(psi, shifted, lam, t, PropagatorConfig(dt=0.01))
    overlap = np.vdot(a.values, b.values)
    assert abs(abs(overlap) - 1.0) < 1e-10
    assert abs(overlap - np.exp(-1j * lam * c * t)) < 1e-9


def test_full_momentum_domain_roundtrip(rng):
    from kinlab.lattice import to_momentum, to_position

    box = BoxSpec(8)
    V = sample_disorder(box, 5, 2)
    psi = random_state(box, rng)
    a = evolve_full(psi, V, 0.4, 0.8, PropagatorConfig(dt=0.01))
    b = evolve_full(to_momentum(psi), V, 0.4, 0.8, PropagatorConfig(dt=0.01))
    assert b.domain == "momentum"
    assert np.max(np.abs(to_position(b).values - a.values)) < 1e-12


def test_dense_scheme_dispatch(rng):
    box = BoxSpec(4)
    V = sample_disorder(box, 42, 0)
    psi = random_state(box, rng)
    a = evolve_full(psi, V, 0.5, 0.5, PropagatorConfig(dt=1e-2, scheme=DENSE))
    b = evolve_dense(psi, V, 0.5, 0.5)
    assert np.array_equal(a.values, b.values)


# ---------------------------------------------------------------------------
# dense oracle
# ---------------------------------------------------------------------------


def test_dense_lam_zero_matches_free(rng):
    box = BoxSpec(4)
    V = sample_disorder(box, 1, 1)
    psi = random_state(box, rng)
    a = evolve_dense(psi, V, 0.0, 1.3)
    b = evolve_free(psi, 1.3)
    assert np.max(np.abs(a.values - b.values)) < 1e-10


def test_dense_unitary_group_property(rng):
    box = BoxSpec(4)
    V = sample_disorder(box, 1, 1)
    psi = random_state(box, rng)
    phi = random_state(box, rng)
    t = 0.8
    fwd = evolve_dense(psi, V, 0.5, t)
    adj = evolve_dense(phi, V, 0.5, -t)  # e^{+itH} phi
    # <phi, e^{-itH} psi> = conj(<psi, e^{+itH} phi>) for hermitian H
    lhs = np.vdot(phi.values, fwd.values)
    rhs = np.conj(np.vdot(psi.values, adj.values))
    assert abs(lhs - rhs) < 1e-10


def test_dense_short_time_taylor(rng):
    box = BoxSpec(4)
    V = sample_disorder(box, 1, 1)
    psi = random_state(box, rng)
    lam, t = 0.5, 1e-3
    H = dense_hamiltonian(box, V, lam)
    out = evolve_dense(psi, V, lam, t)
    taylor = psi.values - 1j * t * (H @ psi.values)
    h_norm = 6.0 + lam * np.max(np.abs(V.values))
    assert np.linalg.norm(out.values - taylor) <= 10 * t**2 * h_norm**2


def test_dense_dimension_guard(rng):
    box = BoxSpec(16)
    V = sample_disorder(box, 1, 1)
    psi = random_state(box, rng)
    with pytest.raises(DimensionTooLarge):
        evolve_dense(psi, V, 0.1, 0.1, max_dim=1024)


# ---------------------------------------------------------------------------
# expansion ladder
# ---------------------------------------------------------------------------


def test_duhamel_order_zero_is_free(small_system):
    box, V, psi = small_system
    t0 = duhamel_term(0, 1.5, psi, V, 0.4, 0.01)
    free = evolve_free(psi, 1.5)
    assert np.max(np.abs(t0.values - free.values)) < 1e-12


def test_duhamel_lambda_homogeneity(small_system):
    box, V, psi = small_system
    for n in (1, 2, 3):
        a = duhamel_term(n, 1.0, psi, V, 0.2, 0.01)
        b = duhamel_term(n, 1.0, psi, V, 0.4, 0.01)
        assert np.max(np.abs(a.values - (0.2 / 0.4) ** n * b.values)) < 1e-10


def test_duhamel_quadrature_second_order(small_system):
    box, V, psi = small_system
    terms = {}
    for dt in (0.02, 0.01, 0.005):
        terms[dt] = duhamel_term(1, 1.0, psi, V, 0.3, dt)
    d1 = np.linalg.norm(terms[0.02].values - terms[0.01].values)
    d2 = np.linalg.norm(terms[0.01].values - terms[0.005].values)
    assert 3.0 <= d1 / d2 <= 5.0


def test_remainder_shrinks_with_order(rng):
    box = BoxSpec(8)
    V = sample_disorder(box, 7, 3)
    psi = random_state(box, rng)
    cfg = PropagatorConfig(dt=2e-3)
    r1 = remainder(1, 1.5, psi, V, 0.3, cfg).norm()
    r3 = remainder(3, 1.5, psi, V, 0.3, cfg).norm()
    assert r3 < r1


def test_remainder_lam_zero_below_quadrature_tol(rng):
    box = BoxSpec(8)
    V = sample_disorder(box, 7, 3)
    psi = random_state(box, rng)
    r = remainder(0, 1.0, psi, V, 0.0, PropagatorConfig(dt=1e-3))
    assert r.norm() < 1e-10


def test_remainder_rejects_negative_order(small_system):
    box, V, psi = small_system
    with pytest.raises(ValueError):
        remainder(-1, 1.0, psi, V, 0.1, PropagatorConfig(dt=0.01))


def test_first_order_wigner_scales_as_lambda_squared(rng):
    # disorder average of <J, W[phi_1]> over 32 realizations: log-log slope 2
    box = BoxSpec(16)
    psi = random_state(box, rng)
    J = TestObservable.make(sigma=(1.0, 1.0, 1.0))
    lams = (0.1, 0.2, 0.4)
    eta = 0.3
    means = []
    for lam in lams:
        vals = []
        for i in range(32):
            V = sample_disorder(box, 555, i)
            term = duhamel_term(1, 1.0, psi, V, lam, 0.02)
            vals.append(abs(pair_wigner(J, term, eta).value))
        means.append(np.mean(vals))
    slope = np.polyfit(np.log(lams), np.log(means), 1)[0]
    assert abs(slope - 2.0) <= 0.2


# ---------------------------------------------------------------------------
# remainder bound formula
# ---------------------------------------------------------------------------


def _mpmath_remainder_bound(N, kap, eps, lam, C=1.0, phin=1.0):
    mp.mp.dps = 60
    Nf, kf, ef, lf, Cf = (mp.mpf(x) for x in (N, kap, eps, lam, C))
    ale = abs(mp.log(ef))
    b1 = Cf * lf**2 / ef
    b2 = b1 * ale
    f4N = mp.factorial(4 * N)
    p4N = (4 * Nf) ** (20 * N)
    t1 = Nf**2 * kf**2 * b1 ** (4 * N) / mp.sqrt(mp.factorial(N))
    t2 = Nf**2 * kf**2 * b2 ** (4 * N) * ale**3 * (ef ** mp.mpf("0.2") * f4N + ef**2 * p4N)
    t3 = ef**-2 * b2 ** (4 * N) * ale**3 * (
        kf**-N * f4N
        + kf ** (-N + 5) * ef * f4N * (4 * Nf) ** 4
        + kf ** (-N + 9) * ef**2 * f4N * (4 * Nf) ** 8
        + ef**3 * p4N
    )
    return float(mp.mpf(phin) ** 2 * (t1 + t2 + t3))


def test_remainder_bound_regression_fixture():
    got = remainder_bound(RemainderBoundParams(N=1, kappa=1, eps=0.1, lam=0.1, t=10.0))
    want = _mpmath_remainder_bound(1, 1, 0.1, 0.1)
    assert got == pytest.approx(want, rel=1e-10)


@pytest.mark.parametrize("N,kap,eps,lam,t", [(2, 3, 0.05, 0.2, 20.0), (3, 7, 0.01, 0.3, 100.0)])
def test_remainder_bound_matches_high_precision(N, kap, eps, lam, t):
    got = remainder_bound(RemainderBoundParams(N=N, kappa=kap, eps=eps, lam=lam, t=t))
    want = _mpmath_remainder_bound(N, kap, eps, lam)
    assert got == pytest.approx(want, rel=1e-10)


def test_remainder_bound_monotone_in_lambda():
    a = remainder_bound(RemainderBoundParams(N=2, kappa=2, eps=0.05, lam=0.1, t=10.0))
    b = remainder_bound(RemainderBoundParams(N=2, kappa=2, eps=0.05, lam=0.2, t=10.0))
    assert b > a


def test_remainder_bound_diverges_as_eps_vanishes():
    vals = [
        remainder_bound(RemainderBoundParams(N=1, kappa=1, eps=e, lam=0.1, t=10.0))
        for e in (0.1, 0.01, 0.001)
    ]
    assert vals[0] < vals[1] < vals[2]


def test_remainder_bound_hypothesis_guard():
    with pytest.raises(HypothesisViolated):
        remainder_bound(RemainderBoundParams(N=1, kappa=1, eps=0.2, lam=0.1, t=10.0))
    with pytest.raises(ValueError):
        RemainderBoundParams(N=0, kappa=1, eps=0.05, lam=0.1, t=10.0)

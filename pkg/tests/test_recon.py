import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blochtomo import oracle, qstate, recon
from blochtomo.drive import DriveSet, QubitDrive, forward_tensor, outcome_probabilities
from blochtomo.errors import ValidationError

from conftest import random_drives, random_rho


def _delta(D):
    eye = np.eye(D)
    return np.einsum("ai,bj->abij", eye, eye)


def test_inverse_diagonal_entry():
    d = QubitDrive(np.sqrt(2), 1.0, 0.4)
    ds = DriveSet((d,))
    for t in (0.0, 0.7, 2.2):
        c = np.cos(d.lam * t)
        assert recon.inverse_map(ds, [t], 0, 0, 0) == pytest.approx(1 + c, abs=1e-14)
        assert recon.inverse_map(ds, [t], 0, 0, 1) == pytest.approx(-c, abs=1e-14)
    assert recon.inverse_map(ds, [0.0], 0, 0, 1) == pytest.approx(-1.0, abs=1e-14)


@pytest.mark.parametrize("n", [1, 2])
def test_inverse_conjugate_symmetry(n, rng):
    ds = random_drives(n, rng)
    D = 2**n
    for t in rng.uniform(0, 10, size=(5, n)):
        Mi = recon.inverse_tensor(ds, t)  # (a, b, s)
        for a, b, s in itertools.product(range(D), repeat=3):
            assert abs(Mi[a, b, s] - np.conj(Mi[b, a, s])) < 1e-13
            assert abs(recon.inverse_map(ds, t, a, b, s) - Mi[a, b, s]) < 1e-13


def test_inverse_offdiagonal_matches_linear_solve():
    # the off-diagonal entry at t = 0; an independent min-norm solve gives the same harmonics
    ds = DriveSet((QubitDrive(np.sqrt(2), 1.0, 0.0),))
    sol = oracle.inverse_by_linear_solve(ds)
    mine = recon.inverse_harmonics(ds[0]).coeffs
    assert np.allclose(sol.coeffs, mine, atol=1e-10)
    assert np.allclose(sol.evaluate([0.0])[0, 1, :], recon.qubit_inverse(ds[0], 0.0)[0, 1, :], atol=1e-10)
    lam, nu = np.sqrt(3), 1.0
    for s in (0, 1):
        S = 1 - 2 * s
        # A = +1, B = -1 at t = 0
        ref = -0.5 * S * (np.sqrt(2) + np.sqrt((lam - nu) / (lam + nu)) - np.sqrt((lam + nu) / (lam - nu)))
        assert recon.inverse_map(ds, [0.0], 0, 1, s) == pytest.approx(ref, abs=1e-14)


def test_resolved_phase_composition(rng):
    # the phase factor exp(i phi (B - A)/2) composed with the eigenvector phases
    # must give exact inversion for arbitrary phi
    for phi in rng.uniform(-np.pi, np.pi, 10):
        ds = DriveSet((QubitDrive(1.1, -0.6, phi),))
        assert np.allclose(recon.i_tensor_avg_full(ds, "inf"), _delta(2), atol=1e-13)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_exact_inversion_dense(n):
    for seed in range(5):
        ds = random_drives(n, np.random.default_rng([n, seed]))
        I = recon.i_tensor_avg_full(ds, "inf")
        D = 2**n
        assert np.max(np.abs(I - _delta(D))) < 1e-12


def test_exact_inversion_batch_sampled():
    rng = np.random.default_rng(4)
    ds = random_drives(3, rng)
    idx = rng.integers(0, 8, size=(10_000, 4))
    vals = recon.i_tensor_avg_batch(ds, "inf", idx)
    expect = ((idx[:, 0] == idx[:, 2]) & (idx[:, 1] == idx[:, 3])).astype(float)
    assert np.max(np.abs(vals - expect)) < 1e-12
    for a, b, i, j in idx[:20]:
        assert recon.i_tensor_avg(ds, "inf", a, b, i, j) == pytest.approx(vals[(idx[:, 0] == a) & (idx[:, 1] == b) & (idx[:, 2] == i) & (idx[:, 3] == j)][0])


def _envelope(ds, T, lam):
    grid = T + np.linspace(0, 2 * np.pi / lam, 24)
    return max(np.max(np.abs(recon.i_tensor_avg_full(ds, t) - _delta(ds.dim))) for t in grid)


def test_finite_window_slope():
    ds = DriveSet.sweet_spot(1)
    Ts = np.logspace(1, 4, 8)
    env = [_envelope(ds, T, 1.0) for T in Ts]
    slope = np.polyfit(np.log(Ts), np.log(env), 1)[0]
    assert abs(slope + 1) < 0.1
    # and the bound |avg - delta| <= C / (lam T)
    assert max(e * T for e, T in zip(env, Ts)) < 10


def test_finite_window_monte_carlo():
    rng = np.random.default_rng(9)
    ds = random_drives(1, rng)
    d = ds[0]
    T = 3.7
    t = rng.uniform(0, T, 100_000)
    pointwise = recon.i_harmonics(d).evaluate(d.lam, t)  # (M, 2, 2, 2, 2)
    mean, se = pointwise.mean(axis=0), pointwise.std(axis=0) / np.sqrt(t.size)
    avg = recon.i_tensor_avg_full(ds, T)
    diff = np.abs(mean - avg)
    assert np.all(diff <= 3 * se + 1e-12)


def test_i_tensor_pointwise_definition(rng):
    ds = random_drives(2, rng)
    t = rng.uniform(0, 5, 2)
    Mi, M = recon.inverse_tensor(ds, t), forward_tensor(ds, t)
    for a, b, i, j in [(0, 0, 0, 0), (1, 2, 3, 0), (3, 3, 1, 1)]:
        assert recon.i_tensor(ds, t, a, b, i, j) == pytest.approx(np.sum(Mi[a, b, :] * M[:, i, j]), abs=1e-13)


def test_j_sweet_spot_five():
    ds = DriveSet.sweet_spot(1)
    J = recon.j_tensor_avg_full(ds, "inf")
    for i in (0, 1):
        w = sum(J[x, y, y, x, i, i] for x in (0, 1) for y in (0, 1))
        assert w == pytest.approx(5.0, abs=1e-12)


def test_j_quadrature_oracle():
    d = QubitDrive(1.3, 0.8, 0.3)
    ds = DriveSet((d,))
    T = 4.1
    idx = (0, 1, 1, 0, 1, 0)

    def f(t):
        return recon.j_tensor(ds, t, *idx)

    quad = oracle.quadrature_average(f, T, n=1)
    assert abs(quad - recon.j_tensor_avg(ds, T, *idx)) < 1e-6


def test_j_all_diagonal_at_zero():
    ds = DriveSet.sweet_spot(2)
    Mi, M = recon.inverse_tensor(ds, [0, 0]), forward_tensor(ds, [0, 0])
    for a in range(4):
        direct = np.sum(Mi[a, a, :] * Mi[a, a, :] * M[:, a, a])
        assert recon.j_tensor(ds, [0, 0], a, a, a, a, a, a) == pytest.approx(direct, abs=1e-13)


def test_j_harmonics_order():
    assert recon.j_harmonics(QubitDrive(0.9, 0.4, 1.0)).order == 2
    assert recon.i_harmonics(QubitDrive(0.9, 0.4, 1.0)).order == 2


@given(st.integers(0, 2**31), st.floats(0, 50))
@settings(max_examples=40, deadline=None)
def test_trace_contract_pointwise(seed, t):
    rng = np.random.default_rng(seed)
    ds = random_drives(2, rng)
    Mi = recon.inverse_tensor(ds, [t, 0.5 * t])
    for s in range(4):
        assert abs(sum(Mi[a, a, s] for a in range(4)) - 1) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3])
def test_reconstruction_exact_average(n, rng):
    ds = random_drives(n, rng)
    rho = random_rho(n, rng)
    assert np.allclose(recon.expected_reconstruction(ds, rho, "inf"), rho, atol=1e-12)
    # independent route: harmonics reach |k| = 2, so five equally spaced
    # times per period average them away exactly
    L = 5
    grid = [np.arange(L) * 2 * np.pi / (L * lam) for lam in ds.lams]
    acc = np.zeros((2**n, 2**n), complex)
    for t in itertools.product(*grid):
        acc += recon.r_matrix(ds, t, outcome_probabilities(ds, t, rho))
    assert np.allclose(acc / L**n, rho, atol=1e-12)


def test_r_observable_trace_and_hermiticity(rng):
    ds = random_drives(2, rng)
    rho = random_rho(2, rng)
    t = rng.uniform(0, 5, 2)
    f = outcome_probabilities(ds, t, rho)
    tr = sum(recon.r_observable(ds, t, a, a, f) for a in range(4))
    assert abs(tr - 1) < 1e-12
    R = recon.r_matrix(ds, t, f)
    for a, b in itertools.product(range(4), repeat=2):
        assert recon.r_observable(ds, t, a, b, f) == pytest.approx(R[a, b], abs=1e-13)
        assert abs(recon.r_observable(ds, t, a, b, f) - np.conj(recon.r_observable(ds, t, b, a, f))) < 1e-13


def test_r_observable_validation():
    ds = DriveSet.sweet_spot(1)
    with pytest.raises(ValidationError):
        recon.r_observable(ds, [0.0], 0, 0, [0.5, 0.4])
    with pytest.raises(ValidationError):
        recon.r_observable(ds, [0.0], 0, 0, [1.0, 0.0, 0.0])


def test_r_matrices_batch(rng):
    ds = random_drives(2, rng)
    t = rng.uniform(0, 3, size=(4, 2))
    f = rng.dirichlet(np.ones(4), size=4)
    batch = recon.r_matrices(ds, t, f)
    for i in range(4):
        assert np.allclose(batch[i], recon.r_matrix(ds, t[i], f[i]), atol=1e-14)


@pytest.mark.parametrize("n", [1, 2])
def test_phi_independence(n, rng):
    base = random_drives(n, rng)
    rho = random_rho(n, rng)
    for _ in range(3):
        moved = DriveSet(tuple(QubitDrive(d.g, d.nu, rng.uniform(-np.pi, np.pi)) for d in base))
        assert np.allclose(recon.expected_reconstruction(moved, rho, "inf"), rho, atol=1e-12)


def test_finite_window_expected_matches_dense():
    rng = np.random.default_rng(1)
    ds = random_drives(2, rng)
    rho = random_rho(2, rng)
    T = 3.3
    I = recon.i_tensor_avg_full(ds, T)
    assert np.allclose(recon.expected_reconstruction(ds, rho, T), np.einsum("abij,ij->ab", I, rho), atol=1e-12)


def test_index_range_checked():
    ds = DriveSet.sweet_spot(1)
    with pytest.raises(ValidationError):
        recon.i_tensor_avg(ds, "inf", 0, 0, 0, 2)

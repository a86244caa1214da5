"""Purity estimation from pairs of distinct unitaries and its variance budget.

The estimator is the U-statistic

    mu_hat = 1/(N_U (N_U - 1)) sum_{i != j} Tr(R_i R_j)

whose expectation is ``Tr(rho^2)`` once the time average has converged.
Variance components ``(Delta mu_{m,n})^2`` carry the weights
``N_U^{-m} N_M^{-n}``. They are available exactly for small systems (dense
contractions of the averaged I and J tensors against ``rho``) and as
amortized per-qubit products for any size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .drive import DriveSet, QubitDrive
from .errors import ValidationError
from .harmonics import contract
from .qstate import purity, validate_density_matrix
from .recon import expectation_harmonics, i_harmonics, j_tensor_avg_full
from .sampler import ExperimentPlan, RunLog
from .tomography import observable_sums

COMPONENTS = ((1, 0), (2, 0), (1, 1), (2, 1), (2, 2))
IMAG_TOL = 1e-10
EXACT_MAX_QUBITS = 2


@dataclass(frozen=True)
class PurityEstimate:
    mu_hat: float
    n_pairs: int
    plan: ExperimentPlan | None = None

    def clipped(self, n: int) -> float:
        """``mu_hat`` restricted to the physical range ``[2^-n, 1]``."""
        return float(min(1.0, max(2.0**-n, self.mu_hat)))


def _real(z: complex, scale: float = 1.0) -> float:
    if abs(z.imag) > IMAG_TOL * max(1.0, scale):
        raise ValidationError(f"pair sum has imaginary part {z.imag:.3e}")
    return float(z.real)


def pair_sum_efficient(observables) -> float:
    """``sum_{i != j} Tr(X_i X_j)`` as ``Tr(S^2) - sum_i Tr(X_i^2)``, ``S = sum_i X_i``."""
    x = np.asarray(observables)
    if x.ndim != 3 or x.shape[0] < 2:
        raise ValidationError("need at least two square matrices")
    s = x.sum(axis=0)
    total = np.einsum("ab,ba->", s, s) - np.einsum("zab,zba->", x, x)
    return _real(complex(total), float(np.sum(np.abs(s) ** 2)))


def estimate_purity(ds: DriveSet, log: RunLog, threads: int = 1) -> PurityEstimate:
    """Unbiased pair estimator over all ordered pairs of distinct unitaries."""
    n_u = len(log)
    if n_u < 2:
        raise ValidationError("purity needs at least two unitaries")
    if log.n != ds.n:
        raise ValidationError(f"run log has {log.n} qubits, drives have {ds.n}")
    return _estimate(ds, log.times, log.frequencies, threads, log.plan)


def estimate_purity_from_frequencies(ds: DriveSet, times, freqs, threads: int = 1) -> PurityEstimate:
    return _estimate(ds, np.asarray(times, float), np.asarray(freqs, float), threads, None)


def _estimate(ds, times, freqs, threads, plan) -> PurityEstimate:
    n_u = times.shape[0]
    if n_u < 2:
        raise ValidationError("purity needs at least two unitaries")
    s, _, self_pairs = observable_sums(ds, times, freqs, threads)
    total = np.einsum("ab,ba->", s, s) - self_pairs
    pairs = n_u * (n_u - 1)
    mu = _real(complex(total), float(np.sum(np.abs(s) ** 2))) / pairs
    return PurityEstimate(mu, pairs, plan)


# --------------------------------------------------------------------------
# amortized per-qubit factors


@lru_cache(maxsize=256)
def _pair_products(d: QubitDrive) -> np.ndarray:
    """``avg(I[x,y,a,b] I[u,v,c,d])`` over ``t`` (``T -> inf``)."""
    ih = i_harmonics(d)
    return contract("xyab,uvcd->xyabuvcd", ih, ih).average(d.lam, "inf")


@lru_cache(maxsize=256)
def amortized_factors(d: QubitDrive) -> dict:
    """Per-qubit averages of the W functions over their coherent index sets.

    At the sweet spot these are 5/8, 7/4, 5/4, 7/2 and 7.
    """
    II = _pair_products(d)
    J = j_tensor_avg_full(DriveSet((d,)), "inf")
    r = range(2)
    f10 = np.mean([II[i, j, a, b, j, i, b, a] for i in r for j in r for a in r for b in r])

    def k20(k, l, m, n):
        return np.einsum("xyuv,yxvu->", II[:, :, k, l, :, :, l, k], II[:, :, m, n, :, :, n, m])

    f20 = np.mean([k20(k, l, m, n) for k in r for l in r for m in r for n in r])
    f11 = np.mean([J[i, j, j, i, a, a] for a in r for i in r for j in r])
    f21 = np.mean(
        [np.einsum("xyuv,yxvu->", J[:, :, :, :, a, a], II[:, :, k, l, :, :, l, k]) for a in r for k in r for l in r]
    )
    f22 = np.mean([np.einsum("xyuv,yxvu->", J[:, :, :, :, a, a], J[:, :, :, :, i, i]) for a in r for i in r])
    return {
        (1, 0): float(f10.real),
        (2, 0): float(f20.real),
        (1, 1): float(f11.real),
        (2, 1): float(f21.real),
        (2, 2): float(f22.real),
    }


# prefactor and power of mu of each amortized component
_AMORTIZED_FORM = {(1, 0): (4.0, 2), (2, 0): (2.0, 2), (1, 1): (4.0, 1), (2, 1): (4.0, 1), (2, 2): (2.0, 0)}


def _component(component) -> tuple[int, int]:
    c = tuple(int(x) for x in component)
    if c not in _AMORTIZED_FORM:
        raise ValidationError(f"unknown variance component {component!r}")
    return c


def amortized_dmu(ds: DriveSet, mu: float, component) -> float:
    c = _component(component)
    pre, power = _AMORTIZED_FORM[c]
    prod = math.prod(amortized_factors(d)[c] for d in ds)
    return pre * prod * mu**power


# --------------------------------------------------------------------------
# exact components against a known state (T -> inf)


def _moments(ds: DriveSet, rho: np.ndarray):
    """``K0[ij, i'j'] = avg <R_ij><R_i'j'>`` and ``K1[ij, i'j'] = avg <R_ij R_i'j'>``."""
    D = ds.dim
    C = expectation_harmonics(ds, rho).reshape(-1, D, D)
    # the harmonic grid is symmetric, so flipping it maps k -> -k
    Cm = C.reshape((5,) * ds.n + (D, D))[(slice(None, None, -1),) * ds.n].reshape(-1, D, D)
    K0 = np.einsum("kab,kcd->abcd", C, Cm)
    J = j_tensor_avg_full(ds, "inf")
    K1 = np.einsum("ijklab,ab->ijkl", J, rho)
    return K0, K1


def _pair(X: np.ndarray, Y: np.ndarray) -> complex:
    # sum X[ij, i'j'] Y[ji, j'i']
    return np.einsum("ijkl,jilk->", X, Y)


def exact_components(ds: DriveSet, rho) -> dict:
    """All five ``(Delta mu_{m,n})^2`` for ``n <= 2``."""
    if ds.n > EXACT_MAX_QUBITS:
        raise ValidationError(f"exact purity components limited to n <= {EXACT_MAX_QUBITS}")
    rho = validate_density_matrix(rho)
    if rho.shape[0] != ds.dim:
        raise ValidationError(f"density matrix dimension {rho.shape[0]} != 2^{ds.n}")
    mu = purity(rho)
    K0, K1 = _moments(ds, rho)
    rt = rho.T
    # Tr(<R> rho) and <Tr(R rho)^2> averaged over t
    c10 = np.einsum("ijkl,ij,kl->", K0, rt, rt)
    c11 = np.einsum("ijkl,ij,kl->", K1, rt, rt)
    return {
        (1, 0): 4.0 * (c10.real - mu**2),
        (2, 0): 2.0 * (_pair(K0, K0).real - mu**2),
        (1, 1): 4.0 * (c11.real - mu**2),
        (2, 1): 4.0 * (_pair(K1, K0).real - mu**2),
        (2, 2): 2.0 * (_pair(K1, K1).real - mu**2),
    }


def predict_dmu(ds: DriveSet, rho=None, mu: float | None = None, component=(2, 2), mode: str = "amortized") -> float:
    """One variance component ``(Delta mu_{m,n})^2``."""
    c = _component(component)
    if mode == "exact":
        if rho is None:
            raise ValidationError("exact mode needs a density matrix")
        return exact_components(ds, rho)[c]
    if mode != "amortized":
        raise ValidationError(f"unknown prediction mode {mode!r}")
    if mu is None:
        if rho is None:
            raise ValidationError("need a purity or a density matrix")
        mu = purity(rho)
    return amortized_dmu(ds, mu, c)


def combine_components(components: dict, n_unitaries: float, n_shots: float) -> float:
    """``sum_{m,n} N_U^-m N_M^-n (Delta mu_{m,n})^2``."""
    return float(sum(v / (n_unitaries ** c[0] * n_shots ** c[1]) for c, v in components.items()))


def predict_dmu_total(ds: DriveSet, mu: float, plan: ExperimentPlan, mode: str = "amortized", rho=None) -> float:
    comps = {c: predict_dmu(ds, rho=rho, mu=mu, component=c, mode=mode) for c in COMPONENTS}
    return combine_components(comps, plan.n_unitaries, plan.shots_per_unitary)


def exact_purity_variance(components: dict, n_unitaries: int, n_shots: int) -> float:
    """Finite-sample variance of the pair estimator from exact components.

    Uses the U-statistic identity ``Var = 2/(n(n-1)) [2(n-2) zeta_1 + zeta_2]``
    with single-record and pair-kernel variances built from the components.
    """
    n, e = n_unitaries, 1.0 / n_shots
    x10, x11 = components[(1, 0)] / 4.0, components[(1, 1)] / 4.0
    y20, y21, y22 = components[(2, 0)] / 2.0, components[(2, 1)] / 4.0, components[(2, 2)] / 2.0
    zeta1 = (1.0 - e) * x10 + e * x11
    zeta2 = y20 + 2.0 * e * (y21 - y20) + e * e * (y22 - 2.0 * y21 + y20)
    return 2.0 / (n * (n - 1)) * (2.0 * (n - 2) * zeta1 + zeta2)


def component_terms(components: dict, n_unitaries: float, n_shots: float) -> dict:
    """Weighted contributions of each component to the total."""
    return {c: v / (n_unitaries ** c[0] * n_shots ** c[1]) for c, v in components.items()}


def amortized_components(ds: DriveSet, mu: float) -> dict:
    return {c: amortized_dmu(ds, mu, c) for c in COMPONENTS}


def mean_and_stderr(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValidationError("need at least two values")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))

"""Linear-inversion state tomography from a :class:`~blochtomo.sampler.RunLog`,
and the variance predictions that go with it.

The estimator averages the single-unitary observables ``R(t_i)`` over all
records. Its total squared error splits as

    Delta^2 = (Delta_U)^2 / N_U + (Delta_M)^2 / (N_U N_M)

where ``Delta_U`` comes from the spread over random unitaries and ``Delta_M``
from shot noise. Closed-form products over qubits give the predictions for
any ``n``; exact contractions against a known ``rho`` are offered for small
``n`` as a cross-check.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _tensor
from .drive import DriveSet, QubitDrive
from .errors import ValidationError
from .harmonics import check_window, contract
from .qstate import purity, validate_density_matrix
from .recon import EXPECTATION_MAX_QUBITS, _j_avg, expectation_harmonics, i_harmonics, r_matrices
from .sampler import RunLog

EXACT_MAX_QUBITS = 2
_CHUNK_BYTES = 1 << 23


@dataclass
class TomographyEstimate:
    """Raw linear-inversion estimate; not projected onto the PSD cone."""

    rho_hat: np.ndarray
    n_records: int
    stderr: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(round(math.log2(self.rho_hat.shape[0])))


def _chunks(count: int, dim: int) -> list[tuple[int, int]]:
    step = max(1, _CHUNK_BYTES // (16 * dim * dim))
    return [(s, min(s + step, count)) for s in range(0, count, step)]


def _chunk_sums(ds: DriveSet, times: np.ndarray, freqs: np.ndarray, lo: int, hi: int):
    r = r_matrices(ds, times[lo:hi], freqs[lo:hi])
    # Tr(R_i R_i) = sum_ab R_ab R_ba
    self_pairs = np.einsum("zab,zba->", r, r)
    return r.sum(axis=0), (np.abs(r) ** 2).sum(axis=0), self_pairs


def observable_sums(ds: DriveSet, times, freqs, threads: int = 1):
    """Accumulate ``sum_i R_i``, ``sum_i |R_i|^2`` (entrywise) and ``sum_i Tr(R_i R_i)``.

    Chunks are reduced in index order so the result does not depend on
    ``threads``.
    """
    times = np.asarray(times, dtype=float)
    freqs = np.asarray(freqs, dtype=float)
    if times.shape[0] == 0:
        raise ValidationError("no records to reconstruct from")
    bounds = _chunks(times.shape[0], ds.dim)
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _chunk_sums(ds, times, freqs, *b), bounds))
    else:
        parts = [_chunk_sums(ds, times, freqs, *b) for b in bounds]
    total = np.zeros((ds.dim, ds.dim), dtype=complex)
    sq = np.zeros((ds.dim, ds.dim))
    tr = 0.0 + 0.0j
    for s, q, p in parts:
        total += s
        sq += q
        tr += p
    return total, sq, tr


def reconstruct_from_frequencies(ds: DriveSet, times, freqs, threads: int = 1) -> TomographyEstimate:
    """``rho_hat = mean_i R(t_i, f_i)`` for explicit frequency vectors."""
    times = np.asarray(times, dtype=float)
    n_rec = times.shape[0]
    total, sq, _ = observable_sums(ds, times, freqs, threads)
    mean = total / n_rec
    stderr = None
    if n_rec > 1:
        var = np.clip(sq / n_rec - np.abs(mean) ** 2, 0.0, None) * n_rec / (n_rec - 1)
        stderr = np.sqrt(var / n_rec)
    return TomographyEstimate(mean, n_rec, stderr)


def reconstruct(ds: DriveSet, log: RunLog, threads: int = 1) -> TomographyEstimate:
    """Estimate ``rho`` from the recorded shot counts."""
    if len(log) == 0:
        raise ValidationError("empty run log")
    if log.n != ds.n:
        raise ValidationError(f"run log has {log.n} qubits, drives have {ds.n}")
    return reconstruct_from_frequencies(ds, log.times, log.frequencies, threads)


def total_variance_empirical(rho_true, estimates: Sequence[TomographyEstimate]) -> float:
    """Mean over trials of ``sum_ab |rho_hat_ab - rho_ab|^2``."""
    rho_true = np.asarray(rho_true, dtype=complex)
    if len(estimates) < 2:
        raise ValidationError("need at least two estimates")
    errs = []
    for e in estimates:
        r = e.rho_hat if isinstance(e, TomographyEstimate) else np.asarray(e)
        if r.shape != rho_true.shape:
            raise ValidationError("estimate and reference have different dimensions")
        errs.append(float(np.sum(np.abs(r - rho_true) ** 2)))
    return float(np.mean(errs))


def clip_to_psd(rho_hat) -> np.ndarray:
    """Nearest-in-spectrum density matrix: drop negative eigenvalues, renormalize."""
    h = np.asarray(rho_hat, dtype=complex)
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise ValidationError("estimate has no positive spectral weight")
    w /= w.sum()
    return (v * w) @ v.conj().T


# --------------------------------------------------------------------------
# closed-form predictions


def _S(ds: DriveSet) -> np.ndarray:
    return np.array([d.S for d in ds])


def predict_delta_M(ds: DriveSet) -> float:
    """Shot-noise coefficient ``prod_q (5 + 2 S_q)``."""
    return float(np.prod(5.0 + 2.0 * _S(ds)))


def _u_factors(ds: DriveSet):
    S = _S(ds)
    g2 = np.array([d.g**2 / d.lam**2 for d in ds])
    n2 = np.array([d.nu**2 / d.lam**2 for d in ds])
    coherent = 3.0 + S * g2
    diagonal = 2.0 + S * (1.0 + n2)
    return coherent, diagonal


def delta_U_terms(ds: DriveSet, mode: str = "amortized") -> tuple[float, float]:
    """``(a, b)`` with ``(Delta_U)^2 ~ a mu + b`` for the chosen bound."""
    coherent, diagonal = _u_factors(ds)
    worst = np.maximum(coherent, diagonal)
    n = ds.n
    if mode == "max":
        return 0.0, float(4.0**n * np.prod(worst))
    if mode == "likely":
        return float(np.prod(worst)), float(np.prod(diagonal))
    if mode == "amortized":
        return float(np.prod(2.5 + _S(ds))), 1.0 / 2**n
    raise ValidationError(f"unknown prediction mode {mode!r}")


def predict_delta_U(ds: DriveSet, rho=None, mu: float | None = None, mode: str = "amortized", window="inf") -> float:
    """Unitary-spread coefficient ``(Delta_U)^2``.

    ``mode`` is one of ``max``, ``likely``, ``amortized`` (closed forms, need
    ``mu`` or ``rho``) or ``exact`` (full contraction against ``rho``).
    """
    if mode == "exact":
        if rho is None:
            raise ValidationError("exact mode needs a density matrix")
        return exact_delta_U(ds, rho, window)
    if mu is None:
        if rho is None:
            raise ValidationError("need a purity or a density matrix")
        mu = purity(rho)
    if not 0.0 < mu <= 1.0 + 1e-9:
        raise ValidationError(f"purity must lie in (0, 1], got {mu}")
    a, b = delta_U_terms(ds, mode)
    return a * mu + b


def predict_total(ds: DriveSet, n_unitaries: int, n_shots: int, rho=None, mu: float | None = None, mode: str = "amortized") -> float:
    """``(Delta_U)^2 / N_U + (Delta_M)^2 / (N_U N_M)``."""
    du = predict_delta_U(ds, rho=rho, mu=mu, mode=mode)
    return du / n_unitaries + predict_delta_M(ds) / (n_unitaries * n_shots)


def naive_baseline(n: int, mu: float, delta_target: float, n_shots: int = 1) -> dict:
    """Pauli-product tomography: per-shot variance ``(2^n - mu)/N_M`` and ``6^n / Delta^2``."""
    if not delta_target > 0:
        raise ValidationError("target deviation must be positive")
    return {
        "variance_per_shot": (2.0**n - mu) / n_shots,
        "n_total": 6.0**n / delta_target**2,
    }


def required_measurements(ds: DriveSet, delta_target: float) -> float:
    """Total shots ``prod_q (5 + 2 S_q) / Delta^2`` for a target deviation."""
    if not delta_target > 0:
        raise ValidationError("target deviation must be positive")
    return predict_delta_M(ds) / delta_target**2


# --------------------------------------------------------------------------
# exact contractions against a known state


@lru_cache(maxsize=256)
def _wu_qubit(d: QubitDrive, T: float) -> np.ndarray:
    """Per-qubit ``W^U[i, j, j', i'] = sum_xy avg(I_xy^ij I_yx^j'i')``."""
    ih = i_harmonics(d)
    w = contract("xyij,yxkl->ijkl", ih, ih).average(d.lam, T)
    w.setflags(write=False)
    return w


def _wm_qubit(d: QubitDrive, T: float) -> np.ndarray:
    """Per-qubit ``W^M[i, j] = sum_xy avg J_xyyx^ij``."""
    return np.einsum("xyyxij->ij", _j_avg(d, T))


def w_unitary(ds: DriveSet, window="inf") -> np.ndarray:
    """Dense ``W^U[i, j, j', i']`` (``n <= 2``)."""
    if ds.n > EXACT_MAX_QUBITS:
        raise ValidationError(f"exact W^U contraction limited to n <= {EXACT_MAX_QUBITS}")
    T = check_window(window)
    return _tensor.kron_legs([_wu_qubit(d, T) for d in ds], legs=4)


def w_measurement(ds: DriveSet, window="inf") -> np.ndarray:
    """Dense ``W^M[i, j]`` (``n <= 2``)."""
    if ds.n > EXACT_MAX_QUBITS:
        raise ValidationError(f"exact W^M contraction limited to n <= {EXACT_MAX_QUBITS}")
    T = check_window(window)
    return _tensor.kron_legs([_wm_qubit(d, T) for d in ds], legs=2)


def _check_rho(ds: DriveSet, rho) -> np.ndarray:
    rho = validate_density_matrix(rho)
    if rho.shape[0] != ds.dim:
        raise ValidationError(f"density matrix dimension {rho.shape[0]} != 2^{ds.n}")
    return rho


def exact_delta_U(ds: DriveSet, rho, window="inf") -> float:
    """``sum rho_ij rho_j'i' W^U_ij j'i' - mu`` by dense contraction (``n <= 2``)."""
    rho = _check_rho(ds, rho)
    W = w_unitary(ds, window)
    val = np.einsum("ij,kl,ijkl->", rho, rho, W)
    return float(val.real - purity(rho))


def exact_delta_M(ds: DriveSet, rho, window="inf") -> float:
    """``sum rho_ij W^M_ij - mu`` (``n <= 2``)."""
    rho = _check_rho(ds, rho)
    W = w_measurement(ds, window)
    return float(np.sum(rho * W).real - purity(rho))


def shot_noise_moment(ds: DriveSet, rho, window="inf") -> float:
    """``avg sum_s sum_ab |Minv_abs|^2 P_s = sum_ij rho_ij W^M_ij`` for any ``n``."""
    rho = _check_rho(ds, rho)
    T = check_window(window)
    ops = [_wm_qubit(d, T) for d in ds]
    return float(np.real(_tensor.apply_local(rho, ops, legs_in=2, legs_out=0)))


def parseval_delta_U(ds: DriveSet, rho) -> float:
    """``(Delta_U)^2`` for ``T -> inf`` as the power in the non-zero harmonics of ``<R>``.

    Works up to the expectation-harmonics qubit cap; this route never forms
    ``W^U``.
    """
    C = expectation_harmonics(ds, rho)
    n = ds.n
    power = np.sum(np.abs(C) ** 2)
    zero = np.sum(np.abs(C[(2,) * n]) ** 2)
    return float(power - zero)


def exact_total_variance(ds: DriveSet, rho, n_unitaries: int, n_shots: int) -> float:
    """Expected ``sum_ab |rho_hat_ab - rho_ab|^2`` for ``T -> inf``, any ``N_M``.

    With ``B = (Delta_U)^2 + mu`` and ``A = sum rho W^M`` this is
    ``[(B - mu) + (A - B)/N_M] / N_U``.
    """
    if ds.n > EXPECTATION_MAX_QUBITS:
        raise ValidationError(f"exact variance limited to n <= {EXPECTATION_MAX_QUBITS}")
    mu = purity(rho)
    du = parseval_delta_U(ds, rho)
    A = shot_noise_moment(ds, rho)
    B = du + mu
    return (du + (A - B) / n_shots) / n_unitaries


def decompose_variance(points: Sequence[tuple[int, int, float]], basis: str = "exact") -> dict:
    """Split measured total variances into ``(Delta_U)^2`` and ``(Delta_M)^2``.

    ``points`` holds ``(N_U, N_M, Delta^2)``. The model ``N_U Delta^2 =
    alpha + beta / N_M`` is fitted by least squares. ``alpha`` is
    ``(Delta_U)^2``. In the ``exact`` basis ``(Delta_M)^2 = alpha + beta``,
    which is the single-shot variance ``N_U Delta^2`` at ``N_M = 1``; in the
    ``asymptotic`` basis it is ``beta`` alone.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValidationError("points must be (N_U, N_M, variance) triples")
    if len(np.unique(pts[:, 1])) < 2:
        raise ValidationError("need at least two distinct shot counts")
    y = pts[:, 0] * pts[:, 2]
    X = np.column_stack([np.ones(len(pts)), 1.0 / pts[:, 1]])
    (alpha, beta), *_ = np.linalg.lstsq(X, y, rcond=None)
    if basis == "exact":
        dm = alpha + beta
    elif basis == "asymptotic":
        dm = beta
    else:
        raise ValidationError(f"unknown basis {basis!r}")
    return {"delta_U_sq": float(alpha), "delta_M_sq": float(dm)}

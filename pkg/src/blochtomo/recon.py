"""Inverse measurement map, the I and J contraction tensors, and the observable R_ab.

Per qubit, every quantity here is a short trigonometric polynomial in
``exp(i lam t)``: the forward map and the inverse map carry harmonics
``k in {-1, 0, 1}``, their contraction ``I`` carries ``|k| <= 2`` and so does
the triple product ``J`` (its ``|k| = 3`` parts cancel because the forward map
is trace preserving). Time averages are therefore exact coefficient
extractions, see :mod:`blochtomo.harmonics`.

Index layout of the per-qubit arrays:

* forward ``M[s, a, b]``
* inverse ``Minv[a, b, s]``
* ``I[a, b, i, j] = sum_s Minv[a, b, s] M[s, i, j]``
* ``J[a, b, c, d, i, j] = sum_s Minv[a, b, s] Minv[c, d, s] M[s, i, j]``
"""

from __future__ import annotations

import itertools
import math
import string
from functools import lru_cache

import numpy as np

from . import _tensor
from .drive import DriveSet, QubitDrive, _projectors, _times, qubit_forward
from .errors import ValidationError
from .harmonics import Harmonic, check_window, contract, window_factor
from .qstate import validate_density_matrix

HARMONIC_ORDER = 2


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=512)
def _inverse_coeffs(d: QubitDrive) -> np.ndarray:
    """Harmonic coefficients ``c[k+1, a, b, s]`` of the closed-form inverse map.

    With spins ``A, B, S = +-1`` of ``a, b, s`` the per-qubit factor reads::

        e^{i phi (B-A)/2} [ delta(2S = A+B)
                            - S/2 ( g/nu delta(A = -B)
                                    - e^{+i lam t} B sqrt((lam + B nu)/(lam + A nu))
                                    - e^{-i lam t} A sqrt((lam + A nu)/(lam + B nu)) ) ]
    """
    g, nu, lam = d.g, d.nu, d.lam
    c = np.zeros((3, 2, 2, 2), dtype=complex)
    for a, b, s in itertools.product(range(2), repeat=3):
        A, B, S = 1 - 2 * a, 1 - 2 * b, 1 - 2 * s
        phase = np.exp(0.5j * d.phi * (B - A))
        kron = 1.0 if 2 * S == A + B else 0.0
        off = g / nu if A == -B else 0.0
        c[1, a, b, s] = phase * (kron - 0.5 * S * off)
        c[2, a, b, s] = phase * 0.5 * S * B * math.sqrt((lam + B * nu) / (lam + A * nu))
        c[0, a, b, s] = phase * 0.5 * S * A * math.sqrt((lam + A * nu) / (lam + B * nu))
    return _frozen(c)


def qubit_inverse(d: QubitDrive, t) -> np.ndarray:
    """Per-qubit inverse map ``Minv[a, b, s]`` at time(s) ``t``."""
    return inverse_harmonics(d).evaluate(d.lam, t)


@lru_cache(maxsize=512)
def _inverse_harmonics(d: QubitDrive) -> Harmonic:
    return Harmonic(_inverse_coeffs(d))


def inverse_harmonics(d: QubitDrive) -> Harmonic:
    return _inverse_harmonics(d)


@lru_cache(maxsize=512)
def _forward_harmonics(d: QubitDrive) -> Harmonic:
    pp, pm = _projectors(d)
    c = np.zeros((3, 2, 2, 2), dtype=complex)
    # <s|U|a> <s|U|b>^*, with U = e^{-i lam t/2} P+ + e^{+i lam t/2} P-
    c[0] = pp[:, :, None] * pm.conj()[:, None, :]
    c[2] = pm[:, :, None] * pp.conj()[:, None, :]
    c[1] = pp[:, :, None] * pp.conj()[:, None, :] + pm[:, :, None] * pm.conj()[:, None, :]
    return Harmonic(_frozen(c))


def forward_harmonics(d: QubitDrive) -> Harmonic:
    """Harmonic coefficients of the per-qubit forward map ``M[s, a, b]``."""
    return _forward_harmonics(d)


@lru_cache(maxsize=512)
def i_harmonics(d: QubitDrive) -> Harmonic:
    """Per-qubit ``I[a, b, i, j]`` as a harmonic polynomial (order 2)."""
    h = contract("abs,sij->abij", inverse_harmonics(d), forward_harmonics(d), max_order=HARMONIC_ORDER)
    h.coeffs.setflags(write=False)
    return h


@lru_cache(maxsize=512)
def j_harmonics(d: QubitDrive) -> Harmonic:
    """Per-qubit ``J[a, b, c, d, i, j]``; harmonics beyond order 2 must cancel."""
    mi = inverse_harmonics(d)
    h = contract("abs,cds,sij->abcdij", mi, mi, forward_harmonics(d), max_order=HARMONIC_ORDER)
    h.coeffs.setflags(write=False)
    return h


# --------------------------------------------------------------------------
# per-index evaluation on the full 2**n index space


def _check_index(ds: DriveSet, *idx: int) -> None:
    for x in idx:
        if not 0 <= int(x) < ds.dim:
            raise ValidationError(f"basis index {x} out of range for {ds.n} qubits")


def inverse_map(ds: DriveSet, t, a: int, b: int, s: int) -> complex:
    """Single element ``Minv_{a b s}(t)``, a product of per-qubit factors."""
    t = _times(ds, t)
    _check_index(ds, a, b, s)
    val = 1.0 + 0.0j
    for q, d in enumerate(ds):
        val *= qubit_inverse(d, t[q])[(a >> q) & 1, (b >> q) & 1, (s >> q) & 1]
    return complex(val)


def inverse_tensor(ds: DriveSet, t) -> np.ndarray:
    """Dense ``Minv[a, b, s]`` for one time vector (small ``n`` only)."""
    t = _times(ds, t)
    return _tensor.kron_legs([qubit_inverse(d, tq) for d, tq in zip(ds, t)], legs=3)


def i_tensor(ds: DriveSet, t, a: int, b: int, i: int, j: int) -> complex:
    """Pointwise ``I_{ab}^{ij}(t) = sum_s Minv_{abs}(t) M_{sij}(t)``."""
    t = _times(ds, t)
    _check_index(ds, a, b, i, j)
    val = 1.0 + 0.0j
    for q, d in enumerate(ds):
        mi = qubit_inverse(d, t[q])
        m = qubit_forward(d, t[q])
        aq, bq, iq, jq = ((x >> q) & 1 for x in (a, b, i, j))
        val *= np.dot(mi[aq, bq, :], m[:, iq, jq])
    return complex(val)


def j_tensor(ds: DriveSet, t, a: int, b: int, c: int, d_: int, i: int, j: int) -> complex:
    """Pointwise ``J_{abcd}^{ij}(t) = sum_s Minv_{abs} Minv_{cds} M_{sij}``."""
    t = _times(ds, t)
    _check_index(ds, a, b, c, d_, i, j)
    val = 1.0 + 0.0j
    for q, d in enumerate(ds):
        mi = qubit_inverse(d, t[q])
        m = qubit_forward(d, t[q])
        aq, bq, cq, dq, iq, jq = ((x >> q) & 1 for x in (a, b, c, d_, i, j))
        val *= np.sum(mi[aq, bq, :] * mi[cq, dq, :] * m[:, iq, jq])
    return complex(val)


def qubit_average(h: Harmonic, d: QubitDrive, window) -> np.ndarray:
    """Average of a per-qubit harmonic tensor over ``t in [0, T]``."""
    return h.average(d.lam, window)


@lru_cache(maxsize=1024)
def _i_avg(d: QubitDrive, T: float) -> np.ndarray:
    return _frozen(i_harmonics(d).average(d.lam, T))


@lru_cache(maxsize=1024)
def _j_avg(d: QubitDrive, T: float) -> np.ndarray:
    return _frozen(j_harmonics(d).average(d.lam, T))


def i_tensor_avg(ds: DriveSet, window, a: int, b: int, i: int, j: int) -> complex:
    """Time-averaged ``I_{ab}^{ij}``; exactly ``delta_a^i delta_b^j`` for ``window = inf``."""
    T = check_window(window)
    _check_index(ds, a, b, i, j)
    val = 1.0 + 0.0j
    for q, d in enumerate(ds):
        val *= _i_avg(d, T)[(a >> q) & 1, (b >> q) & 1, (i >> q) & 1, (j >> q) & 1]
    return complex(val)


def i_tensor_avg_batch(ds: DriveSet, window, idx: np.ndarray) -> np.ndarray:
    """Vectorized :func:`i_tensor_avg` over rows ``(a, b, i, j)`` of ``idx``."""
    T = check_window(window)
    idx = np.asarray(idx, dtype=np.int64)
    out = np.ones(idx.shape[0], dtype=complex)
    for q, d in enumerate(ds):
        bits = (idx >> q) & 1
        out *= _i_avg(d, T)[bits[:, 0], bits[:, 1], bits[:, 2], bits[:, 3]]
    return out


def j_tensor_avg(ds: DriveSet, window, a: int, b: int, c: int, d_: int, i: int, j: int) -> complex:
    """Time-averaged ``J_{abcd}^{ij}``."""
    T = check_window(window)
    _check_index(ds, a, b, c, d_, i, j)
    val = 1.0 + 0.0j
    for q, d in enumerate(ds):
        bits = tuple((x >> q) & 1 for x in (a, b, c, d_, i, j))
        val *= _j_avg(d, T)[bits]
    return complex(val)


FULL_TENSOR_MAX_QUBITS = 3


def i_tensor_avg_full(ds: DriveSet, window) -> np.ndarray:
    """Dense averaged ``I[a, b, i, j]`` (``n <= 3``)."""
    if ds.n > FULL_TENSOR_MAX_QUBITS:
        raise ValidationError(f"dense I tensor limited to n <= {FULL_TENSOR_MAX_QUBITS}")
    T = check_window(window)
    return _tensor.kron_legs([_i_avg(d, T) for d in ds], legs=4)


def j_tensor_avg_full(ds: DriveSet, window) -> np.ndarray:
    """Dense averaged ``J[a, b, c, d, i, j]`` (``n <= 2``)."""
    if ds.n > 2:
        raise ValidationError("dense J tensor limited to n <= 2")
    T = check_window(window)
    return _tensor.kron_legs([_j_avg(d, T) for d in ds], legs=6)


# --------------------------------------------------------------------------
# the single-unitary observable


def _freqs(ds: DriveSet, freqs) -> np.ndarray:
    f = np.asarray(freqs, dtype=float)
    if f.shape[-1:] != (ds.dim,):
        raise ValidationError(f"expected {ds.dim} outcome frequencies, got shape {f.shape}")
    return f


def r_observable(ds: DriveSet, t, a: int, b: int, empirical_freqs) -> complex:
    """``R_ab = sum_s Minv_{abs}(t) f_s``, the single-unitary estimate of ``rho_ab``."""
    f = _freqs(ds, empirical_freqs)
    if f.ndim != 1:
        raise ValidationError("r_observable takes one frequency vector")
    if abs(f.sum() - 1.0) > 1e-9:
        raise ValidationError("empirical frequencies must sum to 1")
    t = _times(ds, t)
    _check_index(ds, a, b)
    return complex(sum(inverse_map(ds, t, a, b, s) * f[s] for s in range(ds.dim) if f[s] != 0.0))


def r_matrix(ds: DriveSet, t, freqs) -> np.ndarray:
    """Full ``R[a, b]`` for one record (``t`` of shape ``(n,)``)."""
    t = _times(ds, t)
    f = _freqs(ds, freqs)
    ops = [qubit_inverse(d, t[q]) for q, d in enumerate(ds)]
    return _tensor.apply_local(f.astype(complex), ops, legs_in=1, legs_out=2)


def r_matrices(ds: DriveSet, t, freqs) -> np.ndarray:
    """Batched :func:`r_matrix`: ``t`` is ``(B, n)``, ``freqs`` is ``(B, 2**n)``."""
    t = _times(ds, t)
    f = _freqs(ds, freqs)
    if t.ndim != 2 or f.ndim != 2 or t.shape[0] != f.shape[0]:
        raise ValidationError("r_matrices expects matching batches of times and frequencies")
    ops = [qubit_inverse(d, t[:, q]) for q, d in enumerate(ds)]
    return _tensor.apply_local(f.astype(complex), ops, legs_in=1, legs_out=2, batch_ops=True, batch_x=True)


# --------------------------------------------------------------------------
# expectation <R_ab>(t) = sum_ij I_ab^ij(t) rho_ij in harmonic form


@lru_cache(maxsize=64)
def _expectation_subscripts(n: int) -> str:
    letters = iter(string.ascii_letters)
    k = [next(letters) for _ in range(n)]
    a = [next(letters) for _ in range(n)]
    b = [next(letters) for _ in range(n)]
    i = [next(letters) for _ in range(n)]
    j = [next(letters) for _ in range(n)]
    rev = list(reversed(range(n)))
    ops = [k[q] + a[q] + b[q] + i[q] + j[q] for q in range(n)]
    rho = "".join(i[q] for q in rev) + "".join(j[q] for q in rev)
    out = "".join(k) + "".join(a[q] for q in rev) + "".join(b[q] for q in rev)
    return ",".join(ops + [rho]) + "->" + out


EXPECTATION_MAX_QUBITS = 8


def expectation_harmonics(ds: DriveSet, rho) -> np.ndarray:
    """Coefficients ``C[k_0, ..., k_{n-1}, a, b]`` with
    ``<R_ab>(t) = sum_k C[k, a, b] exp(i sum_q k_q lam_q t_q)``.

    Harmonic axis ``q`` has length 5 and offset 2 (``k_q in {-2..2}``).
    """
    rho = validate_density_matrix(rho)
    if rho.shape[0] != ds.dim:
        raise ValidationError(f"density matrix dimension {rho.shape[0]} != 2^{ds.n}")
    if ds.n > EXPECTATION_MAX_QUBITS:
        raise ValidationError(f"expectation harmonics limited to n <= {EXPECTATION_MAX_QUBITS}")
    n = ds.n
    ops = [i_harmonics(d).coeffs for d in ds]
    c = np.einsum(_expectation_subscripts(n), *ops, rho.reshape((2,) * (2 * n)), optimize=True)
    return c.reshape((5,) * n + (ds.dim, ds.dim))


def _contract_weights(C: np.ndarray, weights: np.ndarray) -> np.ndarray:
    n = weights.ndim
    return np.tensordot(weights, C, axes=(tuple(range(n)), tuple(range(n))))


def harmonic_weights(ds: DriveSet, window, single_time: bool = False) -> np.ndarray:
    """Averaging weights over the ``5**n`` harmonic grid.

    Independent times: ``prod_q phi(k_q lam_q T)``. One shared time:
    ``phi(T sum_q k_q lam_q)``, where ``phi(x) = (e^{ix}-1)/(ix)``.
    """
    T = check_window(window)
    ks = np.arange(-2, 3)
    n = ds.n
    lams = ds.lams
    if single_time:
        theta = np.zeros((5,) * n)
        for q in range(n):
            shape = [1] * n
            shape[q] = 5
            theta = theta + (ks * lams[q]).reshape(shape)
        if math.isinf(T):
            return (np.abs(theta) < 1e-300).astype(complex)
        return window_factor(theta * T)
    w = np.ones((5,) * n, dtype=complex)
    for q in range(n):
        shape = [1] * n
        shape[q] = 5
        if math.isinf(T):
            wq = (ks == 0).astype(complex)
        else:
            wq = window_factor(ks * lams[q] * T)
        w = w * wq.reshape(shape)
    return w


def expected_reconstruction(ds: DriveSet, rho, window, single_time: bool = False) -> np.ndarray:
    """Mean estimate ``E[R]`` with exact outcome probabilities and ``t`` uniform on
    ``[0, T]``: independently per qubit, or one shared time for all qubits."""
    C = expectation_harmonics(ds, rho)
    return _contract_weights(C, harmonic_weights(ds, window, single_time))

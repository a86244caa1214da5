"""One global drive: every qubit rotates for the same time ``t``.

Reconstruction then only separates harmonics through the combined
frequencies ``theta_x = sum_q lam_q x_q`` with ``x in {-2..2}^n``. The
smallest non-zero ``|theta_x|`` sets how long the window ``T`` must be.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Sequence

import numpy as np

from .drive import DriveSet, QubitDrive
from .errors import DegenerateFrequenciesError, ValidationError
from .harmonics import check_window, window_factor
from .qstate import MAX_QUBITS
from .recon import _i_avg, expected_reconstruction, i_harmonics

COEFFS = np.arange(-2, 3)
EXHAUSTIVE_MAX_QUBITS = 9
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class FrequencySet:
    """Per-qubit Rabi frequencies under a common drive.

    ``exact`` optionally holds the same values as :class:`~fractions.Fraction`
    for the rational search path.
    """

    lambdas: tuple[float, ...]
    provenance: str = "explicit"
    exact: tuple[Fraction, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        lams = tuple(float(x) for x in self.lambdas)
        if not lams or len(lams) > MAX_QUBITS:
            raise ValidationError(f"need between 1 and {MAX_QUBITS} frequencies")
        if any(not (math.isfinite(x) and x > 0) for x in lams):
            raise ValidationError("frequencies must be finite and positive")
        object.__setattr__(self, "lambdas", lams)

    @classmethod
    def ladder(cls, n: int, lam0: float | Fraction = 1, base: int = 3) -> "FrequencySet":
        """``lam_q = lam0 / base**q``."""
        lam0 = Fraction(lam0)
        exact = tuple(lam0 / Fraction(base) ** q for q in range(n))
        return cls(tuple(float(x) for x in exact), f"ladder(base={base}, lam0={lam0})", exact)

    @classmethod
    def random(cls, n: int, lam0: float = 1.0, seed: int = 0) -> "FrequencySet":
        """``lam_q`` uniform on ``(0, lam0)``."""
        rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
        lams = lam0 * (1.0 - rng.random(n))  # (0, lam0]
        return cls(tuple(lams), f"random(lam0={lam0}, seed={seed})")

    @classmethod
    def explicit(cls, lambdas: Sequence[float]) -> "FrequencySet":
        exact = None
        if all(isinstance(x, (int, Fraction)) for x in lambdas):
            exact = tuple(Fraction(x) for x in lambdas)
        return cls(tuple(float(x) for x in lambdas), "explicit", exact)

    @property
    def n(self) -> int:
        return len(self.lambdas)

    def drives(self, phi: float = 0.0) -> DriveSet:
        """Sweet-spot drives (``S_q = 0``) reproducing these frequencies."""
        return DriveSet(tuple(QubitDrive.sweet_spot(lam, phi) for lam in self.lambdas))


@dataclass(frozen=True)
class ThetaCombination:
    coeffs: tuple[int, ...]
    value: float | Fraction

    def __float__(self) -> float:
        return float(self.value)


# --------------------------------------------------------------------------
# minimum |theta| search


def _grid(n: int) -> np.ndarray:
    """All ``x in {-2..2}^n`` in lexicographic order, as an ``(5**n, n)`` array."""
    idx = np.indices((5,) * n, dtype=np.int64).reshape(n, -1).T
    return idx - 2


def _theta_grid(w: np.ndarray) -> np.ndarray:
    """``sum_q w_q x_q`` over the lexicographic grid, without forming the grid."""
    theta = np.zeros(1, dtype=w.dtype)
    for wq in w:
        theta = np.add.outer(theta, COEFFS.astype(w.dtype) * wq).ravel()
    return theta


def _decode(flat: np.ndarray, n: int) -> np.ndarray:
    return np.stack(np.unravel_index(flat, (5,) * n), axis=1).astype(np.int64) - 2


def _canonical(x: np.ndarray) -> np.ndarray:
    """Flip sign so that the first non-zero coefficient is positive."""
    x = np.atleast_2d(x)
    nz = x != 0
    first = np.where(nz.any(axis=1), nz.argmax(axis=1), 0)
    sign = np.sign(x[np.arange(len(x)), first])
    sign[sign == 0] = 1
    return x * sign[:, None]


def _best(cands: np.ndarray) -> tuple[int, ...]:
    """Lexicographically largest canonical representative."""
    c = _canonical(cands)
    order = np.lexsort(c.T[::-1])
    return tuple(int(v) for v in c[order[-1]])


def _integer_weights(values: Sequence[Fraction]) -> tuple[np.ndarray, int]:
    den = reduce(math.lcm, (v.denominator for v in values), 1)
    nums = [int(v * den) for v in values]
    if 2 * len(nums) * max(abs(v) for v in nums) >= 2**62:
        raise ValidationError("rational frequencies too large for exact integer search")
    return np.array(nums, dtype=np.int64), den


def _exhaustive(w: np.ndarray, tol: float):
    theta = np.abs(_theta_grid(w))
    zero = (5 ** len(w) - 1) // 2  # flat index of x = 0
    theta[zero] = np.inf if theta.dtype.kind == "f" else np.iinfo(theta.dtype).max
    vmin = theta.min()
    ties = _decode(np.nonzero(theta <= vmin + tol)[0], len(w))
    return vmin, _best(ties)


def _meet_in_middle(w: np.ndarray, tol: float):
    n = len(w)
    h = n // 2
    XA, XB = _grid(h), _grid(n - h)
    ta, tb = XA @ w[:h], XB @ w[h:]
    order = np.argsort(tb, kind="stable")
    tb_s, XB_s = tb[order], XB[order]
    zero_b = np.all(XB_s == 0, axis=1)
    zero_a = np.all(XA == 0, axis=1)

    # pass 1: nearest partner for every half-sum
    target = -ta
    pos = np.searchsorted(tb_s, target)
    best = np.inf
    for off in (-1, 0, 1):
        p = np.clip(pos + off, 0, len(tb_s) - 1)
        val = np.abs(ta + tb_s[p])
        # the all-zero pair is not a valid combination
        val = np.where(zero_a & zero_b[p], np.inf, val)
        best = min(best, float(val.min()))
    if zero_a.any():
        # x_A = 0: need the smallest non-zero |theta_B|
        nb = np.abs(tb_s[~zero_b])
        best = min(best, float(nb.min()))

    # pass 2: every pair within the tie tolerance
    lo = np.searchsorted(tb_s, target - best - tol, side="left")
    hi = np.searchsorted(tb_s, target + best + tol, side="right")
    cands = []
    for ia in np.nonzero(hi > lo)[0]:
        for ib in range(lo[ia], hi[ia]):
            if zero_a[ia] and zero_b[ib]:
                continue
            if abs(ta[ia] + tb_s[ib]) <= best + tol:
                cands.append(np.concatenate([XA[ia], XB_s[ib]]))
    return best, _best(np.array(cands))


def min_theta(fs: FrequencySet, exact: bool | None = None, method: str = "auto", allow_degenerate: bool = False) -> ThetaCombination:
    """Smallest ``|sum_q lam_q x_q|`` over non-zero ``x in {-2..2}^n``.

    Ties are broken by taking the lexicographically largest coefficient
    vector among those whose first non-zero entry is positive. With
    ``exact`` (default when rational values are available) the search runs in
    integer arithmetic and the value is a :class:`~fractions.Fraction`.
    """
    if exact is None:
        exact = fs.exact is not None
    if exact and fs.exact is None:
        raise ValidationError("no rational representation for these frequencies")
    if method == "auto":
        method = "exhaustive" if fs.n <= EXHAUSTIVE_MAX_QUBITS else "mitm"
    search = {"exhaustive": _exhaustive, "mitm": _meet_in_middle}.get(method)
    if search is None:
        raise ValidationError(f"unknown search method {method!r}")
    if fs.n == 1:
        search = _exhaustive
    if exact:
        w, den = _integer_weights(fs.exact)
        v, x = search(w, 0)
        value: float | Fraction = Fraction(int(v), den)
    else:
        w = np.asarray(fs.lambdas)
        v, x = search(w, TIE_RTOL * float(w.max()))
        value = float(v)
    if value == 0 and not allow_degenerate:
        raise DegenerateFrequenciesError(f"frequencies {fs.lambdas} admit theta = 0 at x = {x}")
    return ThetaCombination(x, value)


def theta_value(fs: FrequencySet, x: Sequence[int]) -> float:
    return float(np.dot(fs.lambdas, x))


def index_combination(a: int, b: int, i: int, j: int, n: int) -> tuple[int, ...]:
    """Per-qubit ``(a_q - b_q - i_q + j_q)/2`` in spin values, each in ``{-2..2}``."""
    out = []
    for q in range(n):
        A, B, I, J = (1 - 2 * ((x >> q) & 1) for x in (a, b, i, j))
        out.append((A - B - I + J) // 2)
    return tuple(out)


def log_stats(values: Sequence[float]) -> tuple[float, float]:
    """Logarithmic mean and log-standard deviation (natural log)."""
    lv = np.log(np.asarray(values, dtype=float))
    return float(np.exp(lv.mean())), float(lv.std(ddof=1) if lv.size > 1 else 0.0)


def random_min_theta(n: int, seeds: Sequence[int], lam0: float = 1.0) -> np.ndarray:
    return np.array([float(min_theta(FrequencySet.random(n, lam0, s)).value) for s in seeds])


def fit_decay_base(ns: Sequence[int], values: Sequence[float]) -> float:
    """``b`` in ``value ~ C b^-n`` from a straight-line fit of ``log(value)``."""
    slope, _ = np.polyfit(np.asarray(ns, float), np.log(np.asarray(values, float)), 1)
    return float(np.exp(-slope))


# --------------------------------------------------------------------------
# single-time averaging


def _shared_time_factor(fs: FrequencySet, window) -> np.ndarray:
    """``phi(theta_k T)`` on the ``5**n`` harmonic grid."""
    T = check_window(window)
    theta = _theta_grid(np.asarray(fs.lambdas))
    if math.isinf(T):
        return (theta == 0).astype(complex)
    return window_factor(theta * T)


def i_tensor_single_time(fs: FrequencySet, window, a: int, b: int, i: int, j: int, ds: DriveSet | None = None) -> complex:
    """``I_ab^ij`` averaged over one shared time ``t in [0, T]``."""
    ds = fs.drives() if ds is None else ds
    n = fs.n
    for x in (a, b, i, j):
        if not 0 <= x < 2**n:
            raise ValidationError(f"basis index {x} out of range for {n} qubits")
    # the lexicographic grid over (k_0, ..., k_{n-1}) is the outer product of
    # per-qubit coefficient vectors in the same order
    coeff = np.ones(1, dtype=complex)
    for q, d in enumerate(ds):
        c = i_harmonics(d).coeffs[:, (a >> q) & 1, (b >> q) & 1, (i >> q) & 1, (j >> q) & 1]
        coeff = np.multiply.outer(coeff, c).ravel()
    theta = _theta_grid(np.asarray(fs.lambdas))
    zero_k = np.zeros(theta.shape, dtype=bool)
    zero_k[(5**n - 1) // 2] = True
    if np.any((np.abs(theta) == 0) & ~zero_k & (np.abs(coeff) > 1e-14)):
        raise DegenerateFrequenciesError("a rotating term has theta = 0; the configuration is not invertible")
    return complex(np.dot(coeff, _shared_time_factor(fs, window)))


def systematic_bias(fs: FrequencySet, window, rho, single_time: bool = True) -> float:
    """``max_ab |E[rho_hat]_ab - rho_ab|`` with exact probabilities (no shot noise)."""
    ds = fs.drives()
    if single_time:
        min_theta(fs)  # raises on degenerate frequencies
    est = expected_reconstruction(ds, rho, window, single_time=single_time)
    return float(np.max(np.abs(est - np.asarray(rho))))


def bias_envelope(fs: FrequencySet, window: float, rho, single_time: bool = True, span: float | None = None, points: int = 48) -> float:
    """Largest :func:`systematic_bias` over ``T' in [T, T + span]``.

    The pointwise bias oscillates with ``T``; its envelope is what decays as
    ``1/T``. ``span`` defaults to one period of the slowest combined frequency.
    """
    T = check_window(window)
    if span is None:
        slow = float(min_theta(fs).value) if single_time else min(fs.lambdas)
        span = 2 * math.pi / slow
    grid = T + np.linspace(0.0, span, points)
    return max(systematic_bias(fs, t, rho, single_time) for t in grid)


def required_time(fs: FrequencySet, target: str = "tomography") -> float:
    """Window needed for the bias to drop below the statistical error."""
    m = float(min_theta(fs).value)
    if target == "tomography":
        return 2.0**fs.n / m
    if target == "purity":
        return 1.0 / m
    raise ValidationError(f"unknown target {target!r}")


def per_qubit_time_average(fs: FrequencySet, window, a: int, b: int, i: int, j: int) -> complex:
    """Same element with independent per-qubit times, for comparison."""
    ds = fs.drives()
    T = check_window(window)
    val = 1.0 + 0.0j
    for q, d in enumerate(ds):
        val *= _i_avg(d, T)[(a >> q) & 1, (b >> q) & 1, (i >> q) & 1, (j >> q) & 1]
    return complex(val)

"""Trigonometric polynomials ``sum_k c_k exp(i k lam t)`` with tensor-valued coefficients.

Uniform averaging of ``exp(i k lam t)`` over ``t in [0, T]`` gives
``(exp(i k lam T) - 1) / (i k lam T)`` for ``k != 0`` and 1 for ``k = 0``;
as ``T -> inf`` only the ``k = 0`` coefficient survives.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import HarmonicOverflowError, ValidationError

OVERFLOW_ATOL = 1e-12


def check_window(window) -> float:
    """Return the averaging window ``T`` as a float (``math.inf`` allowed)."""
    if isinstance(window, str):
        if window.strip().lower() in {"inf", "infinity", "∞"}:
            return math.inf
        window = float(window)
    T = float(window)
    if not T > 0.0:
        raise ValidationError(f"averaging window must be positive, got {window!r}")
    return T


def window_factor(x) -> np.ndarray:
    """Average of ``exp(i x s)`` over ``s`` uniform in ``[0, 1]``.

    ``x`` may be ``+-inf`` (returns 0 there) and is 1 at ``x = 0``.
    """
    x = np.asarray(x, dtype=float)
    out = np.ones(x.shape, dtype=complex)
    nz = x != 0.0
    fin = nz & np.isfinite(x)
    xf = x[fin]
    # expm1 keeps accuracy for small |x|
    out[fin] = np.expm1(1j * xf) / (1j * xf)
    out[nz & ~np.isfinite(x)] = 0.0
    return out


class Harmonic:
    """Coefficients ``c[k + K, ...]`` of ``sum_{|k|<=K} c_k exp(i k lam t)``."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim == 0 or c.shape[0] % 2 != 1:
            raise ValidationError("harmonic axis must have odd length 2K+1")
        self.coeffs = c

    @property
    def order(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    @property
    def ks(self) -> np.ndarray:
        return np.arange(-self.order, self.order + 1)

    def __getitem__(self, idx) -> "Harmonic":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Harmonic(self.coeffs[(slice(None),) + idx])

    def coefficient(self, k: int) -> np.ndarray:
        if abs(k) > self.order:
            return np.zeros(self.shape, dtype=complex)
        return self.coeffs[k + self.order]

    def evaluate(self, lam: float, t) -> np.ndarray:
        """Values at times ``t``; result shape is ``t.shape + self.shape``."""
        t = np.asarray(t, dtype=float)
        ph = np.exp(1j * lam * np.multiply.outer(t, self.ks))
        return np.tensordot(ph, self.coeffs, axes=(-1, 0))

    def average(self, lam: float, window) -> np.ndarray:
        """Uniform average over ``t in [0, T]``."""
        T = check_window(window)
        if math.isinf(T):
            return self.coefficient(0).copy()
        w = window_factor(self.ks * lam * T)
        return np.tensordot(w, self.coeffs, axes=(0, 0))

    def truncate(self, order: int, atol: float = OVERFLOW_ATOL) -> "Harmonic":
        """Drop harmonics above ``order``; they must vanish to ``atol``."""
        if order >= self.order:
            return self
        K = self.order
        dropped = np.concatenate([self.coeffs[: K - order], self.coeffs[K + order + 1 :]])
        if dropped.size and np.max(np.abs(dropped)) > atol:
            raise HarmonicOverflowError(
                f"harmonic product has |c| = {np.max(np.abs(dropped)):.3e} above order {order}"
            )
        return Harmonic(self.coeffs[K - order : K + order + 1])

    def __mul__(self, other) -> "Harmonic":
        if not isinstance(other, Harmonic):
            return Harmonic(self.coeffs * other)
        out_shape = np.broadcast_shapes(self.shape, other.shape)
        m = other.coeffs.shape[0]
        out = np.zeros((self.coeffs.shape[0] + m - 1,) + out_shape, dtype=complex)
        for i, c in enumerate(self.coeffs):
            out[i : i + m] += c * other.coeffs
        return Harmonic(out)

    __rmul__ = __mul__

    def __add__(self, other: "Harmonic") -> "Harmonic":
        K = max(self.order, other.order)
        return Harmonic(_pad(self.coeffs, K) + _pad(other.coeffs, K))

    def __repr__(self) -> str:
        return f"Harmonic(order={self.order}, shape={self.shape})"


def _pad(c: np.ndarray, K: int) -> np.ndarray:
    k0 = (c.shape[0] - 1) // 2
    pad = [(K - k0, K - k0)] + [(0, 0)] * (c.ndim - 1)
    return np.pad(c, pad)


def contract(subscripts: str, *ops: Harmonic, max_order: int | None = None, atol: float = OVERFLOW_ATOL) -> Harmonic:
    """``np.einsum`` over the tensor indices while convolving the harmonic axes.

    With ``max_order`` set, any surviving coefficient beyond that order raises
    :class:`HarmonicOverflowError`.
    """
    orders = [op.order for op in ops]
    K = sum(orders)
    out = None
    for combo in itertools.product(*(range(2 * o + 1) for o in orders)):
        term = np.einsum(subscripts, *(op.coeffs[i] for op, i in zip(ops, combo)))
        if out is None:
            out = np.zeros((2 * K + 1,) + term.shape, dtype=complex)
        k = sum(i - o for i, o in zip(combo, orders))
        out[k + K] += term
    h = Harmonic(out)
    if max_order is not None:
        h = h.truncate(max_order, atol)
    return h

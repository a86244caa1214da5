"""Per-qubit tensor contractions on full 2**n-dimensional index spaces.

A full index ``a`` in ``[0, 2**n)`` is split into bits ``a_{n-1} ... a_0``; in
C order the most significant bit comes first, so reshaping a length-``2**n``
axis to ``(2,)*n`` puts qubit ``q`` on sub-axis ``n-1-q``.
"""

from __future__ import annotations

import string
from functools import lru_cache

import numpy as np

_LETTERS = string.ascii_letters


@lru_cache(maxsize=256)
def _local_to_full_subscripts(n: int, legs: int, batch: bool) -> str:
    if legs * n + 1 > len(_LETTERS):
        raise ValueError("too many indices for einsum")
    pre = "Z" if batch else ""
    letters = _LETTERS[: legs * n]

    def letter(q: int, leg: int) -> str:
        return letters[leg * n + q]

    ops = [pre + "".join(letter(q, leg) for leg in range(legs)) for q in range(n)]
    out = pre + "".join(letter(q, leg) for leg in range(legs) for q in reversed(range(n)))
    return ",".join(ops) + "->" + out


def kron_legs(factors, legs: int, batch: bool = False) -> np.ndarray:
    """Outer product of per-qubit tensors, regrouped leg by leg.

    ``factors[q]`` has ``legs`` axes of size 2 (after an optional leading
    batch axis). The result has ``legs`` axes of size ``2**n`` where leg ``l``
    is the full index built from leg ``l`` of every qubit.
    """
    n = len(factors)
    sub = _local_to_full_subscripts(n, legs, batch)
    full = np.einsum(sub, *factors, optimize=True)
    lead = full.shape[:1] if batch else ()
    return full.reshape(lead + (2**n,) * legs)


@lru_cache(maxsize=256)
def _apply_subscripts(n: int, legs_in: int, legs_out: int, batch_ops: bool, batch_x: bool) -> str:
    """Contract a full tensor with per-qubit maps ``op_q[out legs..., in legs...]``."""
    total = (legs_in + legs_out) * n
    if total + 1 > len(_LETTERS):
        raise ValueError("too many indices for einsum")
    letters = _LETTERS[:total]

    def lin(q: int, leg: int) -> str:
        return letters[leg * n + q]

    def lout(q: int, leg: int) -> str:
        return letters[(legs_in + leg) * n + q]

    pre_x = "Z" if batch_x else ""
    pre_o = "Z" if batch_ops else ""
    x = pre_x + "".join(lin(q, leg) for leg in range(legs_in) for q in reversed(range(n)))
    ops = [
        pre_o + "".join(lout(q, leg) for leg in range(legs_out)) + "".join(lin(q, leg) for leg in range(legs_in))
        for q in range(n)
    ]
    pre = "Z" if (batch_x or batch_ops) else ""
    out = pre + "".join(lout(q, leg) for leg in range(legs_out) for q in reversed(range(n)))
    return ",".join([x] + ops) + "->" + out


def apply_local(x: np.ndarray, ops, legs_in: int, legs_out: int, batch_ops: bool = False, batch_x: bool = False) -> np.ndarray:
    """Apply a product of per-qubit maps to a full tensor.

    ``x`` has ``legs_in`` axes of size ``2**n`` (plus an optional leading
    batch axis); ``ops[q]`` maps the ``legs_in`` local indices of qubit ``q``
    to ``legs_out`` local indices. Returns ``legs_out`` full axes.
    """
    n = len(ops)
    lead = x.shape[:1] if batch_x else ()
    xt = x.reshape(lead + (2,) * (n * legs_in))
    sub = _apply_subscripts(n, legs_in, legs_out, batch_ops, batch_x)
    out = np.einsum(sub, xt, *ops, optimize=True)
    if batch_x or batch_ops:
        lead = out.shape[:1]
    return out.reshape(lead + (2**n,) * legs_out)

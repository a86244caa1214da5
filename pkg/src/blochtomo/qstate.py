"""Dense N-qubit density matrices and random mixed-state generators.

Basis convention shared by every module: basis index ``a`` is an integer in
``[0, 2**n)`` and qubit ``q`` is stored in bit ``q`` (qubit 0 is the least
significant bit). Bit value 0 is spin up (+1), bit value 1 is spin down (-1).
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import bisect

from .errors import DegenerateInputError, UnreachablePurityError, ValidationError

MAX_QUBITS = 12

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9
NORM_TOL = 1e-12

#: Largest number of Haar vectors mixed by :func:`gen_geometric`.
GEOMETRIC_MAX_VECTORS = 30


def check_qubit_count(n: int) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise ValidationError(f"qubit count must be an integer, got {n!r}")
    n = int(n)
    if not 1 <= n <= MAX_QUBITS:
        raise ValidationError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")
    return n


def num_qubits(dim: int) -> int:
    """Return ``n`` such that ``dim == 2**n``."""
    n = int(dim).bit_length() - 1
    if dim < 2 or 2**n != dim:
        raise ValidationError(f"dimension {dim} is not a power of two >= 2")
    return check_qubit_count(n)


def bit(index: int, q: int) -> int:
    return (index >> q) & 1


def spin(index: int, q: int) -> int:
    """Spin value (+1 up, -1 down) of qubit ``q`` in basis state ``index``."""
    return 1 - 2 * bit(index, q)


def validate_density_matrix(rho) -> np.ndarray:
    """Check Hermiticity, unit trace and positivity; return a complex copy.

    Raises:
        ValidationError: if any invariant fails at the module tolerances.
    """
    rho = np.array(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError(f"density matrix must be square, got shape {rho.shape}")
    num_qubits(rho.shape[0])
    if not np.all(np.isfinite(rho)):
        raise ValidationError("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise ValidationError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValidationError(f"density matrix trace is {tr}, expected 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lo < -PSD_TOL:
        raise ValidationError(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho


def purity(rho) -> float:
    """Return ``Tr rho^2`` for a valid density matrix."""
    rho = validate_density_matrix(rho)
    return float(np.sum(np.abs(rho) ** 2))


def maximally_mixed(n: int) -> np.ndarray:
    d = 2 ** check_qubit_count(n)
    return np.eye(d, dtype=complex) / d


def basis_state(n: int, index: int = 0) -> np.ndarray:
    """Pure density matrix ``|index><index|``."""
    d = 2 ** check_qubit_count(n)
    rho = np.zeros((d, d), dtype=complex)
    rho[index, index] = 1.0
    return rho


def pure_density(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def haar_state(n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a Haar-random pure state on ``n`` qubits.

    A normalized vector of i.i.d. complex Gaussians is unitarily invariant,
    which is exactly the Haar measure on the unit sphere.
    """
    d = 2 ** check_qubit_count(n)
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def orthonormalize(states: Sequence[np.ndarray], tol: float = 1e-10) -> list[np.ndarray]:
    """Modified Gram-Schmidt on ``states`` (order preserved).

    Raises:
        DegenerateInputError: if a vector has (numerically) no component
            outside the span of its predecessors.
    """
    out: list[np.ndarray] = []
    for k, v in enumerate(states):
        w = np.array(v, dtype=complex)
        scale = np.linalg.norm(w)
        if scale == 0.0:
            raise DegenerateInputError(f"state {k} is the zero vector")
        # two passes keep the result orthogonal to machine precision
        for _ in range(2):
            for u in out:
                w = w - np.vdot(u, w) * u
        norm = np.linalg.norm(w)
        if norm <= tol * scale:
            raise DegenerateInputError(f"state {k} lies in the span of the previous states")
        out.append(w / norm)
    return out


def _mixture(vectors: Iterable[np.ndarray], weights: Iterable[float]) -> np.ndarray:
    vecs = np.array(list(vectors))
    w = np.asarray(list(weights), dtype=float)
    rho = (vecs.T * w) @ vecs.conj()
    return 0.5 * (rho + rho.conj().T)


def _check_target(n: int, mu_target: float) -> None:
    if not (1.0 / 2**n < mu_target <= 1.0):
        raise UnreachablePurityError(
            f"purity {mu_target} is outside (1/2^{n}, 1] for {n} qubits"
        )


def geometric_weights(m: int, mu_target: float) -> np.ndarray:
    """Weights ``w_k = A x^k`` (k = 0..m-1) with sum 1 and sum of squares ``mu_target``.

    ``x`` is found by bisection on ``(0, 1)``; the mixture purity decreases
    monotonically from 1 (x -> 0) to ``1/m`` (x -> 1).
    """
    if m == 1 or mu_target >= 1.0:
        if not math.isclose(mu_target, 1.0, abs_tol=1e-12):
            raise UnreachablePurityError(f"a single vector only reaches purity 1, not {mu_target}")
        return np.array([1.0] + [0.0] * (m - 1))
    if not (1.0 / m < mu_target < 1.0):
        raise UnreachablePurityError(
            f"geometric weights over {m} vectors reach purities in (1/{m}, 1), not {mu_target}"
        )
    k = np.arange(m)

    def excess(x: float) -> float:
        p = x**k
        return float(np.sum(p * p) / np.sum(p) ** 2 - mu_target)

    x = bisect(excess, 1e-300, 1.0 - 1e-15, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)
    w = x**k
    return w / w.sum()


def gen_geometric(n: int, mu_target: float, rng: np.random.Generator) -> np.ndarray:
    """Mix ``min(2**n, 30)`` orthonormalized Haar states with geometric weights."""
    n = check_qubit_count(n)
    _check_target(n, mu_target)
    m = min(2**n, GEOMETRIC_MAX_VECTORS)
    w = geometric_weights(m, mu_target)
    psis = orthonormalize([haar_state(n, rng) for _ in range(m)])
    return _mixture(psis, w)


def uniform_weights(mu_target: float) -> np.ndarray:
    """One heavy weight ``w1`` plus ``ceil(1/mu) - 1`` equal weights."""
    if not 0.0 < mu_target <= 1.0:
        raise UnreachablePurityError(f"purity {mu_target} is outside (0, 1]")
    count = math.ceil(1.0 / mu_target - 1e-12)
    if count == 1:
        return np.array([1.0])
    # n w^2 - 2 w + 1 - mu (n - 1) = 0, root in [1/n, 1]
    disc = (count - 1) * (count * mu_target - 1.0)
    if disc < 0.0:
        if disc < -1e-12:
            raise UnreachablePurityError(f"no weight reaches purity {mu_target}")
        disc = 0.0
    w1 = (1.0 + math.sqrt(disc)) / count
    if not (1.0 / count - 1e-12 <= w1 <= 1.0 + 1e-12):
        raise UnreachablePurityError(f"no weight in [1/{count}, 1] reaches purity {mu_target}")
    rest = (1.0 - w1) / (count - 1)
    return np.array([w1] + [rest] * (count - 1))


def gen_uniform(n: int, mu_target: float, rng: np.random.Generator) -> np.ndarray:
    """Mix ``ceil(1/mu)`` orthonormalized Haar states, all but the first equally weighted."""
    n = check_qubit_count(n)
    _check_target(n, mu_target)
    w = uniform_weights(mu_target)
    if len(w) > 2**n:
        raise UnreachablePurityError(
            f"{len(w)} orthogonal states do not fit in a {2**n}-dimensional space"
        )
    psis = orthonormalize([haar_state(n, rng) for _ in range(len(w))])
    return _mixture(psis, w)


def traced_purity_level(n: int, k: int) -> float:
    """Nominal purity ``2^-n + 2^-k - 2^-(n+k)`` after tracing ``k`` of ``n + k`` qubits."""
    return 2.0**-n + 2.0**-k - 2.0 ** -(n + k)


def traced_mean_purity(n: int, k: int) -> float:
    """Exact Haar average of ``Tr rho^2`` for the reduced state (Lubkin's formula)."""
    da, db = 2**n, 2**k
    return (da + db) / (da * db + 1.0)


def traced_ancilla_count(n: int, mu_target: float, max_total: int = MAX_QUBITS) -> int:
    """Integer ``k >= 1`` minimizing ``|mu_target - traced_purity_level(n, k)|``.

    The level sequence decreases toward ``2^-n``, so targets at or below the
    maximally mixed purity need a bound: ``n + k`` never exceeds ``max_total``.
    Ties resolve to the smaller ``k``.
    """
    n = check_qubit_count(n)
    kmax = max_total - n
    if kmax < 1:
        raise ValidationError(f"no room for ancilla qubits with n={n}, max_total={max_total}")
    ks = range(1, kmax + 1)
    return min(ks, key=lambda k: (abs(mu_target - traced_purity_level(n, k)), k))


def partial_trace(psi, traced_qubits: Iterable[int]) -> np.ndarray:
    """Reduced density matrix of pure state ``psi`` after tracing ``traced_qubits``.

    Kept qubits are relabeled ``0..m-1`` in their original order.
    """
    psi = np.asarray(psi, dtype=complex)
    n = num_qubits(psi.shape[0])
    traced = sorted(set(int(q) for q in traced_qubits))
    if not traced:
        raise ValidationError("traced qubit set is empty")
    if traced[0] < 0 or traced[-1] >= n:
        raise ValidationError(f"traced qubit index out of range for {n} qubits: {traced}")
    if len(traced) == n:
        raise ValidationError("cannot trace out every qubit")
    kept = [q for q in range(n) if q not in traced]
    tensor = psi.reshape((2,) * n)
    # axis n-1-q holds qubit q; order kept qubits most-significant first
    kept_axes = [n - 1 - q for q in reversed(kept)]
    traced_axes = [n - 1 - q for q in traced]
    mat = np.transpose(tensor, kept_axes + traced_axes).reshape(2 ** len(kept), -1)
    rho = mat @ mat.conj().T
    return 0.5 * (rho + rho.conj().T)


def gen_traced(n: int, mu_target: float, rng: np.random.Generator, max_total: int = MAX_QUBITS) -> np.ndarray:
    """Reduce a Haar state on ``n + k`` qubits to its first ``n`` qubits.

    ``k`` comes from :func:`traced_ancilla_count`; the achieved purity is
    random with mean :func:`traced_mean_purity`.
    """
    k = traced_ancilla_count(n, mu_target, max_total)
    psi = haar_state(n + k, rng)
    return partial_trace(psi, range(n, n + k))


GENERATORS = {
    "geometric": gen_geometric,
    "uniform": gen_uniform,
    "traced": gen_traced,
}


def save_density_matrix(path, rho) -> None:
    """Write ``rho`` as: line 1 = n, then one row per line of interleaved re/im floats."""
    rho = validate_density_matrix(rho)
    n = num_qubits(rho.shape[0])
    lines = [str(n)]
    for row in rho:
        lines.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_density_matrix(path) -> np.ndarray:
    tokens = Path(path).read_text().split("\n")
    rows = [line.split() for line in tokens if line.strip()]
    if not rows or len(rows[0]) != 1:
        raise ValidationError("first line must hold the qubit count")
    n = check_qubit_count(int(rows[0][0]))
    d = 2**n
    body = rows[1:]
    if len(body) != d or any(len(r) != 2 * d for r in body):
        raise ValidationError(f"expected {d} rows of {2 * d} floats for n={n}")
    vals = np.array(body, dtype=float).reshape(d, d, 2)
    return validate_density_matrix(vals[..., 0] + 1j * vals[..., 1])

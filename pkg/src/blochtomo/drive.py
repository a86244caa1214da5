"""Single-axis X/Y rotations: drive parameters, unitaries and the forward map.

Everything lives in the frame rotating with the drive. A qubit driven with
amplitude ``g``, detuning ``nu`` and phase ``phi`` precesses about a fixed
Bloch axis at the generalized Rabi frequency ``lam = sqrt(g**2 + nu**2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _tensor
from .errors import SingularParameterError, ValidationError
from .qstate import check_qubit_count, validate_density_matrix

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class QubitDrive:
    """Constant-phase detuned pulse acting on one qubit."""

    g: float
    nu: float
    phi: float = 0.0

    def __post_init__(self):
        for name in ("g", "nu", "phi"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(f"drive parameter {name}={v} is not finite")
            object.__setattr__(self, name, float(v))
        if self.g <= 0.0:
            raise ValidationError(f"drive amplitude must be positive, got g={self.g}")
        if self.nu == 0.0:
            raise SingularParameterError("resonant drive (nu = 0) makes the inverse map singular")

    @classmethod
    def sweet_spot(cls, lam: float = 1.0, phi: float = 0.0, sign: float = 1.0) -> "QubitDrive":
        """Drive with ``g = sqrt(2) |nu|`` (S = 0) and Rabi frequency ``lam``."""
        nu = math.copysign(lam / math.sqrt(3.0), sign)
        return cls(g=SQRT2 * abs(nu), nu=nu, phi=phi)

    @property
    def lam(self) -> float:
        return math.hypot(self.g, self.nu)

    @property
    def S(self) -> float:
        g2, n2 = self.g**2, self.nu**2
        return (g2 - 2.0 * n2) ** 2 / (4.0 * g2 * n2)

    def hamiltonian(self) -> np.ndarray:
        """Rotating-frame generator with ``exp(-i H t)`` equal to :func:`qubit_unitary`."""
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
        sz = np.array([[1, 0], [0, -1]], dtype=complex)
        return 0.5 * (self.g * math.cos(self.phi) * sx + self.g * math.sin(self.phi) * sy - self.nu * sz)


@dataclass(frozen=True)
class DriveSet:
    """One :class:`QubitDrive` per qubit; entry ``q`` drives qubit ``q``."""

    drives: tuple[QubitDrive, ...]

    def __post_init__(self):
        drives = tuple(self.drives)
        if not drives:
            raise ValidationError("a drive set needs at least one qubit")
        check_qubit_count(len(drives))
        for d in drives:
            if not isinstance(d, QubitDrive):
                raise ValidationError(f"expected QubitDrive, got {type(d).__name__}")
        object.__setattr__(self, "drives", drives)

    @classmethod
    def sweet_spot(cls, n: int, lam: float | Sequence[float] = 1.0, phi: float | Sequence[float] = 0.0) -> "DriveSet":
        n = check_qubit_count(n)
        lams = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
        phis = np.broadcast_to(np.asarray(phi, dtype=float), (n,))
        return cls(tuple(QubitDrive.sweet_spot(float(l), float(p)) for l, p in zip(lams, phis)))

    @classmethod
    def from_params(cls, params: Iterable[dict]) -> "DriveSet":
        return cls(tuple(QubitDrive(**dict(p)) for p in params))

    @property
    def n(self) -> int:
        return len(self.drives)

    @property
    def dim(self) -> int:
        return 2**self.n

    @property
    def lams(self) -> np.ndarray:
        return np.array([d.lam for d in self.drives])

    def __len__(self) -> int:
        return len(self.drives)

    def __iter__(self):
        return iter(self.drives)

    def __getitem__(self, q: int) -> QubitDrive:
        return self.drives[q]


def eigenbasis(d: QubitDrive) -> tuple[np.ndarray, np.ndarray]:
    """Rotation-axis eigenvectors ``|+>, |->`` in the lab basis ``(up, down)``.

    ``|+>`` has rotating-frame energy ``+lam/2``.
    """
    r = d.nu / d.lam
    ph = np.exp(0.5j * d.phi)
    plus = np.array([math.sqrt(1.0 - r) / ph, math.sqrt(1.0 + r) * ph]) / SQRT2
    minus = np.array([-math.sqrt(1.0 + r) / ph, math.sqrt(1.0 - r) * ph]) / SQRT2
    return plus, minus


def _projectors(d: QubitDrive) -> tuple[np.ndarray, np.ndarray]:
    plus, minus = eigenbasis(d)
    return np.outer(plus, plus.conj()), np.outer(minus, minus.conj())


def qubit_unitary(d: QubitDrive, t) -> np.ndarray:
    """``exp(-i lam t/2)|+><+| + exp(i lam t/2)|-><-|``, broadcast over ``t``."""
    pp, pm = _projectors(d)
    t = np.asarray(t, dtype=float)
    ph = np.exp(-0.5j * d.lam * t)[..., None, None]
    return ph * pp + ph.conj() * pm


def _times(ds: DriveSet, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.shape[-1:] != (ds.n,):
        raise ValidationError(f"expected {ds.n} rotation times, got shape {t.shape}")
    return t


def unitary(ds: DriveSet, t) -> np.ndarray:
    """Full ``2**n x 2**n`` rotation for one time vector ``t``."""
    t = _times(ds, t)
    if t.ndim != 1:
        raise ValidationError("unitary takes a single time vector")
    return _tensor.kron_legs([qubit_unitary(d, tq) for d, tq in zip(ds, t)], legs=2)


def qubit_forward(d: QubitDrive, t) -> np.ndarray:
    """Per-qubit forward map ``M[s, a, b] = <s|U|a><b|U^dag|s>``, broadcast over ``t``."""
    u = qubit_unitary(d, t)
    return u[..., :, :, None] * u.conj()[..., :, None, :]


def forward_map(ds: DriveSet, t, s: int, a: int, b: int) -> complex:
    """Single element ``M_{s a b}(t)``, a product of per-qubit factors."""
    t = _times(ds, t)
    val = 1.0 + 0.0j
    for q, (d, tq) in enumerate(zip(ds, t)):
        m = qubit_forward(d, tq)
        val *= m[(s >> q) & 1, (a >> q) & 1, (b >> q) & 1]
    return complex(val)


def forward_tensor(ds: DriveSet, t) -> np.ndarray:
    """Dense ``M[s, a, b]`` for one time vector (small ``n`` only)."""
    t = _times(ds, t)
    return _tensor.kron_legs([qubit_forward(d, tq) for d, tq in zip(ds, t)], legs=3)


PROB_NEG_TOL = 1e-12
PROB_SUM_TOL = 1e-10


def clean_probabilities(p: np.ndarray) -> np.ndarray:
    """Clamp round-off negatives and renormalize; reject anything worse."""
    from .errors import ProbabilityError

    p = np.array(p, dtype=float)
    if np.any(p < -PROB_NEG_TOL):
        raise ProbabilityError(f"outcome probability {p.min():.3e} is negative")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > PROB_SUM_TOL):
        raise ProbabilityError("outcome probabilities do not sum to one")
    p = np.clip(p, 0.0, None)
    return p / p.sum(axis=-1, keepdims=True)


def outcome_probabilities(ds: DriveSet, t, rho, validate: bool = True) -> np.ndarray:
    """Lab-basis outcome distribution ``diag(U rho U^dag)``.

    ``t`` may be a single time vector (shape ``(n,)``) or a batch ``(B, n)``;
    the result has shape ``(2**n,)`` or ``(B, 2**n)``.
    """
    if validate:
        rho = validate_density_matrix(rho)
    t = _times(ds, t)
    if rho.shape[0] != ds.dim:
        raise ValidationError(f"density matrix dimension {rho.shape[0]} != 2^{ds.n}")
    batch = t.ndim == 2
    ops = [qubit_forward(d, t[..., q]) for q, d in enumerate(ds)]
    p = _tensor.apply_local(rho, ops, legs_in=2, legs_out=1, batch_ops=batch).real
    return clean_probabilities(p)

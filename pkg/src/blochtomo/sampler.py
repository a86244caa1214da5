"""Monte-Carlo measurement pipeline.

Each unitary ``i`` gets its own random stream derived from
``(master_seed, i)`` through :class:`numpy.random.SeedSequence`, so a run
does not depend on how work is split across threads. From that stream the
``n`` rotation times are drawn first, then ``N_M`` uniforms that are turned
into outcomes by inverse-CDF lookup. With ``shared_time`` a single time is
drawn and applied to every qubit, as under one global drive.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .drive import DriveSet, outcome_probabilities
from .errors import ValidationError
from .qstate import validate_density_matrix

DEFAULT_SHOTS = 10
MAX_SEED = 2**64 - 1
RUNLOG_MAGIC = "# blochtomo runlog v1"
_CHUNK = 512


@dataclass(frozen=True)
class ExperimentPlan:
    """``N_U`` random unitaries, ``N_M`` shots each, times uniform on ``[t0, t0 + T]``.

    ``offset`` is ``t0``. ``shared_time`` gives every qubit the same time.
    """

    n_unitaries: int
    shots_per_unitary: int = DEFAULT_SHOTS
    window: float = 2 * math.pi * 100
    master_seed: int = 0
    offset: float = 0.0
    shared_time: bool = False

    def __post_init__(self):
        if int(self.n_unitaries) != self.n_unitaries or self.n_unitaries < 2:
            raise ValidationError(f"need at least 2 unitaries, got {self.n_unitaries}")
        if int(self.shots_per_unitary) != self.shots_per_unitary or self.shots_per_unitary < 1:
            raise ValidationError(f"shots per unitary must be a positive integer, got {self.shots_per_unitary}")
        T = float(self.window)
        if not (math.isfinite(T) and T > 0):
            raise ValidationError(f"sampling window must be finite and positive, got {self.window}")
        if not 0 <= int(self.master_seed) <= MAX_SEED:
            raise ValidationError("master seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "n_unitaries", int(self.n_unitaries))
        object.__setattr__(self, "shots_per_unitary", int(self.shots_per_unitary))
        object.__setattr__(self, "window", T)
        t0 = float(self.offset)
        if not (math.isfinite(t0) and t0 >= 0):
            raise ValidationError(f"time offset must be finite and non-negative, got {self.offset}")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "offset", t0)
        object.__setattr__(self, "shared_time", bool(self.shared_time))

    def sample_times(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.shared_time:
            return np.full(n, self.offset + rng.uniform(0.0, self.window))
        return self.offset + rng.uniform(0.0, self.window, size=n)


@dataclass(frozen=True)
class MeasurementRecord:
    t: np.ndarray
    counts: np.ndarray

    @property
    def n_shots(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        n = self.n_shots
        if n == 0:
            raise ValidationError("record has no shots")
        return self.counts / n


@dataclass
class RunLog:
    """All records of one experiment, stored as dense arrays.

    ``times`` has shape ``(N_U, n)`` and ``counts`` shape ``(N_U, 2**n)``.
    """

    plan: ExperimentPlan
    times: np.ndarray
    counts: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.times.ndim != 2 or self.counts.ndim != 2:
            raise ValidationError("run log arrays must be two-dimensional")
        self.n = self.times.shape[1]
        if self.counts.shape != (self.plan.n_unitaries, 2**self.n) or self.times.shape[0] != self.plan.n_unitaries:
            raise ValidationError("run log shape does not match its plan")
        if np.any(self.counts < 0) or np.any(self.counts.sum(axis=1) != self.plan.shots_per_unitary):
            raise ValidationError("every record needs N_M non-negative counts")

    def __len__(self) -> int:
        return self.plan.n_unitaries

    @property
    def records(self) -> list[MeasurementRecord]:
        return [MeasurementRecord(t, c) for t, c in zip(self.times, self.counts)]

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.plan.shots_per_unitary

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunLog):
            return NotImplemented
        return (
            self.plan == other.plan
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.counts, other.counts)
        )

    def to_text(self) -> str:
        p = self.plan
        buf = io.StringIO()
        buf.write(RUNLOG_MAGIC + "\n")
        head = f"{self.n} {p.n_unitaries} {p.shots_per_unitary} {p.window!r} {p.master_seed}"
        if p.offset or p.shared_time:
            head += f" {p.offset!r} {int(p.shared_time)}"
        buf.write(head + "\n")
        for t, c in zip(self.times, self.counts):
            buf.write(" ".join(repr(float(x)) for x in t))
            buf.write(" ")
            buf.write(" ".join(str(int(x)) for x in c))
            buf.write("\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "RunLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != RUNLOG_MAGIC:
            raise ValidationError("not a run log")
        head = lines[1].split()
        if len(head) not in (5, 7):
            raise ValidationError("malformed run log header")
        n, n_u, n_m = int(head[0]), int(head[1]), int(head[2])
        extra = (float(head[5]), head[6] == "1") if len(head) == 7 else ()
        plan = ExperimentPlan(n_u, n_m, float(head[3]), int(head[4]), *extra)
        rows = lines[2:]
        if len(rows) != n_u:
            raise ValidationError(f"run log has {len(rows)} records, header says {n_u}")
        times = np.empty((n_u, n))
        counts = np.empty((n_u, 2**n), dtype=np.int64)
        for r, ln in enumerate(rows):
            parts = ln.split()
            if len(parts) != n + 2**n:
                raise ValidationError(f"record {r} has {len(parts)} fields")
            times[r] = [float(x) for x in parts[:n]]
            counts[r] = [int(x) for x in parts[n:]]
        return cls(plan, times, counts)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "RunLog":
        return cls.from_text(Path(path).read_text())


def unitary_stream(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator for unitary ``index``."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(index),)))


def draw_times(plan: ExperimentPlan, index: int, n: int) -> np.ndarray:
    """Rotation times of unitary ``index``, as drawn by :func:`run_experiment`."""
    if not 0 <= index < plan.n_unitaries:
        raise ValidationError(f"unitary index {index} outside [0, {plan.n_unitaries})")
    return plan.sample_times(unitary_stream(plan.master_seed, index), n)


def sample_outcomes(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF lookup: row ``r`` of ``u`` against distribution ``probs[r]``.

    Returns outcome indices with the same shape as ``u``.
    """
    probs = np.atleast_2d(probs)
    u = np.atleast_2d(u)
    B, D = probs.shape
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    # offset each row so one flat searchsorted handles the whole batch
    flat = (cdf + np.arange(B)[:, None]).ravel()
    idx = np.searchsorted(flat, (u + np.arange(B)[:, None]).ravel(), side="right")
    out = idx.reshape(u.shape) - np.arange(B)[:, None] * D
    return np.minimum(out, D - 1)


def _counts(outcomes: np.ndarray, D: int) -> np.ndarray:
    B = outcomes.shape[0]
    flat = (outcomes + np.arange(B)[:, None] * D).ravel()
    return np.bincount(flat, minlength=B * D).reshape(B, D)


def simulate_shots(ds: DriveSet, t, rho, n_shots: int, rng: np.random.Generator) -> MeasurementRecord:
    """Measure ``n_shots`` copies of ``U(t) rho U(t)^dag`` in the computational basis."""
    if n_shots < 0:
        raise ValidationError("number of shots must be non-negative")
    t = np.asarray(t, dtype=float)
    p = outcome_probabilities(ds, t, rho)
    if n_shots == 0:
        return MeasurementRecord(t, np.zeros(ds.dim, dtype=np.int64))
    out = sample_outcomes(p[None, :], rng.random(n_shots)[None, :])
    return MeasurementRecord(t, _counts(out, ds.dim)[0])


def _run_block(ds: DriveSet, rho: np.ndarray, plan: ExperimentPlan, start: int, stop: int):
    n, D = ds.n, ds.dim
    times = np.empty((stop - start, n))
    u = np.empty((stop - start, plan.shots_per_unitary))
    for r, i in enumerate(range(start, stop)):
        rng = unitary_stream(plan.master_seed, i)
        times[r] = plan.sample_times(rng, n)
        u[r] = rng.random(plan.shots_per_unitary)
    probs = outcome_probabilities(ds, times, rho, validate=False)
    return times, _counts(sample_outcomes(probs, u), D)


def run_experiment(ds: DriveSet, rho, plan: ExperimentPlan, threads: int = 1) -> RunLog:
    """Simulate the whole plan; the result is independent of ``threads``."""
    rho = validate_density_matrix(rho)
    if rho.shape[0] != ds.dim:
        raise ValidationError(f"density matrix dimension {rho.shape[0]} != 2^{ds.n}")
    chunk = max(1, min(_CHUNK, (1 << 20) // (ds.dim * 8)))
    bounds = [(s, min(s + chunk, plan.n_unitaries)) for s in range(0, plan.n_unitaries, chunk)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _run_block(ds, rho, plan, *b), bounds))
    else:
        parts = [_run_block(ds, rho, plan, *b) for b in bounds]
    times = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])
    return RunLog(plan, times, counts)

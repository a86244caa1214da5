"""Harness configuration: YAML with a schema version, validated up front.

Unknown keys are rejected at every level. ``to_dict`` produces the fully
resolved form, and parsing that again gives back an equal config.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .drive import DriveSet, QubitDrive
from .errors import ValidationError
from .qstate import GENERATORS, MAX_QUBITS

SCHEMA_VERSION = 1

DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "seed": 20240601,
    "output_dir": "results",
    "window": {"periods": 100},
    "drives": {"sweet_spot": True, "lam": 1.0, "phi": 0.0},
    "ensemble": {
        "n": [3],
        "mu": [0.1, 0.2, 0.3, 0.5],
        "methods": ["geometric", "uniform", "traced"],
        "per_cell": 5,
        "state_file": None,
    },
    "tomo": {"n_unitaries": 5000, "shots": [1, 1000], "trials": 1},
    "purity": {"n_unitaries": 5000, "shots": 10, "trials": 50},
    "limited": {"mode": "ladder", "n_range": [1, 8], "seeds": 200, "lam0": 1.0},
    "figures": False,
}


def _merge(base: dict, over: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ValidationError(f"unknown config key {path}{k!r}")
        # drives and window are replaced whole: their keys are alternatives
        if isinstance(base[k], dict) and k not in ("drives", "window"):
            if not isinstance(v, dict):
                raise ValidationError(f"config key {path}{k} must be a mapping")
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _int_list(v, name: str) -> list[int]:
    if isinstance(v, int):
        v = [v]
    if not isinstance(v, list) or not v or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise ValidationError(f"{name} must be an integer or a non-empty list of integers")
    return v


def _pos_int(v, name: str, minimum: int = 1) -> int:
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}")
    return v


@dataclass
class HarnessConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    # -- construction ------------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict | None) -> "HarnessConfig":
        raw = {} if raw is None else raw
        if not isinstance(raw, dict):
            raise ValidationError("config must be a mapping")
        version = raw.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        cfg = cls(_merge(DEFAULTS, raw, ""))
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, text: str) -> "HarnessConfig":
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ValidationError(f"config is not valid YAML: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "HarnessConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_yaml(text)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def __getitem__(self, key):
        return self.data[key]

    # -- validation --------------------------------------------------------
    def validate(self) -> None:
        d = self.data
        if not isinstance(d["seed"], int) or isinstance(d["seed"], bool) or not 0 <= d["seed"] < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if not isinstance(d["output_dir"], str) or not d["output_dir"]:
            raise ValidationError("output_dir must be a non-empty string")
        if not isinstance(d["figures"], bool):
            raise ValidationError("figures must be true or false")
        w = d["window"]
        if not isinstance(w, dict) or set(w) - {"periods", "time", "offset", "shared_time"}:
            raise ValidationError("window takes 'periods' or 'time', plus optional 'offset' and 'shared_time'")
        if ("periods" in w) == ("time" in w):
            raise ValidationError("window needs exactly one of 'periods' or 'time'")
        val = w.get("periods", w.get("time"))
        if not isinstance(val, (int, float)) or isinstance(val, bool) or not (math.isfinite(val) and val > 0):
            raise ValidationError("window length must be a positive number")
        off = w.get("offset", 0.0)
        if not isinstance(off, (int, float)) or isinstance(off, bool) or not (math.isfinite(off) and off >= 0):
            raise ValidationError("window.offset must be a non-negative number")
        if not isinstance(w.get("shared_time", False), bool):
            raise ValidationError("window.shared_time must be true or false")
        self._validate_drives()
        e = d["ensemble"]
        for n in _int_list(e["n"], "ensemble.n"):
            if not 1 <= n <= MAX_QUBITS:
                raise ValidationError(f"ensemble.n entries must lie in [1, {MAX_QUBITS}]")
        mus = e["mu"] if isinstance(e["mu"], list) else [e["mu"]]
        if not mus or not all(isinstance(m, (int, float)) and not isinstance(m, bool) and 0 < m <= 1 for m in mus):
            raise ValidationError("ensemble.mu must hold purities in (0, 1]")
        if not isinstance(e["methods"], list) or not e["methods"] or any(m not in GENERATORS for m in e["methods"]):
            raise ValidationError(f"ensemble.methods must be a list drawn from {sorted(GENERATORS)}")
        _pos_int(e["per_cell"], "ensemble.per_cell")
        if e["state_file"] is not None and not isinstance(e["state_file"], str):
            raise ValidationError("ensemble.state_file must be a path or null")
        t = d["tomo"]
        _pos_int(t["n_unitaries"], "tomo.n_unitaries", 2)
        shots = _int_list(t["shots"], "tomo.shots")
        if len(set(shots)) < 2 or min(shots) < 1:
            raise ValidationError("tomo.shots needs at least two distinct positive shot counts")
        _pos_int(t["trials"], "tomo.trials")
        p = d["purity"]
        _pos_int(p["n_unitaries"], "purity.n_unitaries", 2)
        _pos_int(p["shots"], "purity.shots")
        _pos_int(p["trials"], "purity.trials", 2)
        lc = d["limited"]
        if lc["mode"] not in ("ladder", "random"):
            raise ValidationError("limited.mode must be 'ladder' or 'random'")
        nr = _int_list(lc["n_range"], "limited.n_range")
        if len(nr) != 2 or not 1 <= nr[0] <= nr[1] <= MAX_QUBITS:
            raise ValidationError(f"limited.n_range must be [lo, hi] with 1 <= lo <= hi <= {MAX_QUBITS}")
        _pos_int(lc["seeds"], "limited.seeds")
        if not isinstance(lc["lam0"], (int, float)) or not lc["lam0"] > 0:
            raise ValidationError("limited.lam0 must be positive")

    def _validate_drives(self) -> None:
        dr = self.data["drives"]
        if isinstance(dr, dict):
            if set(dr) - {"sweet_spot", "lam", "phi"}:
                raise ValidationError(f"unknown drive keys {sorted(set(dr) - {'sweet_spot', 'lam', 'phi'})}")
            if dr.get("sweet_spot") is not True:
                raise ValidationError("drive shorthand requires sweet_spot: true; otherwise list per-qubit {g, nu, phi}")
            lam = dr.get("lam", 1.0)
            if not isinstance(lam, (int, float)) or not lam > 0:
                raise ValidationError("drives.lam must be positive")
        elif isinstance(dr, list):
            for i, q in enumerate(dr):
                if not isinstance(q, dict) or set(q) - {"g", "nu", "phi"} or not {"g", "nu"} <= set(q):
                    raise ValidationError(f"drives[{i}] must be a mapping with g, nu and optional phi")
                QubitDrive(**q)
            for n in _int_list(self.data["ensemble"]["n"], "ensemble.n"):
                if n != len(dr):
                    raise ValidationError(f"explicit drives list {len(dr)} qubits but ensemble.n includes {n}")
        else:
            raise ValidationError("drives must be a mapping or a list")

    # -- derived values ----------------------------------------------------
    def drive_set(self, n: int) -> DriveSet:
        dr = self.data["drives"]
        if isinstance(dr, list):
            if len(dr) != n:
                raise ValidationError(f"explicit drives list {len(dr)} qubits, need {n}")
            return DriveSet.from_params(dr)
        return DriveSet.sweet_spot(n, float(dr.get("lam", 1.0)), float(dr.get("phi", 0.0)))

    def window(self, ds: DriveSet) -> float:
        """``T`` in time units; ``periods`` counts periods of the slowest qubit."""
        w = self.data["window"]
        if "time" in w:
            return float(w["time"])
        return float(w["periods"]) * 2 * math.pi / float(min(ds.lams))

    def time_offset(self) -> float:
        """Start of the sampling window, in time units."""
        return float(self.data["window"].get("offset", 0.0))

    def shared_time(self) -> bool:
        """Whether one drawn time drives every qubit."""
        return bool(self.data["window"].get("shared_time", False))

    def qubit_counts(self) -> list[int]:
        return _int_list(self.data["ensemble"]["n"], "ensemble.n")

    def purities(self) -> list[float]:
        mu = self.data["ensemble"]["mu"]
        return [float(m) for m in (mu if isinstance(mu, list) else [mu])]

    def digest(self) -> str:
        """Hash of everything that affects results (not output location or threads)."""
        d = self.to_dict()
        d.pop("output_dir", None)
        d.pop("figures", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

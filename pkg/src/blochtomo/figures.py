"""PNG figures for the CLI reports, rendered off-screen with matplotlib."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def tomo_figure(summary, path) -> Path:
    """Empirical vs predicted unitary-averaging variance, one point per matrix."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for n in sorted({r["N"] for r in summary}):
        rows = [r for r in summary if r["N"] == n]
        ax.scatter([r["mu"] for r in rows], [r["delta_U_sq_empirical"] for r in rows], s=12, label=f"N={n} empirical")
        pts = sorted((r["mu"], r["delta_U_sq_mu_term"]) for r in rows)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=1, label=f"N={n} (5/2)^N mu")
    ax.set_xlabel("purity")
    ax.set_ylabel("N_U x squared error, unitary part")
    ax.legend(fontsize=7)
    return _save(fig, path)


def purity_figure(summary, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    mu = [r["mu"] for r in summary]
    ax.errorbar(mu, [r["mu_hat_mean"] for r in summary], yerr=[r["mu_hat_stderr"] for r in summary], fmt="o", ms=3)
    lo, hi = min(mu), max(mu)
    ax.plot([lo, hi], [lo, hi], "k--", lw=1)
    ax.set_xlabel("true purity")
    ax.set_ylabel("mean estimate")
    return _save(fig, path)


def limited_figure(summary, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy([r["N"] for r in summary], [r["geo_mean"] for r in summary], "o-")
    ax.set_xlabel("qubits")
    ax.set_ylabel("smallest frequency combination")
    return _save(fig, path)

"""Command-line harness: ``blochtomo <command> [--config PATH] ...``.

Every command writes CSV files whose leading ``#`` lines record the package
version, the command, a hash of the resolved config and the seed. Re-running
with the same config and seed reproduces the files byte for byte,
whatever the thread count.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__, limited_control as lc, oracle, purity as pu, qstate, recon, tomography as tm
from .config import HarnessConfig
from .errors import BlochTomoError, DegenerateFrequenciesError, UnreachablePurityError, ValidationError
from .sampler import ExperimentPlan, run_experiment

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
ENV_OUT = "BLOCHTOMO_OUT"
ENV_THREADS = "BLOCHTOMO_THREADS"


# --------------------------------------------------------------------------
# shared plumbing


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows, meta: dict) -> None:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


@dataclass
class Context:
    cfg: HarnessConfig
    out: Path
    threads: int
    dry_run: bool
    figures: bool
    command: str

    def meta(self, **extra) -> dict:
        m = {
            "blochtomo": __version__,
            "command": self.command,
            "config_sha256": self.cfg.digest(),
            "seed": self.cfg["seed"],
        }
        m.update(extra)
        return m

    def pmap(self, fn: Callable, items: Sequence) -> list:
        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]


def _seed(master: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0])


# stream tags keep the different uses of the master seed apart
_TAG_STATE, _TAG_TOMO, _TAG_PURITY = 1, 2, 3


@dataclass
class Cell:
    index: int
    label: str
    n: int
    method: str
    mu_target: float
    mu_expected: float
    rho: np.ndarray | None
    status: str


def build_ensemble(cfg: HarnessConfig) -> list[Cell]:
    """Density matrices per (n, method, mu, copy), in a fixed order."""
    e = cfg["ensemble"]
    if e["state_file"]:
        rho = qstate.load_density_matrix(e["state_file"])
        n = qstate.num_qubits(rho.shape[0])
        mu = qstate.purity(rho)
        return [Cell(0, Path(e["state_file"]).stem, n, "file", mu, mu, rho, "ok")]
    cells = []
    methods = e["methods"]
    for n in cfg.qubit_counts():
        for mi, method in enumerate(methods):
            for ui, mu in enumerate(cfg.purities()):
                for k in range(e["per_cell"]):
                    label = f"n{n}_{method}_mu{mu:g}_{k}"
                    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"], spawn_key=(_TAG_STATE, n, mi, ui, k)))
                    expected = mu
                    if method == "traced":
                        kk = qstate.traced_ancilla_count(n, mu)
                        expected = qstate.traced_mean_purity(n, kk)
                    try:
                        rho = qstate.GENERATORS[method](n, mu, rng)
                        status = "ok"
                    except UnreachablePurityError:
                        rho, status = None, "unreachable"
                    cells.append(Cell(len(cells), label, n, method, mu, expected, rho, status))
    return cells


# --------------------------------------------------------------------------
# commands


def cmd_genrho(ctx: Context) -> int:
    cols = ["file", "n", "method", "mu_target", "mu_expected", "mu_achieved", "status"]
    outdir = ctx.out / "genrho"
    if ctx.dry_run:
        write_csv(outdir / "manifest.csv", cols, [], ctx.meta())
        return EXIT_OK
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for c in build_ensemble(ctx.cfg):
        row = {"file": "", "n": c.n, "method": c.method, "mu_target": c.mu_target, "mu_expected": c.mu_expected, "mu_achieved": "", "status": c.status}
        if c.rho is not None:
            name = f"{c.label}.txt"
            qstate.save_density_matrix(outdir / name, c.rho)
            row["file"] = name
            row["mu_achieved"] = qstate.purity(c.rho)
        rows.append(row)
    write_csv(outdir / "manifest.csv", cols, rows, ctx.meta())
    print(f"genrho: {sum(r['status'] == 'ok' for r in rows)} matrices, {sum(r['status'] != 'ok' for r in rows)} unreachable -> {outdir}")
    return EXIT_OK


TOMO_TRIAL_COLS = ["matrix", "trial", "N", "N_U", "N_M", "T", "delta_tom_sq_empirical", "delta_tom_sq_predicted"]
TOMO_SUMMARY_COLS = [
    "matrix", "N", "method", "mu",
    "delta_U_sq_empirical", "delta_U_sq_amortized", "delta_U_sq_mu_term",
    "delta_M_sq_empirical", "delta_M_sq_predicted",
]


def _plan(cfg: HarnessConfig, ds, n_u: int, n_m: int, T: float, seed: int) -> ExperimentPlan:
    return ExperimentPlan(n_u, n_m, T, seed, cfg.time_offset(), cfg.shared_time())


def _check_drives(cfg: HarnessConfig, ds) -> None:
    # a shared time needs combined frequencies that never cancel
    if cfg.shared_time():
        try:
            lc.min_theta(lc.FrequencySet(tuple(float(x) for x in ds.lams)))
        except DegenerateFrequenciesError as exc:
            raise ValidationError(f"window.shared_time with these drives is not invertible: {exc}") from exc


def _tomo_cell(ctx: Context, cell: Cell):
    cfg = ctx.cfg
    t = cfg["tomo"]
    ds = cfg.drive_set(cell.n)
    T = cfg.window(ds)
    mu = qstate.purity(cell.rho)
    trials, points = [], []
    for si, n_m in enumerate(sorted(set(t["shots"]))):
        errs = []
        for trial in range(t["trials"]):
            plan = _plan(cfg, ds, t["n_unitaries"], n_m, T, _seed(cfg["seed"], _TAG_TOMO, cell.index, si, trial))
            est = tm.reconstruct(ds, run_experiment(ds, cell.rho, plan))
            err = float(np.sum(np.abs(est.rho_hat - cell.rho) ** 2))
            errs.append(err)
            trials.append({
                "matrix": cell.label, "trial": trial, "N": cell.n, "N_U": plan.n_unitaries, "N_M": n_m, "T": T,
                "delta_tom_sq_empirical": err,
                "delta_tom_sq_predicted": tm.predict_total(ds, plan.n_unitaries, n_m, mu=mu),
            })
        points.append((t["n_unitaries"], n_m, float(np.mean(errs))))
    split = tm.decompose_variance(points)
    a, b = tm.delta_U_terms(ds, "amortized")
    summary = {
        "matrix": cell.label, "N": cell.n, "method": cell.method, "mu": mu,
        "delta_U_sq_empirical": split["delta_U_sq"], "delta_U_sq_amortized": a * mu + b, "delta_U_sq_mu_term": a * mu,
        "delta_M_sq_empirical": split["delta_M_sq"], "delta_M_sq_predicted": tm.predict_delta_M(ds),
    }
    return trials, summary


def cmd_tomo(ctx: Context) -> int:
    outdir = ctx.out / "tomo"
    if ctx.dry_run:
        write_csv(outdir / "tomo_trials.csv", TOMO_TRIAL_COLS, [], ctx.meta())
        write_csv(outdir / "tomo_summary.csv", TOMO_SUMMARY_COLS, [], ctx.meta())
        return EXIT_OK
    cells = [c for c in build_ensemble(ctx.cfg) if c.rho is not None]
    for n in sorted({c.n for c in cells}):
        _check_drives(ctx.cfg, ctx.cfg.drive_set(n))
    results = ctx.pmap(lambda c: _tomo_cell(ctx, c), cells)
    trials = [r for tr, _ in results for r in tr]
    summary = [s for _, s in results]
    write_csv(outdir / "tomo_trials.csv", TOMO_TRIAL_COLS, trials, ctx.meta())
    write_csv(outdir / "tomo_summary.csv", TOMO_SUMMARY_COLS, summary, ctx.meta())
    if ctx.figures:
        from . import figures

        figures.tomo_figure(summary, outdir / "tomo.png")
    print(f"tomo: {len(summary)} matrices -> {outdir}")
    return EXIT_OK


PURITY_TRIAL_COLS = ["matrix", "trial", "N", "mu_true", "mu_hat", "predicted_sigma"]
PURITY_SUMMARY_COLS = [
    "matrix", "N", "method", "mu", "N_U", "N_M", "mu_hat_mean", "mu_hat_stderr",
    "var_empirical", "var_predicted",
    "dmu_1_0", "dmu_2_0", "dmu_1_1", "dmu_2_1", "dmu_2_2",
]


def _purity_cell(ctx: Context, cell: Cell):
    cfg = ctx.cfg
    p = cfg["purity"]
    ds = cfg.drive_set(cell.n)
    T = cfg.window(ds)
    mu = qstate.purity(cell.rho)
    comps = pu.amortized_components(ds, mu)
    plan0 = ExperimentPlan(p["n_unitaries"], p["shots"], T, 0)
    var_pred = pu.predict_dmu_total(ds, mu, plan0)
    sigma = math.sqrt(var_pred)
    rows, mus = [], []
    for trial in range(p["trials"]):
        plan = _plan(cfg, ds, p["n_unitaries"], p["shots"], T, _seed(cfg["seed"], _TAG_PURITY, cell.index, trial))
        m = pu.estimate_purity(ds, run_experiment(ds, cell.rho, plan)).mu_hat
        mus.append(m)
        rows.append({"matrix": cell.label, "trial": trial, "N": cell.n, "mu_true": mu, "mu_hat": m, "predicted_sigma": sigma})
    mean, se = pu.mean_and_stderr(mus)
    summary = {
        "matrix": cell.label, "N": cell.n, "method": cell.method, "mu": mu, "N_U": p["n_unitaries"], "N_M": p["shots"],
        "mu_hat_mean": mean, "mu_hat_stderr": se, "var_empirical": float(np.var(mus, ddof=1)), "var_predicted": var_pred,
    }
    for (m_, n_), v in comps.items():
        summary[f"dmu_{m_}_{n_}"] = v
    return rows, summary


def cmd_purity(ctx: Context) -> int:
    outdir = ctx.out / "purity"
    if ctx.dry_run:
        write_csv(outdir / "purity_trials.csv", PURITY_TRIAL_COLS, [], ctx.meta())
        write_csv(outdir / "purity_summary.csv", PURITY_SUMMARY_COLS, [], ctx.meta())
        return EXIT_OK
    cells = [c for c in build_ensemble(ctx.cfg) if c.rho is not None]
    for n in sorted({c.n for c in cells}):
        _check_drives(ctx.cfg, ctx.cfg.drive_set(n))
    results = ctx.pmap(lambda c: _purity_cell(ctx, c), cells)
    trials = [r for tr, _ in results for r in tr]
    summary = [s for _, s in results]
    write_csv(outdir / "purity_trials.csv", PURITY_TRIAL_COLS, trials, ctx.meta())
    write_csv(outdir / "purity_summary.csv", PURITY_SUMMARY_COLS, summary, ctx.meta())
    if ctx.figures:
        from . import figures

        figures.purity_figure(summary, outdir / "purity.png")
    print(f"purity: {len(summary)} matrices -> {outdir}")
    return EXIT_OK


LIMITED_COLS = ["mode", "N", "seed", "min_theta", "min_theta_exact", "argmin"]
LIMITED_SUMMARY_COLS = ["mode", "N", "count", "geo_mean", "log_std"]


def _parse_range(text: str) -> list[int]:
    try:
        lo, hi = (int(x) for x in text.split(".."))
    except ValueError as exc:
        raise ValidationError(f"--n-range must look like a..b, got {text!r}") from exc
    return [lo, hi]


def cmd_limited(ctx: Context, args) -> int:
    lcfg = ctx.cfg["limited"]
    outdir = ctx.out / "limited"
    if ctx.dry_run:
        write_csv(outdir / "min_theta.csv", LIMITED_COLS, [], ctx.meta())
        write_csv(outdir / "min_theta_summary.csv", LIMITED_SUMMARY_COLS, [], ctx.meta())
        return EXIT_OK
    mode = lcfg["mode"]
    lo, hi = lcfg["n_range"]
    lam0 = float(lcfg["lam0"])
    jobs = []
    for n in range(lo, hi + 1):
        seeds = [None] if mode == "ladder" else list(range(lcfg["seeds"]))
        jobs.extend((n, s) for s in seeds)

    def one(job):
        n, s = job
        if s is None:
            res = lc.min_theta(lc.FrequencySet.ladder(n, lam0))
            exact = str(res.value)
        else:
            res = lc.min_theta(lc.FrequencySet.random(n, lam0, _seed(ctx.cfg["seed"], n, s)))
            exact = ""
        coeffs = " ".join(str(x) for x in res.coeffs)
        return {"mode": mode, "N": n, "seed": "" if s is None else s, "min_theta": float(res.value), "min_theta_exact": exact, "argmin": coeffs}

    rows = ctx.pmap(one, jobs)
    summary = []
    for n in range(lo, hi + 1):
        vals = [r["min_theta"] for r in rows if r["N"] == n]
        lm, ls = lc.log_stats(vals)
        summary.append({"mode": mode, "N": n, "count": len(vals), "geo_mean": lm, "log_std": ls})
    extra = {}
    if hi - lo >= 1:
        extra["fitted_decay_base"] = repr(lc.fit_decay_base([s["N"] for s in summary], [s["geo_mean"] for s in summary]))
    write_csv(outdir / "min_theta.csv", LIMITED_COLS, rows, ctx.meta())
    write_csv(outdir / "min_theta_summary.csv", LIMITED_SUMMARY_COLS, summary, ctx.meta(**extra))
    if ctx.figures:
        from . import figures

        figures.limited_figure(summary, outdir / "min_theta.png")
    print(f"limited: {len(rows)} rows -> {outdir}" + (f", decay base {float(extra['fitted_decay_base']):.3f}" if extra else ""))
    return EXIT_OK


def cmd_inspect_inverse(ctx: Context, args) -> int:
    if args.g is not None or args.nu is not None:
        if args.g is None or args.nu is None:
            raise ValidationError("--g and --nu go together")
        from .drive import DriveSet, QubitDrive

        ds = DriveSet((QubitDrive(args.g, args.nu, args.phi),))
    else:
        ds = ctx.cfg.drive_set(args.n or ctx.cfg.qubit_counts()[0])
    out = sys.stdout
    for q, d in enumerate(ds):
        out.write(f"qubit {q}: g={d.g!r} nu={d.nu!r} phi={d.phi!r} lam={d.lam!r} S={d.S!r}\n")
        c = recon.inverse_harmonics(d).coeffs
        out.write("  a b s   k=-1                      k=0                       k=+1\n")
        for a in range(2):
            for b in range(2):
                for s in range(2):
                    vals = "  ".join(f"{c[k, a, b, s].real:+.6f}{c[k, a, b, s].imag:+.6f}j" for k in range(3))
                    out.write(f"  {a} {b} {s}   {vals}\n")
        if args.t is not None:
            m = recon.qubit_inverse(d, args.t)
            out.write(f"  evaluated at t={args.t!r}:\n")
            for a in range(2):
                for b in range(2):
                    out.write(f"    a={a} b={b}: " + "  ".join(f"{m[a, b, s].real:+.6f}{m[a, b, s].imag:+.6f}j" for s in range(2)) + "\n")
    return EXIT_OK


def cmd_conformance(ctx: Context) -> int:
    path = ctx.out / "conformance.json"
    if ctx.dry_run:
        oracle.write_conformance(path, [])
        return EXIT_OK
    reports = oracle.conformance_reports(ctx.cfg["seed"])
    oracle.write_conformance(path, reports)
    failed = [r.name for r in reports if not r.passed]
    print(f"conformance: {len(reports) - len(failed)}/{len(reports)} checks passed -> {path}")
    for name in failed:
        print(f"  FAILED: {name}")
    return EXIT_OK if not failed else EXIT_RUNTIME


# --------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML harness config")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--threads", type=int, help=f"worker threads (env {ENV_THREADS})")
    common.add_argument("--out", type=Path, help=f"output directory (env {ENV_OUT})")
    common.add_argument("--dry-run", action="store_true", help="validate the config and write headers only")
    common.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSVs")

    p = _Parser(prog="blochtomo", description="Tomography and purity estimation from randomly timed X/Y rotations.")
    p.add_argument("--version", action="version", version=f"blochtomo {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("genrho", parents=[common], help="generate the random density-matrix ensemble")
    sub.add_parser("tomo", parents=[common], help="tomography variance sweep")
    sub.add_parser("purity", parents=[common], help="purity estimator sweep")
    lim = sub.add_parser("limited", parents=[common], help="single-drive frequency analysis")
    lim_sub = lim.add_subparsers(dest="action", required=True, parser_class=_Parser)
    mt = lim_sub.add_parser("min-theta", parents=[common], help="smallest frequency combination vs N")
    mt.add_argument("--mode", choices=["ladder", "random"])
    mt.add_argument("--n-range", dest="n_range", help="qubit range a..b")
    mt.add_argument("--seeds", type=int, help="random frequency sets per N")
    mt.add_argument("--lam0", type=float)
    ins = sub.add_parser("inspect-inverse", parents=[common], help="print per-qubit inverse-map coefficients")
    ins.add_argument("--n", type=int, help="qubit count for config drives")
    ins.add_argument("--g", type=float)
    ins.add_argument("--nu", type=float)
    ins.add_argument("--phi", type=float, default=0.0)
    ins.add_argument("--t", type=float, help="also evaluate at this time")
    sub.add_parser("conformance", parents=[common], help="run all oracle cross-checks")
    return p


def _context(args) -> Context:
    cfg = HarnessConfig.load(args.config) if args.config else HarnessConfig.from_dict({})
    raw = cfg.to_dict()
    if args.seed is not None:
        raw["seed"] = args.seed
    if getattr(args, "command", None) == "limited":
        lim = raw["limited"]
        if args.mode:
            lim["mode"] = args.mode
        if args.n_range:
            lim["n_range"] = _parse_range(args.n_range)
        if args.seeds is not None:
            lim["seeds"] = args.seeds
        if args.lam0 is not None:
            lim["lam0"] = args.lam0
    cfg = HarnessConfig.from_dict(raw)
    out = args.out or (Path(os.environ[ENV_OUT]) if os.environ.get(ENV_OUT) else Path(cfg["output_dir"]))
    threads = args.threads
    if threads is None:
        env = os.environ.get(ENV_THREADS)
        try:
            threads = int(env) if env else 1
        except ValueError as exc:
            raise ValidationError(f"{ENV_THREADS} must be an integer") from exc
    if threads < 1:
        raise ValidationError("thread count must be at least 1")
    return Context(cfg, out, threads, args.dry_run, args.figures or cfg["figures"], args.command)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        ctx = _context(args)
        if args.command == "genrho":
            return cmd_genrho(ctx)
        if args.command == "tomo":
            return cmd_tomo(ctx)
        if args.command == "purity":
            return cmd_purity(ctx)
        if args.command == "limited":
            return cmd_limited(ctx, args)
        if args.command == "inspect-inverse":
            return cmd_inspect_inverse(ctx, args)
        if args.command == "conformance":
            return cmd_conformance(ctx)
    except ValidationError as exc:
        print(f"blochtomo: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BlochTomoError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"blochtomo: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    parser.error(f"unknown command {args.command}")
    return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

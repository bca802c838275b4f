"""Command-line interface.

Exit codes: 0 success (warnings allowed), 1 input or validation error,
2 numerical non-convergence.  Output goes to stdout as JSON (default) or CSV
and is byte-identical between runs on the same input unless ``--timing`` is
given.
"""

from __future__ import annotations

import argparse
import csv
import io as _stringio
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from nonext import entropy, infogeo, io, maxent
from nonext.operators import DomainError, ValidationError, trace_distance

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
MAX_GRID = 10_000


class UsageError(ValueError):
    pass


@dataclass
class RunReport:
    command: str
    settings: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    exit_code: int = EXIT_OK
    error: str | None = None
    timing: float | None = None

    @property
    def status(self) -> str:
        return "ok" if self.exit_code == EXIT_OK else "error"

    def to_dict(self) -> dict:
        out = {"command": self.command, "status": self.status, "exit_code": self.exit_code}
        if self.error is not None:
            out["error"] = self.error
        out["settings"] = self.settings
        out["warnings"] = self.warnings
        out["results"] = self.rows
        out.update(self.extra)
        if self.timing is not None:
            out["timing_seconds"] = self.timing
        return out

    def to_json(self) -> str:
        return io.dumps(self.to_dict()) + "\n"

    def to_csv(self) -> str:
        buf = _stringio.StringIO()
        buf.write(f"# command={self.command} status={self.status} exit_code={self.exit_code}\n")
        for k, v in self.settings.items():
            buf.write(f"# {k}={io.csv_cell(v)}\n")
        for w in self.warnings:
            buf.write(f"# warning: {w}\n")
        if self.error is not None:
            buf.write(f"# error: {self.error}\n")
        if self.timing is not None:
            buf.write(f"# timing_seconds={io.csv_cell(self.timing)}\n")
        if self.rows:
            writer = csv.writer(buf, lineterminator="\n")
            header = list(self.rows[0])
            writer.writerow(header)
            for row in self.rows:
                writer.writerow([io.csv_cell(row.get(k)) for k in header])
        return buf.getvalue()


# -- argument helpers ----------------------------------------------------------


def parse_grid(text: str) -> np.ndarray:
    """``a:b:n`` -> ``n`` evenly spaced points from ``a`` to ``b`` inclusive."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid {text!r} must look like a:b:n")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise UsageError(f"grid {text!r}: {exc}") from exc
    if not (math.isfinite(a) and math.isfinite(b)):
        raise UsageError(f"grid {text!r} has non-finite bounds")
    if not 1 <= n <= MAX_GRID:
        raise UsageError(f"grid {text!r}: number of points must be between 1 and {MAX_GRID}")
    grid = np.linspace(a, b, n)
    if n > 1 and not np.all(np.diff(grid) > 0):
        raise UsageError(f"grid {text!r} is not strictly increasing")
    return grid


def _grid_arg(single, text, name: str, default=None) -> np.ndarray:
    if single is not None and text is not None:
        raise UsageError(f"give either --{name} or --{name}-range, not both")
    if text is not None:
        return parse_grid(text)
    value = default if single is None else single
    if value is None:
        raise UsageError(f"--{name} or --{name}-range is required")
    if not math.isfinite(value):
        raise UsageError(f"--{name} must be finite")
    return np.array([float(value)])


def _solver_config(args) -> maxent.SolverConfig:
    return maxent.SolverConfig(tol=args.tol, max_iter=args.max_iter, damping=args.damping, init=args.init)


def _solver_settings(cfg: maxent.SolverConfig) -> dict:
    return {"tol": cfg.tol, "max_iter": cfg.max_iter, "damping": cfg.damping, "init": cfg.init}


def _index_warnings(idx: entropy.EntropicIndex) -> list[str]:
    if idx.near_one and idx.q != 1.0:
        return [f"q = {idx.q!r} is within {entropy.NEAR_ONE_TOL} of 1; near-one series branch used"]
    return []


def _worker_count() -> int:
    raw = os.environ.get("NONEXT_THREADS", "").strip()
    try:
        return max(0, int(raw)) if raw else 0
    except ValueError:
        return 0


def _ordered_map(fn, items):
    """Map preserving input order; fans out to threads if NONEXT_THREADS > 0."""
    n = _worker_count()
    if n <= 0:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# -- commands ------------------------------------------------------------------


def cmd_validate(args) -> RunReport:
    report = RunReport("validate", {"hermitian_tol": 1e-12, "eigen_clamp_tol": 1e-12, "trace_warn_tol": io.TRACE_WARN_TOL})
    A = io.matrix_from_json(io.load_json(args.matrix))
    dev = np.abs(A - A.conj().T)
    herm_dev = float(dev.max())
    Hpart = (A + A.conj().T) / 2
    min_eig = float(np.linalg.eigvalsh(Hpart).min())
    tr = float(np.trace(Hpart).real)
    row = {
        "dim": A.shape[0],
        "hermiticity_deviation": herm_dev,
        "min_eigenvalue": min_eig,
        "trace": tr,
        "trace_deviation": abs(tr - 1.0),
    }
    report.rows = [row]
    problems = []
    if herm_dev > 1e-12:
        bad = [[int(i), int(j)] for i, j in np.argwhere(dev > 1e-12) if i <= j]
        report.extra["offending_entries"] = bad
        problems.append("not Hermitian at entries " + ", ".join(f"({i}, {j})" for i, j in bad))
    if min_eig < -1e-12:
        problems.append(f"negative eigenvalue {min_eig:.3e}")
    if abs(tr - 1.0) > io.TRACE_WARN_TOL:
        problems.append(f"trace {tr!r} deviates from 1 by more than {io.TRACE_WARN_TOL}")
    elif abs(tr - 1.0) > 1e-12:
        report.warnings.append(f"trace deviates from 1 by {tr - 1.0:.3e}; would be renormalized on load")
    if problems:
        report.exit_code = EXIT_INPUT
        report.error = "; ".join(problems)
    return report


def cmd_entropy(args) -> RunReport:
    idx = entropy.EntropicIndex(args.q)
    rho, warnings = io.load_state(io.load_json(args.state))
    report = RunReport("entropy", {"q": idx.q}, warnings=warnings + _index_warnings(idx))
    report.rows = [
        {
            "q": idx.q,
            "von_neumann": entropy.von_neumann_entropy(rho),
            "tsallis_normalized": entropy.tsallis_entropy_normalized(rho, idx),
            "c_q": entropy.escort_normalization(rho, idx),
            "rank": rho.rank,
        }
    ]
    return report


def cmd_divergence(args) -> RunReport:
    idx = entropy.EntropicIndex(args.q)
    rho, w1 = io.load_state(io.load_json(args.state))
    sigma, w2 = io.load_state(io.load_json(args.reference))
    forward = entropy.q_kl_divergence(rho, sigma, idx)
    backward = entropy.q_kl_divergence(sigma, rho, idx)
    report = RunReport("divergence", {"q": idx.q}, warnings=w1 + w2 + _index_warnings(idx))
    report.rows = [
        {
            "q": idx.q,
            "forward": forward,
            "backward": backward,
            "symmetrized": forward + backward,
            "trace_distance": trace_distance(rho, sigma),
        }
    ]
    return report


def _equilibrium_row(eq: maxent.EquilibriumState) -> dict:
    return {
        "q": eq.q.q,
        "beta": eq.beta,
        "U_q": eq.U_q,
        "Z_q": eq.Z_q,
        "c_q": eq.c_q,
        "S_q": eq.entropy,
        "iterations": eq.iterations,
        "residual": eq.residual,
        "partition_identity_defect": eq.partition_identity_defect,
        "support_size": eq.support_size,
    }


def cmd_equilibrium(args) -> RunReport:
    idx = entropy.EntropicIndex(args.q)
    if not math.isfinite(args.beta):
        raise UsageError("--beta must be finite")
    cfg = _solver_config(args)
    H = io.load_hamiltonian(io.load_json(args.hamiltonian))
    report = RunReport("equilibrium", {"q": idx.q, "beta": args.beta, **_solver_settings(cfg)})
    report.warnings += _index_warnings(idx)
    try:
        eq = maxent.solve_equilibrium(H, args.beta, idx, cfg)
    except maxent.ConvergenceError as exc:
        report.exit_code = EXIT_NUMERIC
        report.error = str(exc)
        report.extra = {"last_residual": exc.residual, "last_iterate": io.matrix_to_json(exc.iterate)}
        return report
    except maxent.OverflowGuardError as exc:
        report.exit_code = EXIT_NUMERIC
        report.error = str(exc)
        return report
    report.warnings += list(eq.warnings)
    report.rows = [_equilibrium_row(eq)]
    report.extra = {"rho_eq": io.matrix_to_json(eq.rho_eq)}
    return report


def cmd_scan(args) -> RunReport:
    qs = _grid_arg(args.q, args.q_range, "q", default=1.0)
    betas = _grid_arg(args.beta, args.beta_range, "beta")
    for q in qs:
        entropy.EntropicIndex(q)
    cfg = _solver_config(args)
    H = io.load_hamiltonian(io.load_json(args.hamiltonian))
    cells = [(float(q), float(b)) for q in qs for b in betas]

    def run(cell):
        q, b = cell
        try:
            eq = maxent.solve_equilibrium(H, b, q, cfg)
        except maxent.ConvergenceError as exc:
            return cell, None, f"no_convergence (residual {exc.residual:.3e})"
        except maxent.OverflowGuardError:
            return cell, None, "overflow_guard"
        return cell, eq, "ok"

    report = RunReport(
        "scan",
        {"q_grid": args.q_range or repr(float(qs[0])), "beta_grid": args.beta_range or repr(float(betas[0])), **_solver_settings(cfg)},
    )
    failed = 0
    for (q, b), eq, status in _ordered_map(run, cells):
        row = {"q": q, "beta": b, "U_q": None, "Z_q": None, "c_q": None, "S_q": None, "iterations": None, "status": status}
        if eq is None:
            failed += 1
        else:
            row.update(U_q=eq.U_q, Z_q=eq.Z_q, c_q=eq.c_q, S_q=eq.entropy, iterations=eq.iterations)
        report.rows.append(row)
    near = sorted({q for q, _ in cells if entropy.EntropicIndex(q).near_one and q != 1.0})
    report.warnings += [w for q in near for w in _index_warnings(entropy.EntropicIndex(q))]
    if failed:
        report.warnings.append(f"{failed} of {len(cells)} cells failed")
    if failed == len(cells):
        report.exit_code = EXIT_NUMERIC
        report.error = "every scan cell failed"
    return report


def cmd_metric(args) -> RunReport:
    idx = entropy.EntropicIndex(args.q)
    curve = io.curve_from_json(io.load_json(args.curve))
    h = curve.h if args.h is None else args.h
    if not (math.isfinite(h) and h > 0):
        raise UsageError("--h must be a positive finite number")
    if curve.generator is None and abs(h - curve.h) > 1e-9 * curve.h:
        raise UsageError(f"--h {h!r} differs from the grid spacing {curve.h!r} of a sampled curve")
    try:
        ec = infogeo.build_eigencurve(curve, strict=args.strict_degeneracy)
    except infogeo.DegeneracyError as exc:
        raise ValidationError(str(exc)) from exc
    report = RunReport(
        "metric",
        {"q": idx.q, "family": curve.family or "sampled", "grid_h": curve.h, "oracle_h": h, "richardson": args.richardson},
    )
    report.warnings += _index_warnings(idx)

    def run(i):
        return infogeo.metric_sample(curve, ec, i, idx, h=h, richardson=args.richardson)

    for s in _ordered_map(run, range(1, len(curve) - 1)):
        flags = []
        if s.degenerate:
            flags.append("degenerate")
        if s.error:
            flags.append("singular")
        report.rows.append(
            {
                "alpha": s.alpha,
                "g_cl": s.g_cl,
                "g_qu": s.g_qu,
                "g_total": s.g_total,
                "oracle": s.oracle,
                "deviation": s.deviation,
                "flags": ";".join(flags),
            }
        )
        if s.error:
            report.warnings.append(f"alpha = {s.alpha!r}: {s.error}")
    if ec.ambiguous:
        report.warnings.append(f"ambiguous branch tracking at {len(ec.ambiguous)} grid point(s)")
    if ec.clusters:
        report.warnings.append(f"degenerate eigenvalues at {len(ec.clusters)} grid point(s)")
    return report


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonext", description="Nonextensive entropies, equilibria and metrics for density matrices.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--timing", action="store_true", help="add wall-clock time (output no longer reproducible)")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--tol", type=float, default=1e-10)
    solver.add_argument("--max-iter", type=int, default=10000)
    solver.add_argument("--damping", type=float, default=0.5)
    solver.add_argument("--init", choices=maxent.INIT_CHOICES, default="gibbs_q1")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a density-matrix file")
    p.add_argument("matrix")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("entropy", parents=[common], help="von Neumann and normalized Tsallis entropies")
    p.add_argument("state")
    p.add_argument("--q", type=float, default=1.0)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("divergence", parents=[common], help="q-divergence in both orders")
    p.add_argument("state")
    p.add_argument("reference")
    p.add_argument("--q", type=float, default=1.0)
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("equilibrium", parents=[common, solver], help="solve for the equilibrium state")
    p.add_argument("hamiltonian")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--q", type=float, default=1.0)
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("scan", parents=[common, solver], help="equilibria over a q x beta grid")
    p.add_argument("hamiltonian")
    p.add_argument("--q", type=float)
    p.add_argument("--q-range")
    p.add_argument("--beta", type=float)
    p.add_argument("--beta-range")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("metric", parents=[common], help="classical and quantum metric along a curve")
    p.add_argument("curve")
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--h", type=float, help="divergence step (default: grid spacing)")
    p.add_argument("--richardson", action="store_true")
    p.add_argument("--strict-degeneracy", action="store_true")
    p.set_defaults(func=cmd_metric)
    return parser


def run(argv=None) -> tuple[RunReport, str]:
    """Execute a command; returns the report and the requested output format."""
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        report = args.func(args)
    except (ValidationError, DomainError, UsageError, ValueError) as exc:
        report = RunReport(args.command, exit_code=EXIT_INPUT, error=str(exc))
    if args.timing:
        report.timing = time.perf_counter() - start
    return report, args.format


def main(argv=None) -> int:
    report, fmt = run(argv)
    sys.stdout.write(report.to_csv() if fmt == "csv" else report.to_json())
    if report.error:
        print(f"nonext {report.command}: {report.error}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())

"""Command line surface.

Exit codes: 0 success, 1 usage or validation error, 2 numerical
non-convergence, 3 internal error.  Output format is negotiated from the
--out extension (.csv or .json); without --out, CSV goes to stdout.
Randomized commands take --seed and default to a fixed documented constant,
so every run is reproducible.  Worker threads come from XXZ_TORUS_THREADS
(default: available parallelism).
"""
from __future__ import annotations

import argparse
import io
import json
import sys

import numpy as np

from . import experiments, integrability
from .bae import (
    IterationBudgetError,
    PoleProximityError,
    SingularJacobianError,
    bae_residual,
    energy_from_roots,
    root_set_to_csv,
    solve,
    solve_report_to_json,
)
from .exact_diag import (
    DEFAULT_SEED,
    DENSE_MAX_SITES,
    EigensolverError,
    MATRIX_FREE_MAX_SITES,
    build_hamiltonian,
    dense_spectrum,
    iterative_lowest,
    low_cluster,
    spectrum_to_csv,
)
from .model import (
    BRANCH_BOUNDARY,
    BRANCH_IMAGINARY_AXIS,
    ModelParams,
    excited_string_seed,
    ground_string_seed,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _params_or_usage(n, eta):
    try:
        return ModelParams(n, eta)
    except ValueError as exc:
        raise UsageError(str(exc))


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _wants_json(out):
    return bool(out) and out.lower().endswith(".json")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ed(args):
    params = _params_or_usage(args.n, args.eta)
    method = args.method
    if method == "dense" and params.n_sites > DENSE_MAX_SITES:
        raise UsageError(f"--method dense requires --n <= {DENSE_MAX_SITES}")
    if params.n_sites > MATRIX_FREE_MAX_SITES:
        raise UsageError(f"--n must be <= {MATRIX_FREE_MAX_SITES}")
    dim = 1 << params.n_sites
    if not (1 <= args.k <= dim):
        raise UsageError(f"--k must be in [1, {dim}]")
    if method == "dense":
        spectrum = dense_spectrum(params)
    else:
        spectrum = iterative_lowest(params, k=args.k, tol=args.tol,
                                    seed=args.seed)
    if _wants_json(args.out):
        doc = {
            "n_sites": params.n_sites,
            "eta": params.eta,
            "method": spectrum.method,
            "tolerance": spectrum.tolerance,
            "count": spectrum.count,
            "energies": [float(e) for e in spectrum.energies[: args.k]],
        }
        if spectrum.count >= 2 * params.n_sites + 2:
            try:
                c = low_cluster(spectrum, params)
                doc["low_cluster"] = {"size": c.size, "span": c.span,
                                      "gap_to_next": c.gap_to_next}
            except Exception:
                pass
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        buf = io.StringIO()
        spectrum_to_csv(spectrum, buf)
        _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_bae(args):
    params = _params_or_usage(args.n, args.eta)
    if args.state == "ground":
        seed_set = ground_string_seed(params, BRANCH_BOUNDARY,
                                      jitter=args.jitter,
                                      rng=np.random.default_rng(args.seed))
    elif args.state == "ground-alt":
        if params.n_sites % 2 == 0:
            raise UsageError("--state ground-alt requires odd --n")
        seed_set = ground_string_seed(params, BRANCH_IMAGINARY_AXIS,
                                      jitter=args.jitter,
                                      rng=np.random.default_rng(args.seed))
    elif args.state == "excited":
        if params.n_sites < 3:
            raise UsageError("--state excited requires --n >= 3")
        seed_set = excited_string_seed(params, jitter=args.jitter or 1e-3)
    else:
        raise UsageError(f"unknown --state {args.state}")
    try:
        report = solve(seed_set, tol=args.tol, max_iter=args.max_iter)
    except (SingularJacobianError, PoleProximityError, IterationBudgetError) as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    energy = energy_from_roots(report.root_set)
    report.config["energy"] = energy.value
    report.config["energy_imag_leakage"] = energy.imag_leakage
    if _wants_json(args.out):
        _emit(solve_report_to_json(report) + "\n", args.out)
    else:
        buf = io.StringIO()
        root_set_to_csv(report.root_set, buf)
        _emit(buf.getvalue(), args.out)
    if not report.converged:
        print(f"not converged: residual {report.final_residual:.3e} > "
              f"tol {args.tol:.1e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_tables(args):
    artifact = experiments.reproduce_table(args.id, seed=args.seed)
    if _wants_json(args.out):
        _emit(experiments.summary_json(artifact) + "\n", args.out)
    else:
        buf = io.StringIO()
        experiments.write_table_csv(artifact, buf)
        _emit(buf.getvalue(), args.out)
    failed = [r for r in artifact.rows if getattr(r, "error", "")]
    if failed:
        print(f"{len(failed)} cells failed", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_gap(args):
    if args.n_min < 2 or args.n_max < args.n_min:
        raise UsageError("need 2 <= --n-min <= --n-max")
    if args.n_max > MATRIX_FREE_MAX_SITES:
        raise UsageError(f"--n-max must be <= {MATRIX_FREE_MAX_SITES}")
    if args.eta <= 0:
        raise UsageError("--eta must be positive")
    rows = experiments.gap_series(args.eta, range(args.n_min, args.n_max + 1),
                                  seed=args.seed)
    if _wants_json(args.out):
        doc = [r.__dict__ for r in rows]
        _emit(json.dumps(doc, indent=2, default=float) + "\n", args.out)
    else:
        buf = io.StringIO()
        experiments.write_gap_csv(rows, buf)
        _emit(buf.getvalue(), args.out)
    if any(r.error for r in rows):
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_fit(args):
    points = _read_fit_input(args.input, args.x_col, args.y_col)
    try:
        result = experiments.fit_exponential(points, window=(args.n_min, args.n_max))
    except ValueError as exc:
        raise UsageError(str(exc))
    doc = {
        "amplitude": result.amplitude,
        "rate": result.rate,
        "window": list(result.window),
        "rms_log_residual": result.rms_log_residual,
    }
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def _read_fit_input(path, x_col, y_col):
    rows = []
    with open(path) as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if header is None:
                header = parts
                if x_col not in header or y_col not in header:
                    raise UsageError(
                        f"input must have columns {x_col!r} and {y_col!r}, "
                        f"found {header}")
                xi, yi = header.index(x_col), header.index(y_col)
                continue
            try:
                rows.append((int(parts[xi]), float(parts[yi])))
            except (ValueError, IndexError):
                continue
    if not rows:
        raise UsageError(f"no usable data rows in {path}")
    return rows


def cmd_verify_integrability(args):
    params = _params_or_usage(args.n, args.eta)
    if params.n_sites > integrability.MONODROMY_MAX_SITES:
        raise UsageError(
            f"--n must be <= {integrability.MONODROMY_MAX_SITES} for these checks")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    points = integrability.random_spectral_points(params.eta, 2 * args.trials,
                                                  seed=args.seed)
    reports = []
    for i in range(args.trials):
        u, v = points[2 * i], points[2 * i + 1]
        reports.append(integrability.verification_report(
            f"rtt[{u:.3f},{v:.3f}]", params,
            integrability.rtt_residual(params, u, v), 1e-10))
        reports.append(integrability.verification_report(
            f"transfer_commutator[{u:.3f},{v:.3f}]", params,
            integrability.transfer_commutator(params, u, v), 1e-10))
    reports.append(integrability.verification_report(
        "hamiltonian_identity", params,
        integrability.hamiltonian_identity_check(params), 1e-6))
    text = integrability.report_to_json(reports) + "\n"
    _emit(text, args.out)
    return EXIT_OK if all(r["pass"] for r in reports) else EXIT_NO_CONVERGENCE


def cmd_ising(args):
    params = _params_or_usage(args.n, 1.0)  # n validation only
    etas = [float(x) for x in args.eta_list.split(",") if x.strip()]
    if not etas or any(e <= 0 for e in etas):
        raise UsageError("--eta-list must be positive comma-separated values")
    rows = experiments.ising_limit_scan(params.n_sites, etas)
    if _wants_json(args.out):
        doc = [r.__dict__ for r in rows]
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        buf = io.StringIO()
        experiments.write_ising_csv(rows, params.n_sites, buf)
        _emit(buf.getvalue(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="xxz-torus",
                description="Twisted-boundary XXZ chain: spectra, Bethe roots, "
                            "and reproduction of the reference tables.")
    sub = p.add_subparsers(dest="command", required=True)

    ed = sub.add_parser("ed", help="diagonalize the twisted Hamiltonian")
    ed.add_argument("--n", type=int, required=True, help="site count N")
    ed.add_argument("--eta", type=float, required=True, help="anisotropy > 0")
    ed.add_argument("--k", type=int, default=1, help="eigenvalues to report")
    ed.add_argument("--method", choices=["dense", "iterative"], default="dense",
                    help="dense: full spectrum via parity sectors (N <= 14); "
                         "iterative: restarted Lanczos (N <= 26)")
    ed.add_argument("--tol", type=float, default=1e-9,
                    help="iterative relative residual tolerance")
    ed.add_argument("--seed", type=int, default=DEFAULT_SEED,
                    help="start-vector seed (default %(default)s)")
    ed.add_argument("--out", default="", help="output path (.csv or .json)")
    ed.set_defaults(func=cmd_ed)

    bae = sub.add_parser("bae", help="solve the Bethe equations from a string seed")
    bae.add_argument("--n", type=int, required=True)
    bae.add_argument("--eta", type=float, required=True)
    bae.add_argument("--state", choices=["ground", "ground-alt", "excited"],
                     default="ground")
    bae.add_argument("--tol", type=float, default=1e-12,
                     help="residual inf-norm tolerance (default %(default)s)")
    bae.add_argument("--jitter", type=float, default=0.0,
                     help="seed jitter magnitude (default 0; excited uses 1e-3)")
    bae.add_argument("--max-iter", type=int, default=200)
    bae.add_argument("--seed", type=int, default=DEFAULT_SEED,
                     help="jitter RNG seed (default %(default)s)")
    bae.add_argument("--out", default="", help="output path (.csv or .json)")
    bae.set_defaults(func=cmd_bae)

    tables = sub.add_parser("tables", help="reproduce a reference table")
    tables.add_argument("--id", type=int, required=True, choices=[1, 2, 3])
    tables.add_argument("--seed", type=int, default=DEFAULT_SEED)
    tables.add_argument("--out", default="",
                        help=".csv for rows, .json for the summary")
    tables.set_defaults(func=cmd_tables)

    gap = sub.add_parser("gap", help="gap above the low cluster vs closed form")
    gap.add_argument("--eta", type=float, required=True)
    gap.add_argument("--n-min", type=int, required=True)
    gap.add_argument("--n-max", type=int, required=True)
    gap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    gap.add_argument("--out", default="")
    gap.set_defaults(func=cmd_gap)

    fit = sub.add_parser("fit", help="exponential-decay fit of a CSV column")
    fit.add_argument("--input", required=True, help="CSV with the data")
    fit.add_argument("--n-min", type=int, required=True)
    fit.add_argument("--n-max", type=int, required=True)
    fit.add_argument("--x-col", default="n_sites")
    fit.add_argument("--y-col", default="delta")
    fit.add_argument("--out", default="")
    fit.set_defaults(func=cmd_fit)

    verify = sub.add_parser("verify-integrability",
                            help="RTT, commutator, and Hamiltonian-identity checks")
    verify.add_argument("--n", type=int, required=True)
    verify.add_argument("--eta", type=float, required=True)
    verify.add_argument("--trials", type=int, default=10)
    verify.add_argument("--seed", type=int, default=DEFAULT_SEED)
    verify.add_argument("--out", default="")
    verify.set_defaults(func=cmd_verify_integrability)

    ising = sub.add_parser("ising", help="large-anisotropy limit discrepancies")
    ising.add_argument("--n", type=int, required=True)
    ising.add_argument("--eta-list", required=True,
                       help="comma-separated anisotropies, e.g. 2,4,8")
    ising.add_argument("--out", default="")
    ising.set_defaults(func=cmd_ising)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EigensolverError as exc:
        print(f"eigensolver did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 success, 1 precondition or io error, 2 resource cap, 3 failed
certificate. Errors are printed to stderr as JSON with a ``category`` field.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import ledger as ledger_mod
from . import multivariate as mv
from . import params, phase, spectrum, univariate
from .errors import CertificateFailure, DistributionFormatError, GroverMeanError, PreconditionError
from .prob import FiniteDist, covariance, load_dist, to_angle
from .sim import LatticeSpec
from .trials import parallel_map, trial_seeds

CSV_SCHEMA = "grovermean-csv v1"
EXIT_CODES = {"precondition": 1, "io": 1, "cap": 2, "certificate": 3}
BENCH_FIXTURES = ("uni_a", "uni_b", "uni_c", "bench_2d", "bench_2d_small", "gauss_3d")
DEFAULT_BENCH = "uni_b"


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("grovermean") / "data" / f"{name}.json"))


def _dumps(obj: Any) -> str:
    return json.dumps(univariate._jsonable(obj), sort_keys=True, indent=2) + "\n"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]], comment: str = "") -> str:
    buf = io.StringIO()
    buf.write(f"# {CSV_SCHEMA}{'; ' + comment if comment else ''}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _emit(text: str, out: str | None, suffix: str | None = None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out) if suffix is None else Path(out).with_suffix(suffix)
    try:
        path.write_text(text)
    except OSError as exc:
        raise DistributionFormatError(f"cannot write {path}: {exc.strerror}") from exc


def _load(args) -> FiniteDist:
    if args.dist is None:
        raise PreconditionError("--dist is required")
    return load_dist(args.dist)


def _uni(dist: FiniteDist):
    if dist.dim != 1:
        raise PreconditionError(f"expected a one-dimensional distribution, got dim {dist.dim}")
    return dist.coordinate(0)


# Subcommands.
def cmd_spectrum(args) -> int:
    rv = _uni(_load(args))
    eps, s0 = args.eps, args.s0
    theta = to_angle(rv, params.key_lambda(s0), eps)
    op = spectrum.build_grover(theta)
    sols = spectrum.full_spectrum(theta)
    out: dict[str, Any] = {
        "solutions": [{"alpha": s.alpha, "overlap": s.overlap, "degenerate": s.degenerate,
                       "residual": spectrum.eigen_residual(op, s)} for s in sols]}
    cert, sol = spectrum.certify_key_property(rv, eps, s0)
    out["certificate"] = {"alpha": sol.alpha, "alpha_error": cert.alpha_error, "alpha_bound": cert.alpha_bound,
                          "overlap": cert.overlap, "overlap_bound": cert.overlap_bound,
                          "lambda": cert.lam, "passed": cert.passed}
    if args.N is not None:
        lhs, rhs = spectrum.state_distance_bound_check(rv, eps, s0, args.N)
        out["state_distance"] = {"N": args.N, "lhs": lhs, "rhs": rhs, "passed": lhs <= rhs}
    _emit(_dumps(out), args.out)
    if not cert.passed or not out.get("state_distance", {"passed": True})["passed"]:
        raise CertificateFailure("spectral certificate failed")
    return 0


def _table_rows(table: phase.PEOutcome) -> tuple[list[str], list[list[Any]]]:
    d = table.d
    header = [f"index_{a}" for a in range(d)] + [f"phase_{a}" for a in range(d)] + ["probability"]
    fr = table.fractions
    rows = [list(idx) + [float(fr[i]) for i in idx] + [float(p)]
            for idx, p in zip(np.ndindex(*table.table.shape), table.table.ravel())]
    return header, rows


def cmd_pe1d(args) -> int:
    rv = _uni(_load(args))
    theta = to_angle(rv, params.key_lambda(args.s0), args.eps)
    N = args.N or params.uni_resolution(args.eps)
    table = univariate.grover_pe_table(theta, N)
    header, rows = _table_rows(table)
    _emit(_csv_text(header, rows, f"pe1d N={N}"), args.out)
    return 0


def cmd_pemd(args) -> int:
    x = [float(v) for v in args.x.split(",")]
    lat = LatticeSpec(len(x), args.N)
    noise = None if not args.noise_eps else (args.noise_eps, args.noise_mode, args.seed)
    table = phase.multidim_phase_estimate(phase.exact_phase_family(x), lat, [1.0], noise=noise)
    header, rows = _table_rows(table)
    _emit(_csv_text(header, rows, f"pemd N={args.N} x={args.x}"), args.out)
    return 0


def _report_outputs(report: univariate.EstimateReport, args, extra: dict[str, Any]) -> None:
    body = {**report.to_json(), "config": extra}
    est = np.atleast_1d(report.estimate)
    header = ["algorithm"] + [f"estimate_{a}" for a in range(est.size)] + [
        "experiment_accesses", "pe_invocations", "classical_samples", "registers_peak", "seed"]
    row = [extra["algorithm"]] + [float(v) for v in est] + [
        report.cost.experiment_accesses, report.cost.pe_invocations, report.cost.classical_samples,
        report.cost.registers_peak, args.seed]
    _emit(_dumps(body), args.out)
    csv_text = _csv_text(header, [row], extra["algorithm"])
    if args.out is None:
        sys.stdout.write(csv_text)
    else:
        _emit(csv_text, args.out, ".csv")


def cmd_estimate(args) -> int:
    dist = _load(args)
    led = ledger_mod.CostLedger(args.grover_charge)
    if args.kind == "uni":
        rv = _uni(dist)
        mode = args.mode or "notso"
        if mode == "refine":
            rep = univariate.refine_uni(rv, args.eps, args.delta, seed=args.seed, ledger=led)
        elif mode == "constrained":
            rep = univariate.constrained_uni(rv, args.sigma0, args.eps, args.n, args.delta, seed=args.seed, ledger=led)
        elif mode == "notso":
            rep = univariate.notso_uni(rv, args.sigma0, args.n, args.delta, seed=args.seed, ledger=led)
        else:
            raise PreconditionError(f"unknown uni mode {mode!r}")
        extra = {"algorithm": f"{mode}_uni", "n": args.n, "delta": args.delta, "eps": args.eps,
                 "sigma0": args.sigma0}
    else:
        mode = args.mode or "ideal-phase"
        common = dict(inner=args.inner, seed=args.seed, ledger=led, D=args.D, mode=mode,
                      enforce_n_assumption=not args.skip_n_assumption)
        if args.sigma0 is None:
            rep = mv.full_estimator(dist, args.n, args.delta, C=args.C, **common)
            algorithm = "full_estimator"
        else:
            rep = mv.notso_multi(dist, args.n, args.sigma0, args.delta, **common)
            algorithm = "notso_multi"
        extra = {"algorithm": algorithm, "n": args.n, "delta": args.delta, "sigma0": args.sigma0,
                 "inner": args.inner, "D": args.D, "C": args.C, "mode": mode}
    _report_outputs(rep, args, extra)
    return 0


def _validation_suite() -> list[dict[str, Any]]:
    results = []

    def record(name: str, passed: bool, **info):
        results.append({"check": name, "passed": bool(passed), **info})

    for name in BENCH_FIXTURES:
        dist = load_dist(fixture_path(name))
        cov = covariance(dist)
        eig = np.linalg.eigvalsh(cov.matrix)
        record(f"{name}: covariance PSD", eig.min() >= -1e-10, min_eigenvalue=float(eig.min()))
        if dist.dim <= 2:
            tail = mv.variance_tail_check(dist, LatticeSpec(dist.dim, 8))
            record(f"{name}: variance tail gate", tail.passed, violations=tail.violations)
        if dist.dim == 1 and dist.size <= 64:
            theta = dist.coordinate(0).map(lambda v: 2.0 * np.arctan(0.5 * v))
            op = spectrum.build_grover(theta)
            sols = spectrum.full_spectrum(theta)
            worst = max(spectrum.eigen_residual(op, s) for s in sols)
            record(f"{name}: spectrum residual", worst <= 1e-9 and len(sols) == dist.size, worst_residual=worst)
    for n, delta in ((4, 0.1), (8, 0.05)):
        pred = ledger_mod.predict("notso_uni", sigma0=0.25, n=n, delta=delta)
        led = ledger_mod.CostLedger()
        rv = load_dist(fixture_path("uni_a")).coordinate(0)
        univariate.notso_uni(rv, 0.25, n, delta, seed=0, ledger=led)
        record(f"ledger notso_uni n={n}", pred.totals() == led.report().totals())
    return results


def cmd_validate(args) -> int:
    results = _validation_suite()
    ok = all(r["passed"] for r in results)
    _emit(_dumps({"passed": ok, "checks": results}), args.out)
    return 0 if ok else EXIT_CODES["certificate"]


def _parse_sweep(text: str) -> tuple[str, list[float]]:
    key, _, values = text.partition("=")
    if key.strip() != "n" or not values:
        raise PreconditionError(f"--sweep expects n=v1,v2,..., got {text!r}")
    try:
        return "n", [float(v) for v in values.split(",")]
    except ValueError:
        raise PreconditionError(f"--sweep values must be numbers, got {values!r}") from None


def bench_rows(dist: FiniteDist, ns: Sequence[float], delta: float, trials: int, seed: int, inner: str,
               D: float, C: float, mode: str, enforce_n_assumption: bool) -> list[list[Any]]:
    """One row per ``n``: mean l-inf error and access counts of :func:`full_estimator`.

    Measured and predicted calls are averaged over trials; each trial's
    prediction uses the scale and relative estimate realized in that trial.
    """
    trace = covariance(dist).trace
    mean = dist.mean()
    rows = []
    for n in ns:
        def run(s, n=n):
            led = ledger_mod.CostLedger()
            rep = mv.full_estimator(dist, n, delta, inner=inner, seed=s, ledger=led, D=D, C=C, mode=mode,
                                    enforce_n_assumption=enforce_n_assumption)
            det = rep.details
            pred = ledger_mod.predict("full_estimator", d=dist.dim, n=n, delta=delta, inner=inner, D=D, C=C,
                                      truncation_scale=det["truncation_scale"],
                                      stage1_estimate=det.get("stage1_estimate"),
                                      relative_estimate=det.get("relative_estimate"))
            return float(np.abs(rep.estimate - mean).max()), led.experiment_accesses, pred.experiment_accesses

        outcomes = parallel_map(run, trial_seeds([seed, int(n * 1000)], trials))
        error = float(np.mean([o[0] for o in outcomes]))
        measured = float(np.mean([o[1] for o in outcomes]))
        predicted = float(np.mean([o[2] for o in outcomes]))
        log_term = math.log(max(dist.dim, 2) / delta)
        rows.append([n, dist.dim, error, math.sqrt(trace) / n, measured, predicted,
                     measured / predicted if predicted else 1.0, measured / (n * log_term)])
    return rows


BENCH_HEADER = ["n", "d", "achieved_linf_error", "target", "measured_calls", "predicted_calls", "ratio",
                "calls_per_n_log"]


def cmd_bench(args) -> int:
    dist = load_dist(args.dist) if args.dist else load_dist(fixture_path(DEFAULT_BENCH))
    _, ns = _parse_sweep(args.sweep or "n=2,4,8")
    rows = bench_rows(dist, ns, args.delta, args.trials, args.seed, args.inner, args.D, args.C,
                      args.mode or "ideal-phase", not args.skip_n_assumption)
    comment = (f"bench full_estimator inner={args.inner} delta={args.delta} trials={args.trials} seed={args.seed} "
               f"n_assumption={'skipped' if args.skip_n_assumption else 'enforced'}")
    _emit(_csv_text(BENCH_HEADER, rows, comment), args.out)
    return 0


# Argument handling.
DEFAULTS = {"delta": 0.1, "eps": 1.0 / 12.0, "s0": 1.0 / 3.0, "n": 4.0, "seed": 0, "D": params.DEFAULT_D,
            "C": params.DEFAULT_C, "inner": "meticulous", "trials": 20, "kappa": 3, "noise_mode": "orthogonal-junk",
            "grover_charge": params.DEFAULT_GROVER_CHARGE}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of option values; explicit flags win")
    p.add_argument("--dist", help="distribution JSON file")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--s0", type=float)
    p.add_argument("--D", type=float)
    p.add_argument("--C", type=float)
    p.add_argument("--N", type=int)
    p.add_argument("--inner", choices=mv.INNER_ESTIMATORS)
    p.add_argument("--mode")
    p.add_argument("--trials", type=int)
    p.add_argument("--grover-charge", dest="grover_charge", type=int)
    p.add_argument("--skip-n-assumption", dest="skip_n_assumption", action="store_true", default=None,
                   help="do not enforce n >= ln(d/delta)/sqrt(ln d) for the meticulous estimator")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grovermean", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("spectrum", help="Grover spectrum and certificates for a 1-D distribution")
    _add_common(p)
    p.set_defaults(func=cmd_spectrum)
    p = sub.add_parser("pe1d", help="phase-estimation table (CSV) for the Grover operator of a 1-D distribution")
    _add_common(p)
    p.set_defaults(func=cmd_pe1d)
    p = sub.add_parser("pemd", help="lattice phase-estimation table (CSV) for an exact phase vector")
    _add_common(p)
    p.add_argument("--x", required=True, help="comma-separated phase vector")
    p.add_argument("--noise-eps", dest="noise_eps", type=float, default=0.0)
    p.add_argument("--noise-mode", dest="noise_mode", choices=phase.NOISE_MODES)
    p.set_defaults(func=cmd_pemd)
    p = sub.add_parser("estimate", help="run an estimator and emit its report")
    p.add_argument("kind", choices=("uni", "multi"))
    _add_common(p)
    p.set_defaults(func=cmd_estimate)
    p = sub.add_parser("validate", help="run the invariant suite on the bundled fixtures")
    _add_common(p)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("bench", help="sweep n and emit achieved error and access counts as CSV")
    _add_common(p)
    p.add_argument("--sweep", help="n=v1,v2,...")
    p.set_defaults(func=cmd_bench)
    return parser


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from ``--config`` then from built-in defaults."""
    config: dict[str, Any] = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise DistributionFormatError(f"cannot read {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise DistributionFormatError(f"{args.config}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(config, dict):
            raise DistributionFormatError(f"{args.config}: expected an object")
        unknown = sorted(set(config) - set(vars(args)))
        if unknown:
            raise DistributionFormatError(f"{args.config}: unknown option {unknown[0]!r}")
    for key in vars(args):
        if getattr(args, key) is None:
            if key in config:
                setattr(args, key, config[key])
            elif key in DEFAULTS:
                setattr(args, key, DEFAULTS[key])
    if args.skip_n_assumption is None:
        args.skip_n_assumption = False
    if args.delta is not None and not 0 < args.delta < 1:
        raise PreconditionError(f"--delta must lie in (0, 1), got {args.delta!r}")
    if args.n is not None and not args.n > 0:
        raise PreconditionError(f"--n must be positive, got {args.n!r}")
    if args.trials is not None and args.trials < 1:
        raise PreconditionError(f"--trials must be >= 1, got {args.trials!r}")
    return args


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(resolve(args))
    except GroverMeanError as exc:
        sys.stderr.write(json.dumps({"category": exc.category, "message": str(exc)}, sort_keys=True) + "\n")
        return EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``tailfuse combine | sweep | theory``.

Exit codes: 0 success, 2 validation error, 3 runtime or numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, ell_from_dict, load_run_config, with_signal
from .copulas import CopulaModelError, model_from_tau
from .distributions import DomainError
from .simlab import SimResult, calibrate_signal, iter_sweep
from .svg import line_chart
from .theory import (
    SpectralMeasure,
    SpectralMeasureError,
    bonferroni_ratio,
    convex_order_bivariate,
    cstar_eval,
    ell_eval,
    q_bound,
    q_gamma_spectral,
    validate_spectral,
)
from .transforms import (
    DegenerateThresholdError,
    TransformError,
    TransformSpec,
    bonferroni_pvalue,
    combined_pvalue,
    make_transform,
    reject,
)

log = logging.getLogger("tailfuse")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

CSV_HEADER = ("experiment", "copula", "param", "tau", "n", "transform", "gamma", "alpha", "reps",
              "rejections", "estimate", "ci_lo", "ci_hi", "bonf_rejections", "ratio", "seed")

TRUNCATION_MARKER = "#TRUNCATED"


class ValidationError(ValueError):
    pass


def fmt(x, digits: int = 10) -> str:
    """Locale-independent fixed significant-digit formatting; None is blank."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, f".{digits}g")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _transform_arg(text: str) -> TransformSpec:
    try:
        return TransformSpec.parse(text)
    except TransformError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def read_pvalues(stream) -> list[float]:
    """Parse whitespace/comma separated p-values; ``#`` starts a comment."""
    values = []
    for lineno, line in enumerate(stream, start=1):
        text = line.split("#", 1)[0]
        for tok in text.replace(",", " ").split():
            try:
                p = float(tok)
            except ValueError:
                raise ValidationError(f"line {lineno}: cannot parse {tok!r} as a number") from None
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"line {lineno}: p-value {tok} outside [0, 1]")
            values.append(p)
    if not values:
        raise ValidationError("no p-values given")
    return values


# ---------------------------------------------------------------------------
# combine
# ---------------------------------------------------------------------------

def cmd_combine(args) -> int:
    if args.input in (None, "-"):
        pvals = read_pvalues(sys.stdin)
    else:
        try:
            with open(args.input, encoding="utf-8") as fh:
                pvals = read_pvalues(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read {args.input}: {exc.strerror}") from None
    P = np.asarray(pvals)
    if args.weights is not None and len(args.weights) != P.size:
        raise ValidationError(f"{P.size} p-values but {len(args.weights)} weights")
    F = make_transform(args.transform)
    w = args.weights
    print(f"P_comb {fmt(combined_pvalue(F, P, w), 6)}")
    print(f"Bonferroni {fmt(bonferroni_pvalue(P, w), 6)}")
    if args.alpha is not None:
        decision = reject(F, P, w, args.alpha)
        print(f"decision {'reject' if decision else 'retain'} at alpha={fmt(args.alpha, 6)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def result_row(r: SimResult) -> list[str]:
    return [r.experiment, r.copula, fmt(r.param), fmt(r.tau), fmt(r.n), r.transform, fmt(r.gamma),
            fmt(r.alpha), fmt(r.reps), fmt(r.rejections), fmt(r.estimate), fmt(r.ci_lo), fmt(r.ci_hi),
            fmt(r.bonf_rejections), fmt(r.ratio), fmt(r.seed)]


def _calibrate(run: RunConfig) -> RunConfig:
    cal = run.calibration
    exp = run.experiment
    spec = cal.transform
    if spec is None:
        spec = next((t for t in exp.transforms if t.tail_index == 1.0), exp.transforms[0])
    alpha = cal.alpha if cal.alpha is not None else exp.alphas[0]
    model = model_from_tau(run.copula_family, cal.tau, exp.n, run.copula_nu)
    strength = calibrate_signal(run.alt_kind, model, spec, alpha, cal.target, layout=run.layout,
                                reps=cal.reps, seed=exp.seed, tol=cal.tol, beta_w=run.beta_w)
    name = "mu" if run.alt_kind == "A" else "beta_s"
    print(f"calibrated {name} = {fmt(strength, 9)} (target power {fmt(cal.target, 6)} "
          f"at tau={fmt(cal.tau, 6)} for {spec.label})", file=sys.stderr)
    return with_signal(run, strength)


def _write_svgs(run: RunConfig, rows: list[SimResult], mode: str) -> list[Path]:
    paths = []
    exp = run.experiment
    stem = run.csv_path.stem
    for alpha in exp.alphas:
        series: dict = {}
        for r in rows:
            if r.alpha != alpha or r.skipped:
                continue
            x = r.tau if r.tau is not None else r.param
            y = r.estimate if mode == "null" else r.ratio
            series.setdefault(f"{r.transform} gamma={r.gamma:g}", []).append((x, y))
        xlabel = "Kendall tau" if any(r.tau is not None for r in rows) else "copula parameter"
        ylabel = "scaled type-I error" if mode == "null" else "power ratio vs Bonferroni"
        hl = {"nominal": 1.0} if mode == "null" else {"equal power": 1.0}
        svg = line_chart(series, title=f"{exp.name}: n={exp.n}, alpha={alpha:g}",
                         xlabel=xlabel, ylabel=ylabel, hlines=hl)
        path = run.out_dir / f"{stem}_alpha{alpha:g}.svg"
        path.write_text(svg, encoding="utf-8", newline="\n")
        paths.append(path)
    return paths


def cmd_sweep(args) -> int:
    overrides = dict(out_dir=args.out, seed=args.seed, verbosity=args.verbose)
    if args.transform:
        overrides["transforms"] = args.transform
    if args.alpha:
        overrides["alphas"] = args.alpha
    if args.weights is not None:
        overrides["weights"] = args.weights
    if args.svg:
        overrides["svg"] = True
    run = load_run_config(args.config, **overrides)
    if args.mode == "power" and run.alt_kind == "null":
        raise ConfigError("alternative", "mode=power requires a Type-A or Type-B alternative")
    if args.mode == "null" and run.alt_kind != "null":
        raise ConfigError("alternative", "mode=null requires the null alternative")
    run.out_dir.mkdir(parents=True, exist_ok=True)
    if run.calibration is not None:
        run = _calibrate(run)

    rows: list[SimResult] = []
    with open(run.csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        fh.flush()
        try:
            for r in iter_sweep(run.experiment, args.mode):
                writer.writerow(result_row(r))
                fh.flush()
                rows.append(r)
        except KeyboardInterrupt:
            writer.writerow([TRUNCATION_MARKER] + [""] * (len(CSV_HEADER) - 1))
            fh.flush()
            print(f"interrupted: partial results in {run.csv_path}", file=sys.stderr)
            return EXIT_RUNTIME
    print(f"wrote {len(rows)} rows to {run.csv_path}", file=sys.stderr)
    if run.svg:
        for p in _write_svgs(run, rows, args.mode):
            print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# theory
# ---------------------------------------------------------------------------

def _load_json_arg(text: str, what: str):
    """Accept inline JSON or ``@path`` to a JSON file."""
    try:
        if text.startswith("@"):
            return json.loads(Path(text[1:]).read_text(encoding="utf-8"))
        return json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{what}: {exc}") from None


def _spectral(text: str, what: str) -> SpectralMeasure:
    d = _load_json_arg(text, what)
    try:
        H = SpectralMeasure.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{what}: expected {{\"atoms\": [...], \"masses\": [...]}} ({exc})") from None
    diag = validate_spectral(H)
    if not diag.passed:
        raise ValidationError(f"{what}: invalid spectral measure; {diag}")
    return H


def _ell(args):
    if args.spectral is not None:
        return ell_from_dict(_spectral(args.spectral, "--spectral").to_dict(), "--spectral")
    if args.family is None:
        raise ValidationError("give --family or --spectral")
    d = {"family": args.family, "n": args.n, "alpha": args.alpha, "theta": args.theta,
         "a": args.a, "b": args.b}
    need = {"independence": ["n"], "comonotone": ["n"], "logistic": ["n", "alpha"],
            "gumbel": ["theta"], "galambos": ["theta"]}[args.family]
    point = args.v if args.v is not None else args.u
    if args.n is None and point is not None:
        d["n"] = len(point)
    for k in need:
        if d[k] is None:
            raise ValidationError(f"{args.family} needs --{k}")
    return ell_from_dict({k: v for k, v in d.items() if v is not None}, "--family")


def cmd_theory(args) -> int:
    q = args.query
    if q == "q_bound":
        if args.weights is None and args.n is None:
            raise ValidationError("q_bound needs --n or --weights")
        value = q_bound(args.gamma, omega=args.weights, n=args.n)
    elif q == "q_spectral":
        H = _spectral(args.spectral, "--spectral")
        value = q_gamma_spectral(args.gamma, H, args.weights)
    elif q == "ell":
        value = ell_eval(_ell(args), args.v)
    elif q == "cstar":
        value = cstar_eval(_ell(args), args.u)
    elif q == "bonf_ratio":
        spec = _ell(args)
        value = bonferroni_ratio(spec, args.weights)
    elif q == "convex_order":
        H1 = _spectral(args.h1, "--h1")
        H2 = _spectral(args.h2, "--h2")
        print(convex_order_bivariate(H1, H2))
        return EXIT_OK
    else:  # pragma: no cover - argparse restricts choices
        raise ValidationError(f"unknown query {q}")
    print(fmt(value, 9))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tailfuse", description="Heavy-tailed p-value combination tests.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("combine", help="combine p-values read from a file or stdin")
    c.add_argument("input", nargs="?", help="file with p-values (default: stdin)")
    c.add_argument("--transform", type=_transform_arg, default=TransformSpec("pareto", gamma=1.0),
                   help="FAMILY:PARAMS, e.g. pareto:1 or truncated_t:0.6,0.001 (default pareto:1)")
    c.add_argument("--weights", type=_float_list)
    c.add_argument("--alpha", type=float)
    c.set_defaults(func=cmd_combine)

    s = sub.add_parser("sweep", help="run a Monte Carlo sweep from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--mode", choices=("null", "power"), default="null")
    s.add_argument("--out", default=".")
    s.add_argument("--svg", action="store_true")
    s.add_argument("--seed", type=int)
    s.add_argument("--transform", type=_transform_arg, action="append",
                   help="replace the config's transforms (repeatable)")
    s.add_argument("--alpha", type=float, action="append", help="replace the config's alphas (repeatable)")
    s.add_argument("--weights", type=_float_list)
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("theory", help="closed-form asymptotic quantities")
    t.add_argument("query", choices=("q_bound", "q_spectral", "ell", "bonf_ratio", "cstar", "convex_order"))
    t.add_argument("--gamma", type=float)
    t.add_argument("--n", type=int)
    t.add_argument("--weights", type=_float_list)
    t.add_argument("--family", choices=("independence", "comonotone", "logistic", "gumbel", "galambos"))
    t.add_argument("--alpha", type=float, help="logistic dependence parameter")
    t.add_argument("--theta", type=float)
    t.add_argument("--a", type=float)
    t.add_argument("--b", type=float)
    t.add_argument("--spectral", help="JSON {atoms, masses} or @file")
    t.add_argument("--v", type=_float_list)
    t.add_argument("--u", type=_float_list)
    t.add_argument("--h1")
    t.add_argument("--h2")
    t.set_defaults(func=cmd_theory)
    return p


def _check_theory_args(args) -> None:
    need = {"q_bound": ["gamma"], "q_spectral": ["gamma", "spectral"], "ell": ["v"], "cstar": ["u"],
            "convex_order": ["h1", "h2"], "bonf_ratio": []}[args.query]
    for k in need:
        if getattr(args, k) is None:
            raise ValidationError(f"{args.query} needs --{k}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "theory":
            _check_theory_args(args)
        return args.func(args)
    except (ValidationError, ConfigError, TransformError, SpectralMeasureError,
            DegenerateThresholdError, CopulaModelError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ArithmeticError, RuntimeError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command-line front end: model files in, CSV reports out.

Model files are JSON with fields `states` (a count or a list of labels),
`pi`, `kernels` (row-major matrices), `f`, optional `lambda_grid` and an
optional `simulation` block. All numeric CSV fields use 9 significant
digits and LF line endings, so identical inputs give byte-identical files.

Exit codes: 0 success, 1 validation failure, 2 assertion failure,
3 I/O or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scanvar.kernels import (
    Dist,
    Kernel,
    KernelFamily,
    NUMERIC_TOL,
    Observable,
    StateSpace,
    SummabilityError,
    ValidationError,
    family_diagnostics,
)
from scanvar.ordering import check_peskun_ordering, check_scan_ordering
from scanvar.simulate import estimate_variance
from scanvar.variance import (
    VarianceReport,
    finite_m_variance_exact,
    summability_check,
    var_lambda_rand,
    var_lambda_strat,
    var_lambda_strat_series,
    var_limit,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ASSERTION = 2
EXIT_IO = 3

COMPARE_HEADER = "lambda,var_strat,var_rand,gap,gap_lower_bound,method"
PESKUN_HEADER = "lambda,var_strat_a,var_strat_b,difference,dominates,method"
SIMULATE_HEADER = "scheme,steps,replicas,estimate,standard_error,exact_finite_m"

DEFAULT_GRID = (0.3, 0.6, 0.9, 0.99)

DEMO_MODEL = {
    "states": 2,
    "pi": [0.5, 0.5],
    "kernels": [
        [[0.9, 0.1], [0.1, 0.9]],
        [[0.6, 0.4], [0.4, 0.6]],
    ],
    "f": [1.0, -1.0],
    "lambda_grid": [0.3, 0.5, 0.9],
    "simulation": {"steps": 4096, "replicas": 200, "seed": 7, "scheme": "strat"},
}


class ModelFormatError(ValueError):
    """The model file cannot be parsed into the expected structure."""


@dataclass(frozen=True)
class Model:
    family: KernelFamily
    f: Observable
    lambda_grid: tuple[float, ...] | None
    simulation: dict | None


def _fmt(x) -> str:
    return format(float(x), ".9g")


def load_model(path: str) -> Model:
    """Parse and validate a JSON model file.

    Parse problems raise ModelFormatError with field context; structural
    problems raise ValidationError listing every violated invariant with
    its residual.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ModelFormatError(f"cannot read {path}: {err}") from err
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ModelFormatError(
            f"{path} is not valid JSON (line {err.lineno}, column {err.colno}): {err.msg}"
        ) from err
    if not isinstance(raw, dict):
        raise ModelFormatError(f"{path}: top level must be an object")
    for field in ("states", "pi", "kernels", "f"):
        if field not in raw:
            raise ModelFormatError(f"{path}: missing required field {field!r}")
    states = raw["states"]
    labels = None
    if isinstance(states, int):
        n = states
    elif isinstance(states, list) and all(isinstance(s, str) for s in states):
        n = len(states)
        labels = tuple(states)
    else:
        raise ModelFormatError(
            f"{path}: field 'states' must be a count or a list of labels"
        )
    try:
        pi = np.asarray(raw["pi"], dtype=float)
        f_values = np.asarray(raw["f"], dtype=float)
        kernels = [np.asarray(m, dtype=float) for m in raw["kernels"]]
    except (TypeError, ValueError) as err:
        raise ModelFormatError(f"{path}: non-numeric entries: {err}") from err

    problems: list[str] = []
    if pi.shape != (n,):
        problems.append(f"pi has shape {pi.shape}, expected ({n},)")
    if f_values.shape != (n,):
        problems.append(f"f has shape {f_values.shape}, expected ({n},)")
    if not kernels:
        problems.append("kernels list is empty")
    for i, m in enumerate(kernels):
        if m.shape != (n, n):
            problems.append(f"kernel {i + 1} has shape {m.shape}, expected ({n}, {n})")
    if not problems:
        diag = family_diagnostics(pi, kernels, tol=NUMERIC_TOL)
        problems.extend(diag.issues())
        for i, m in enumerate(kernels):
            row_dev = np.abs(m.sum(axis=1) - 1.0)
            worst = int(row_dev.argmax())
            if row_dev[worst] > 1e-12:
                problems.append(
                    f"kernel {i + 1} row {worst} sums to {m.sum(axis=1)[worst]:.10g} "
                    f"(residual {row_dev[worst]:.3g})"
                )
    if problems:
        raise ValidationError(
            f"{path} failed validation:\n  " + "\n  ".join(problems)
        )
    family = KernelFamily(
        StateSpace(n, labels), Dist(pi), tuple(Kernel(m) for m in kernels)
    )
    grid = raw.get("lambda_grid")
    if grid is not None:
        grid = tuple(float(x) for x in grid)
    sim = raw.get("simulation")
    if sim is not None and not isinstance(sim, dict):
        raise ModelFormatError(f"{path}: field 'simulation' must be an object")
    return Model(
        family=family, f=Observable(f_values), lambda_grid=grid, simulation=sim
    )


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(f"wrote {out}")


def _csv(header: str, rows: list[list[str]]) -> str:
    lines = [header] + [",".join(row) for row in rows]
    return "\n".join(lines) + "\n"


def _grid(args, model: Model) -> tuple[float, ...]:
    if args.lambdas:
        return tuple(float(x) for x in args.lambdas.split(","))
    if model.lambda_grid:
        return model.lambda_grid
    return DEFAULT_GRID


def _cmd_validate(args) -> int:
    model = load_model(args.model)
    diag = family_diagnostics(model.family.pi, model.family.kernels, tol=args.tol)
    print(f"states: {model.family.n}, kernels: {model.family.k}")
    for i in range(model.family.k):
        print(
            f"kernel {i + 1}: row-sum deviation {diag.row_sum_deviation[i]:.3g}, "
            f"balance residual {diag.balance_residual[i]:.3g} "
            f"(relative {diag.relative_balance_residual[i]:.3g})"
        )
    print(f"target sum deviation: {diag.pi_sum_deviation:.3g}, min weight: {diag.min_pi:.3g}")
    print(f"verdict at tol {args.tol:g}: {'pass' if diag.passes else 'fail'}")
    return EXIT_OK if diag.passes else EXIT_VALIDATION


def _compare_rows(model: Model, grid, method: str, series_terms: int, tol: float):
    fam, f = model.family, model.f
    rows: list[list[str]] = []
    failures: list[str] = []
    if fam.k == 2:
        reports = check_scan_ordering(
            fam, f, grid, method=method, series_terms=series_terms, tol=tol
        )
        for rep in reports:
            rows.append(
                [
                    _fmt(rep.lam),
                    _fmt(rep.var_strat),
                    _fmt(rep.var_rand),
                    _fmt(rep.gap),
                    _fmt(rep.gap_lower_bound),
                    rep.method,
                ]
            )
            if not rep.ordering_holds:
                failures.append(
                    f"scan-order comparison violated at lambda={rep.lam:g}: "
                    f"random-scan minus deterministic-scan gap {rep.gap:.3g} < -{tol:g}"
                )
            if not rep.bound_holds:
                failures.append(
                    f"gap lower bound violated at lambda={rep.lam:g}: "
                    f"gap {rep.gap:.3g} below its certified bound "
                    f"{rep.gap_lower_bound:.3g} beyond {tol:g}"
                )
    else:
        for lam in grid:
            lam = float(lam)
            if lam >= 1.0 - 1e-12:
                continue
            if method == "series":
                v_strat, trunc = var_lambda_strat_series(fam, f, lam, series_terms)
            else:
                v_strat = var_lambda_strat(fam, f, lam, method=method)
            v_rand = var_lambda_rand(fam, f, lam)
            rep = VarianceReport(
                lam=lam,
                var_strat=v_strat,
                var_rand=v_rand,
                gap=v_rand - v_strat,
                gap_lower_bound=float("nan"),
                method=method,
            )
            rows.append(
                [
                    _fmt(rep.lam),
                    _fmt(rep.var_strat),
                    _fmt(rep.var_rand),
                    _fmt(rep.gap),
                    _fmt(rep.gap_lower_bound),
                    rep.method,
                ]
            )
        if summability_check(fam).absolutely_summable:
            v_strat = var_limit(fam, f, "strat")
            v_rand = var_limit(fam, f, "rand")
            rows.append(
                [
                    _fmt(1.0),
                    _fmt(v_strat),
                    _fmt(v_rand),
                    _fmt(v_rand - v_strat),
                    _fmt(float("nan")),
                    "limit",
                ]
            )
    return rows, failures


def _cmd_compare(args) -> int:
    model = load_model(args.model)
    grid = _grid(args, model)
    rows, failures = _compare_rows(
        model, grid, args.method, args.series_terms, args.tol
    )
    _emit(_csv(COMPARE_HEADER, rows), args.out)
    for msg in failures:
        print(f"FAIL: {msg}", file=sys.stderr)
    return EXIT_ASSERTION if failures else EXIT_OK


def _cmd_peskun(args) -> int:
    if not args.model_b:
        raise ModelFormatError("peskun needs --model-b for the dominated family")
    model_a = load_model(args.model)
    model_b = load_model(args.model_b)
    grid = _grid(args, model_a)
    report = check_peskun_ordering(
        model_a.family, model_b.family, model_a.f, grid, tol=args.tol
    )
    dom = "true" if report.comparison.dominates else "false"
    rows = [
        [_fmt(r.lam), _fmt(r.var_strat_a), _fmt(r.var_strat_b), _fmt(r.difference), dom, r.method]
        for r in report.rows
    ]
    _emit(_csv(PESKUN_HEADER, rows), args.out)
    code = EXIT_OK
    if not report.comparison.dominates:
        print(
            "FAIL: kernelwise Dirichlet-form dominance does not hold "
            f"(smallest eigenvalue {report.comparison.min_dirichlet_gap_eigenvalue:.3g} "
            "below -1e-10); comparison reported outside the dominance hypothesis",
            file=sys.stderr,
        )
        code = EXIT_ASSERTION
    elif not report.all_hold:
        worst = min(r.difference for r in report.rows)
        print(
            "FAIL: dominated-family cycle variance dropped below the dominating "
            f"one (worst difference {worst:.3g})",
            file=sys.stderr,
        )
        code = EXIT_ASSERTION
    return code


def _cmd_limit(args) -> int:
    model = load_model(args.model)
    fam, f = model.family, model.f
    report = summability_check(fam)
    print(
        f"cycle contraction: {report.cycle_contraction:.9g} "
        f"({'summable' if report.absolutely_summable else 'not summable'})"
    )
    if not report.absolutely_summable:
        print(
            "FAIL: the covariance series is not absolutely summable, "
            "so the deterministic-scan limit is undefined",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    v_strat = var_limit(fam, f, "strat")
    v_rand = var_limit(fam, f, "rand")
    print(f"limit var_strat: {_fmt(v_strat)}")
    print(f"limit var_rand:  {_fmt(v_rand)}")
    if args.out:
        rows = [
            [
                _fmt(1.0),
                _fmt(v_strat),
                _fmt(v_rand),
                _fmt(v_rand - v_strat),
                _fmt(0.0 if fam.k == 2 else float("nan")),
                "limit",
            ]
        ]
        _emit(_csv(COMPARE_HEADER, rows), args.out)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    model = load_model(args.model)
    fam, f = model.family, model.f
    sim = dict(model.simulation or {})
    steps = args.steps or int(sim.get("steps", 4096))
    replicas = args.replicas or int(sim.get("replicas", 200))
    seed = args.seed if args.seed is not None else int(sim.get("seed", 0))
    schemes = [sim["scheme"]] if "scheme" in sim else ["strat", "rand"]
    rows = []
    for scheme in schemes:
        estimate = estimate_variance(fam, f, steps, replicas, seed, scheme)
        reference_scheme = "strat" if scheme == "embedded" else scheme
        exact = finite_m_variance_exact(fam, f, steps, reference_scheme)
        rows.append(
            [
                scheme,
                str(steps),
                str(replicas),
                _fmt(estimate.point),
                _fmt(estimate.standard_error),
                _fmt(exact),
            ]
        )
    _emit(_csv(SIMULATE_HEADER, rows), args.out)
    return EXIT_OK


def _cmd_demo(args) -> int:
    out_csv = args.out or "demo_compare.csv"
    model_path = str(Path(out_csv).parent / "demo_model.json")
    with open(model_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(DEMO_MODEL, fh, indent=2)
        fh.write("\n")
    print(f"wrote {model_path}")
    model = load_model(model_path)
    rows, failures = _compare_rows(
        model, model.lambda_grid or DEFAULT_GRID, args.method, args.series_terms, args.tol
    )
    _emit(_csv(COMPARE_HEADER, rows), out_csv)
    for msg in failures:
        print(f"FAIL: {msg}", file=sys.stderr)
    return EXIT_ASSERTION if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scanvar",
        description=(
            "Exact and empirical asymptotic-variance comparison of random-scan "
            "and deterministic-scan kernel orderings on finite state spaces."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "validate": "check a model file and report residuals",
        "compare": "sweep the discount grid and compare the two scan schemes",
        "peskun": "compare cycle variances of a dominating and a dominated family",
        "limit": "limiting variances plus the summability report",
        "simulate": "replicated empirical estimates next to exact references",
        "demo": "write the built-in two-state example and run compare on it",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        if name != "demo":
            p.add_argument("--model", required=True, help="path to a JSON model file")
        p.add_argument("--model-b", default=None, help="second model (peskun)")
        p.add_argument(
            "--lambda",
            dest="lambdas",
            default=None,
            help="comma-separated discount grid, overrides the model file",
        )
        p.add_argument(
            "--method",
            choices=("resolvent", "series"),
            default="resolvent",
            help="evaluation route for the cycle variance",
        )
        p.add_argument("--series-terms", type=int, default=400)
        p.add_argument("--tol", type=float, default=NUMERIC_TOL)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--replicas", type=int, default=None)
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.set_defaults(handler=globals()[f"_cmd_{name}"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ModelFormatError as err:
        print(f"parse error: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except SummabilityError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, np.linalg.LinAlgError) as err:
        print(f"assertion error: {err}", file=sys.stderr)
        return EXIT_ASSERTION


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: ``theory`` (closed-form curves and heatmaps), ``sweep`` (any
simulator sweep), ``simulate`` (direct MSE versus delta), ``anova``
(functional estimates versus delta), ``empirical`` (subsample/projection grid
on tabular data) and ``check`` (consistency suites).

Exit status: 0 on success, 1 when a check fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import checks, svg
from .empirical import PAPER_LAMBDA_GRID, load_and_prepare, n_sweep
from .io import write_matrix, write_table
from .linear import ModelParams, optimal_lambda, risk_decomposition, variance_components
from .nonlinear import ActivationSpec, nonlinear_risk, optimal_lambda_nl
from .rmt import DomainError
from .simulator import RECORD_COLUMNS, SimConfig, sweep, theory_values

DEFAULT_SEED = 20240101
OUTPUT_DIR_ENV = "RIDGE_ANOVA_OUTPUT_DIR"
EMPIRICAL_COLUMNS = RECORD_COLUMNS + ("n_s", "n_i", "dataset")
LINEAR_THEORY = ("mse", "bias2", "variance", "sigma_label", "sigma_sample", "sigma_init",
                 "v_s", "v_l", "v_i", "v_sl", "v_si", "v_li", "v_sli")
ANOVA_PLOT = ("v_s", "v_i", "v_sl", "v_si", "v_sli")


class UsageError(Exception):
    pass


# ----------------------------------------------------------------------------
# Argument types


def _pi(text: str) -> float:
    value = _float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError("pi must lie in (0,1]")
    return value


def _float(text) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text!r}")
    return value


def _positive(text) -> float:
    value = _float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def _nonnegative(text) -> float:
    value = _float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text!r}")
    return value


def _count(text) -> int:
    try:
        value = int(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _penalty(*words: str):
    def parse(text):
        if isinstance(text, str) and text.strip().lower() in words:
            return text.strip().lower()
        return _positive(text)

    parse.__name__ = "penalty"
    return parse


def parse_values(text: str, *, integer: bool = False, default_points: int = 20) -> list[float]:
    """``a,b,c`` lists or inclusive ``start:stop[:step]`` ranges."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(x) for x in text.split(":")]
            if len(parts) == 2:
                start, stop = parts
                step = (stop - start) / (default_points - 1) if stop > start else 1.0
                if integer:
                    step = max(1.0, math.floor(step))
            elif len(parts) == 3:
                start, stop, step = parts
            else:
                raise ValueError
            if step <= 0:
                raise ValueError
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [start + k * step for k in range(count)]
        else:
            values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse value list {text!r}") from None
    if integer:
        return sorted({int(round(v)) for v in values})
    return [round(v, 12) for v in values]


# ----------------------------------------------------------------------------
# Parser


def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("output")
    g.add_argument("--config", help="YAML file with flag defaults (flags override it)")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed (default %(default)s)")
    g.add_argument("--threads", type=_count, default=1, help="worker threads; results do not depend on it")
    g.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    g.add_argument("-o", "--output", help=f"output file (default: ${OUTPUT_DIR_ENV}/<command>.<ext> or stdout)")
    g.add_argument("--plot", help="write an SVG figure to this path")


def _model(parser: argparse.ArgumentParser, *, pi: float = 0.8, lam="0.01", lam_words=("optimal",)) -> None:
    g = parser.add_argument_group("model")
    g.add_argument("--alpha", type=_positive, default=1.0, help="signal scale alpha (alpha^2 = signal variance)")
    g.add_argument("--sigma", type=_nonnegative, default=0.3, help="label noise standard deviation")
    g.add_argument("--pi", type=_pi, default=pi, help="parametrization level p/d in (0,1]")
    g.add_argument("--delta", type=_positive, default=1.0, help="aspect ratio d/n")
    g.add_argument("--lambda", dest="lam", type=_penalty(*lam_words), default=lam,
                   help=f"ridge penalty or one of: {', '.join(lam_words)}")
    g.add_argument("--activation", default="identity", help="identity, crelu, tanh or linear:<k>")


def _simulation(parser: argparse.ArgumentParser, *, k_outer: int, runs: int) -> None:
    g = parser.add_argument_group("simulation")
    g.add_argument("--n", type=_count, default=150, help="training samples")
    g.add_argument("--k-outer", type=_count, default=k_outer, help="i.i.d. replicates per run")
    g.add_argument("--k-grid", type=_count, default=20, help="X and W draws crossed for the ANOVA terms")
    g.add_argument("--runs", type=_count, default=runs)
    g.add_argument("--data-law", default="gaussian", help="gaussian, rademacher, uniform or ar1:<r>")
    g.add_argument("--bias-correction", action="store_true",
                   help="use unbiased mean-squares versions of the nested estimators")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ridge-anova", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("theory", help="closed-form curves along one axis, or a heatmap over two")
    _common(p)
    _model(p)
    p.add_argument("--axis", choices=("delta", "pi", "lambda"), default="delta")
    p.add_argument("--from", dest="start", type=_float, default=0.25)
    p.add_argument("--to", dest="stop", type=_float, default=3.0)
    p.add_argument("--points", type=_count, default=120)
    p.add_argument("--stacked", action="store_true", help="plot cumulative variance components")
    p.add_argument("--heatmap-axis", choices=("delta", "pi", "lambda"), help="second axis: emit a heatmap")
    p.add_argument("--heatmap-from", type=_float, default=0.05)
    p.add_argument("--heatmap-to", type=_float, default=1.0)
    p.add_argument("--heatmap-points", type=_count, default=40)
    p.add_argument("--quantity", default="variance", help="heatmap quantity")

    p = sub.add_parser("sweep", help="simulator sweep along delta, pi or lambda")
    _common(p)
    _model(p)
    _simulation(p, k_outer=100, runs=5)
    p.add_argument("--axis", choices=("delta", "pi", "lambda"), default="delta")
    p.add_argument("--values", default="0.25:3:0.25", help="comma list or start:stop:step")
    p.add_argument("--estimator", choices=("functionals", "mse"), default="functionals")

    p = sub.add_parser("simulate", help="direct Monte Carlo MSE versus delta")
    _common(p)
    _model(p)
    _simulation(p, k_outer=400, runs=5)
    p.add_argument("--deltas", default="0.25:3:0.25")

    p = sub.add_parser("anova", help="estimated variance components versus delta")
    _common(p)
    _model(p)
    _simulation(p, k_outer=100, runs=5)
    p.add_argument("--deltas", default="0.25:3:0.25")

    p = sub.add_parser("empirical", help="subsample/projection grid on tabular data")
    _common(p)
    _model(p, pi=0.9, lam_words=("select",))
    p.add_argument("--data", default="synthetic", help="CSV path or 'synthetic'")
    p.add_argument("--response", default="-1", help="response column name or index (default last)")
    p.add_argument("--n-grid", default="10:200", help="subsample sizes, list or start:stop[:step]")
    p.add_argument("--n-s", type=_count, default=50, help="training subsamples")
    p.add_argument("--n-i", type=_count, default=50, help="projection draws")
    p.add_argument("--reps", type=_count, default=1)
    p.add_argument("--split", type=_float, default=0.9, help="training fraction")

    p = sub.add_parser("check", help="run consistency suites; JSON-lines report")
    _common(p)
    p.add_argument("suite", choices=checks.SUITES + ("all",))
    p.add_argument("--pi", type=_pi, default=0.8, help="parametrization level for the divergence suite")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    """Load ``--config`` and install its entries as defaults of the chosen subcommand."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    if not isinstance(data, dict):
        parser.error("config file must be a flat mapping of flag names to values")
    command = next((a for a in argv if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = subparsers.choices.get(command)
    if sub is None:
        return
    actions = {}
    for action in sub._actions:
        for opt in action.option_strings:
            actions[opt.lstrip("-").replace("-", "_")] = action
        actions.setdefault(action.dest, action)
    defaults = {}
    for key, value in data.items():
        name = str(key).lstrip("-").replace("-", "_")
        action = actions.get(name)
        if action is None or name == "config":
            sub.error(f"unknown config key {key!r}")
        if action.type is not None and value is not None and not isinstance(value, bool):
            try:
                value = action.type(str(value) if not isinstance(value, (int, float)) else value)
            except argparse.ArgumentTypeError as exc:
                sub.error(f"config key {key!r}: {exc}")
        defaults[action.dest] = value
    sub.set_defaults(**defaults)


# ----------------------------------------------------------------------------
# Helpers


@contextmanager
def _output(args, default_ext: str | None = None):
    ext = default_ext or args.format
    if args.output:
        path = Path(args.output)
    elif os.environ.get(OUTPUT_DIR_ENV):
        path = Path(os.environ[OUTPUT_DIR_ENV]) / f"{args.command}.{ext}"
    else:
        yield sys.stdout
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        yield fh


def _write_svg(path: str | None, text: str) -> None:
    if not path:
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def _grid(start: float, stop: float, points: int) -> np.ndarray:
    if points > 1 and not stop > start:
        raise UsageError("--to must exceed --from")
    # rounding keeps labels such as 0.6 free of linspace noise
    return np.round(np.linspace(start, stop, points), 12)


def _params(args, **overrides) -> ModelParams:
    base = dict(alpha2=args.alpha**2, sigma2=args.sigma**2, pi=args.pi, delta=args.delta, lam=None)
    base.update(overrides)
    return ModelParams(**base)


def _activation(args) -> ActivationSpec:
    try:
        return ActivationSpec.from_name(args.activation)
    except ValueError as exc:
        raise UsageError(f"--activation: {exc}") from None


def _resolve_lambda(args, params: ModelParams, activation: ActivationSpec) -> float:
    if args.lam != "optimal":
        return args.lam
    if activation.kind == "identity":
        return optimal_lambda(params)
    return optimal_lambda_nl(params, activation)


# ----------------------------------------------------------------------------
# Commands


def _theory_row(args, params: ModelParams, act: ActivationSpec) -> dict:
    lam = _resolve_lambda(args, params, act)
    p = params.with_lambda(lam)
    if act.kind == "identity":
        row = risk_decomposition(p).as_dict()
        row.update(variance_components(p).as_dict())
    else:
        row = nonlinear_risk(p, act).as_dict()
    row["lambda"] = lam
    return row


def cmd_theory(args) -> int:
    act = _activation(args)
    if args.axis == "lambda" and args.lam == "optimal":
        raise UsageError("--lambda optimal cannot be combined with --axis lambda")
    xs = _grid(args.start, args.stop, args.points)
    quantities = LINEAR_THEORY if act.kind == "identity" else ("mse", "bias2", "variance")

    def row_at(axis_values: dict) -> dict:
        lam_override = axis_values.pop("lambda", None)
        params = _params(args, **axis_values)
        if lam_override is not None:
            args_lam, args.lam = args.lam, lam_override
            try:
                return _theory_row(args, params, act)
            finally:
                args.lam = args_lam
        return _theory_row(args, params, act)

    if args.heatmap_axis:
        if args.heatmap_axis == args.axis:
            raise UsageError("--heatmap-axis must differ from --axis")
        if args.quantity not in quantities:
            raise UsageError(f"--quantity must be one of {', '.join(quantities)}")
        ys = _grid(args.heatmap_from, args.heatmap_to, args.heatmap_points)
        mat = np.array([[row_at({args.axis: float(x), args.heatmap_axis: float(y)})[args.quantity]
                         for y in ys] for x in xs])
        with _output(args, "csv") as fh:
            write_matrix(mat, xs, ys, fh, corner=f"{args.axis}\\{args.heatmap_axis}")
        _write_svg(args.plot, svg.heatmap(mat.T, ys, xs, title=args.quantity,
                                          row_label=args.heatmap_axis, col_label=args.axis))
        return 0

    rows = []
    for x in xs:
        row = row_at({args.axis: float(x)})
        row.update(axis=args.axis, value=float(x))
        rows.append(row)
    with _output(args) as fh:
        write_table(rows, ("axis", "value", "lambda") + quantities, fh, args.format)
    if args.plot:
        if args.stacked and act.kind == "identity":
            layers = {q: [r[q] for r in rows] for q in ("v_s", "v_i", "v_sl", "v_si", "v_sli")}
            layers["bias2"] = [r["bias2"] for r in rows]
            text = svg.stacked_area(xs, layers, title="cumulative risk components", xlabel=args.axis)
        else:
            shown = ("mse", "bias2", "variance")
            text = svg.line_plot([svg.Series(q, xs, [r[q] for r in rows]) for q in shown],
                                 title="risk", xlabel=args.axis)
        _write_svg(args.plot, text)
    return 0


def _sim_template(args, activation: ActivationSpec) -> SimConfig:
    lam = 0.01 if args.lam == "optimal" else args.lam
    return SimConfig.from_ratios(
        args.n, args.delta, args.pi, alpha2=args.alpha**2, sigma2=args.sigma**2, lam=lam,
        activation=activation, data_law=args.data_law, k_outer=args.k_outer, k_grid=args.k_grid,
        runs=args.runs, seed=args.seed, bias_correction=args.bias_correction,
    )


def _lambda_rule(args, activation: ActivationSpec):
    if args.lam != "optimal":
        return None

    def rule(cfg: SimConfig) -> float:
        params = ModelParams(cfg.alpha2, cfg.sigma2, cfg.pi_nominal or cfg.pi, cfg.delta_nominal or cfg.delta)
        return _resolve_lambda(args, params, activation)

    return rule


def _run_sweep(args, axis: str, values: list[float], estimator: str) -> list[dict]:
    act = _activation(args)
    if estimator == "functionals" and not act.is_linear:
        raise UsageError("variance components are only available for linear activations")
    if axis == "lambda" and args.lam == "optimal":
        raise UsageError("--lambda optimal cannot be combined with a lambda sweep")
    return sweep(_sim_template(args, act), axis, values, estimator=estimator,
                 threads=args.threads, lambda_rule=_lambda_rule(args, act))


def _theory_overlay(args, records: list[dict], quantities: Sequence[str], exclude_noise: bool):
    """Theory curve for each record's cell, evaluated at its realised ratios."""
    act = _activation(args)
    cache = {}
    for r in records:
        key = (r["value"], r["d"], r["p"], r["lambda"])
        if key not in cache:
            cfg = SimConfig(n=r["n"], d=r["d"], p=r["p"], alpha2=r["alpha2"], sigma2=r["sigma2"],
                            lam=r["lambda"], activation=act, data_law=args.data_law)
            cache[key] = theory_values(cfg, exclude_noise=exclude_noise)
    series = []
    for q in quantities:
        rows = [r for r in records if r["quantity"] == q]
        xs = [r["value"] for r in rows]
        series.append(svg.Series(q, xs, [r["estimate"] for r in rows], [r["std"] for r in rows], markers=True))
        theory = [cache[(r["value"], r["d"], r["p"], r["lambda"])].get(q, float("nan")) for r in rows]
        series.append(svg.Series(f"{q} (theory)", xs, theory, dashed=True))
    return series


def cmd_sweep(args) -> int:
    values = parse_values(args.values)
    records = _run_sweep(args, args.axis, values, args.estimator)
    with _output(args) as fh:
        write_table(records, RECORD_COLUMNS, fh, args.format)
    if args.plot:
        shown = ("mse",) if args.estimator == "mse" else ("bias2", "variance", "mse")
        series = [svg.Series(q, [r["value"] for r in records if r["quantity"] == q],
                             [r["estimate"] for r in records if r["quantity"] == q],
                             [r["std"] for r in records if r["quantity"] == q], markers=True) for q in shown]
        _write_svg(args.plot, svg.line_plot(series, title=f"{args.estimator} sweep", xlabel=args.axis))
    return 0


def cmd_simulate(args) -> int:
    records = _run_sweep(args, "delta", parse_values(args.deltas), "mse")
    with _output(args) as fh:
        write_table(records, RECORD_COLUMNS, fh, args.format)
    if args.plot:
        series = _theory_overlay(args, records, ("mse",), exclude_noise=True)
        _write_svg(args.plot, svg.line_plot(series, title="MSE (test noise excluded)", xlabel="delta"))
    return 0


def cmd_anova(args) -> int:
    records = _run_sweep(args, "delta", parse_values(args.deltas), "functionals")
    with _output(args) as fh:
        write_table(records, RECORD_COLUMNS, fh, args.format)
    if args.plot:
        series = _theory_overlay(args, records, ANOVA_PLOT, exclude_noise=False)
        _write_svg(args.plot, svg.line_plot(series, title="variance components", xlabel="delta"))
    return 0


def cmd_empirical(args) -> int:
    response: str | int = args.response
    try:
        response = int(args.response)
    except ValueError:
        pass
    try:
        train, test = load_and_prepare(args.data, args.split, args.seed, response=response)
    except (OSError, ValueError) as exc:
        raise UsageError(f"--data: {exc}") from None
    p = max(1, math.floor(train.dim * args.pi + 1e-9))
    n_values = parse_values(args.n_grid, integer=True)
    lam = "select" if args.lam == "select" else float(args.lam)
    rows = n_sweep(train, test, n_values, p, lam, n_s=args.n_s, n_i=args.n_i, reps=args.reps,
                   seed=args.seed, candidates=PAPER_LAMBDA_GRID, threads=args.threads)
    by_n: dict[int, list] = {}
    for row in rows:
        by_n.setdefault(row.n, []).append(row)
    records = []
    for n, group in by_n.items():
        for q in ("mse", "variance", "bias2", "v_s", "v_i", "rest"):
            vals = np.array([g.estimates.as_dict()[q] for g in group])
            records.append({
                "axis": "n", "value": float(n), "quantity": q, "estimate": float(vals.mean()),
                "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0, "runs": len(group),
                "n": n, "d": train.dim, "p": p, "lambda": float(np.mean([g.lam for g in group])),
                "alpha2": None, "sigma2": None, "activation": "identity", "data_law": "empirical",
                "seed": args.seed, "n_s": args.n_s, "n_i": args.n_i, "dataset": train.name,
            })
    with _output(args) as fh:
        write_table(records, EMPIRICAL_COLUMNS, fh, args.format)
    if args.plot:
        series = [svg.Series(q, [r["value"] for r in records if r["quantity"] == q],
                             [r["estimate"] for r in records if r["quantity"] == q])
                  for q in ("mse", "variance", "bias2", "v_s", "v_i", "rest")]
        _write_svg(args.plot, svg.line_plot(series, title=f"{train.name}: p={p}", xlabel="n"))
    return 0


def cmd_check(args) -> int:
    names = checks.SUITES if args.suite == "all" else (args.suite,)
    results = []
    for name in names:
        if name == "divergence":
            results += checks.suite_divergence(pi=args.pi)
        elif name in ("identities", "monotonicity", "reduction"):
            results += checks.SUITE_FUNCS[name](seed=args.seed if args.seed != DEFAULT_SEED else checks.DEFAULT_SEED)
    with _output(args, "jsonl") as fh:
        for r in results:
            fh.write(json.dumps({k: _plain(v) for k, v in r.as_dict().items()}) + "\n")
    return 0 if all(r.passed for r in results) else 1


def _plain(value):
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


COMMANDS = {
    "theory": cmd_theory,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "anova": cmd_anova,
    "empirical": cmd_empirical,
    "check": cmd_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DomainError) as exc:
        print(f"ridge-anova {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

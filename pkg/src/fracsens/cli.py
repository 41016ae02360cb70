"""Command-line front end.

Usage::

    fracsens {solve,sensitivity,convergence,estimate} --config run.json [--out DIR] [--threads N]

The configuration schema is documented in the README. Data files are CSV
with a header row and ``%.12e`` floats; progress goes to standard error.

Exit codes: 0 success, 2 configuration error, 3 solver error,
4 estimation did not converge.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, FracSensError, StallError
from .estimate import (
    ErrorType,
    EstimateOptions,
    ModelErrorSpec,
    SearchRegion,
    Status,
    estimate,
)
from .fields import (
    FabricatedField,
    custom_field,
    fbvp_truth,
    fivp_truth,
    fpde_case1,
    fpde_case2,
    fpde_estimation_truth,
)
from .model import ModelParams, ProblemKind, param_bounds
from .sensitivity import solve_forward, solve_sensitivities
from .solver import evaluate_grid, l2_error
from .specfun import BasisConfig

log = logging.getLogger("fracsens")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_NO_CONVERGENCE = 4

FLOAT_FORMAT = "%.12e"
CASES = ("fivp", "fbvp", "fpde-case1", "fpde-case2", "fpde-estimation", "custom", "zero")


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    basis: BasisConfig
    truth_case: str = "zero"
    custom_terms: tuple = ()
    method: str = "fast"
    samples: tuple = ()
    sensitivity_params: tuple | None = None
    resolutions: tuple = ()
    convergence_cases: tuple = ()
    error_type: ErrorType = ErrorType.TYPE_II
    active: tuple = ()
    bounds: tuple = ()
    initial: tuple | None = None
    region: tuple | None = None
    options: EstimateOptions = field(default_factory=EstimateOptions)

    @property
    def kind(self) -> ProblemKind:
        return self.params.kind


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigurationError(f"'{key}' must be an object")
    return value


def _tuple(value, name: str) -> tuple:
    if value is None:
        return ()
    if not isinstance(value, (list, tuple)):
        raise ConfigurationError(f"'{name}' must be a list")
    return tuple(value)


def parse_config(raw: dict) -> RunConfig:
    """Validate a decoded configuration object."""
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration must be an object")
    prob = dict(_section(raw, "problem"))
    known = {"kind", "alpha", "betas", "coeffs", "time_horizon", "space_bounds", "sides", "gamma"}
    extra = set(prob) - known
    if extra:
        raise ConfigurationError(f"unknown problem keys: {sorted(extra)}")
    try:
        params = ModelParams(**prob)
    except ValueError as exc:
        raise ConfigurationError(f"problem: {exc}") from None
    except TypeError as exc:
        raise ConfigurationError(f"problem: {exc}") from None

    b = _section(raw, "basis")
    try:
        basis = BasisConfig(
            n_temporal=int(b.get("n_temporal", 8 if params.kind.has_time else 1)),
            m_spatial=tuple(b.get("m_spatial", [8] * params.dims)),
            tau=b.get("tau"),
            quad_extra=int(b.get("quad_extra", 10)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"basis: {exc}") from None
    if len(basis.m_spatial) != params.dims:
        raise ConfigurationError("basis.m_spatial needs one entry per spatial dimension")

    truth = _section(raw, "truth")
    case = truth.get("case", "zero")
    if case not in CASES:
        raise ConfigurationError(f"unknown truth case {case!r}; choose from {list(CASES)}")
    _check_case_kind(case, params)
    terms = _tuple(truth.get("terms"), "truth.terms")
    if case == "custom" and not terms:
        raise ConfigurationError("custom truth needs 'terms'")

    solver = _section(raw, "solver")
    method = solver.get("method", "fast")
    if method not in ("fast", "direct"):
        raise ConfigurationError(f"unknown solver method {method!r}")

    out = _section(raw, "output")
    samples = tuple(int(s) for s in _tuple(out.get("samples"), "output.samples")) or (21,) * len(params.axes())
    if len(samples) != len(params.axes()) or any(s < 2 for s in samples):
        raise ConfigurationError("output.samples needs one count >= 2 per axis")

    sens = _section(raw, "sensitivity")
    sens_params = sens.get("params")
    if sens_params is not None:
        sens_params = tuple(sens_params)
        bad = set(sens_params) - set(params.param_names())
        if bad:
            raise ConfigurationError(f"sensitivity.params not in problem: {sorted(bad)}")

    conv = _section(raw, "convergence")
    resolutions = tuple(int(n) for n in _tuple(conv.get("resolutions"), "convergence.resolutions"))
    conv_cases = tuple(_tuple(conv.get("cases"), "convergence.cases"))
    for c in conv_cases:
        if c not in CASES:
            raise ConfigurationError(f"unknown convergence case {c!r}")
        _check_case_kind(c, params)

    est = _section(raw, "estimate")
    try:
        error_type = ErrorType(est.get("error_type", "type-ii"))
    except ValueError:
        raise ConfigurationError("estimate.error_type must be 'type-i' or 'type-ii'") from None
    active = tuple(est.get("active", ()))
    bad = set(active) - set(params.param_names())
    if bad:
        raise ConfigurationError(f"estimate.active not in problem: {sorted(bad)}")
    bounds = tuple(tuple(float(v) for v in pair) for pair in _tuple(est.get("bounds"), "estimate.bounds"))
    bounds = bounds or tuple(param_bounds(n) for n in active)
    initial = est.get("initial")
    initial = tuple(float(v) for v in initial) if initial is not None else None
    region = est.get("region")
    if region is not None:
        if not isinstance(region, dict) or "lo" not in region or "hi" not in region:
            raise ConfigurationError("estimate.region needs 'lo' and 'hi'")
        region = (tuple(region["lo"]), tuple(region["hi"]))
    if active:
        if initial is None and region is None:
            raise ConfigurationError("estimate needs 'initial' or 'region'")
        for vec in [initial] + (list(region) if region else []):
            if vec is not None and len(vec) != len(active):
                raise ConfigurationError("estimate vectors need one entry per active parameter")
        if initial is not None:
            for name, v, (lo, hi) in zip(active, initial, bounds):
                if not lo <= v <= hi:
                    raise ConfigurationError(f"initial {name}={v} outside [{lo}, {hi}]")
    try:
        options = EstimateOptions(
            tol=float(est.get("tol", 1e-6)),
            step_tol=float(est.get("step_tol", 1e-6)),
            max_iter=int(est.get("max_iter", 50)),
            rule=str(est.get("rule", "taylor")),
            levels=int(est.get("levels", 2)),
            min_diameter=float(est.get("min_diameter", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"estimate: {exc}") from None
    if options.rule not in ("taylor", "recurrence", "secant"):
        raise ConfigurationError(f"unknown step rule {options.rule!r}")
    if options.max_iter < 1 or options.levels < 1:
        raise ConfigurationError("estimate.max_iter and estimate.levels must be >= 1")

    return RunConfig(params, basis, case, terms, method, samples, sens_params, resolutions,
                     conv_cases, error_type, active, bounds, initial, region, options)


def _check_case_kind(case: str, params: ModelParams) -> None:
    wanted = {"fivp": ProblemKind.FIVP, "fbvp": ProblemKind.FBVP, "fpde-case1": ProblemKind.FPDE,
              "fpde-case2": ProblemKind.FPDE, "fpde-estimation": ProblemKind.FPDE}.get(case)
    if wanted is not None and params.kind is not wanted:
        raise ConfigurationError(f"truth case {case!r} needs problem kind {wanted.value!r}")
    if case.startswith("fpde") and params.dims != 1:
        raise ConfigurationError(f"truth case {case!r} is one-dimensional in space")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw)


def truth_field(cfg: RunConfig, case: str | None = None) -> FabricatedField | None:
    """Fabricated solution for a case; ``None`` for the zero-force case."""
    case = case or cfg.truth_case
    q = cfg.params
    if case == "zero":
        return None
    if case == "fivp":
        return fivp_truth(q.alpha)
    if case == "fbvp":
        return fbvp_truth(q.betas[0])
    if case == "fpde-case1":
        return fpde_case1()
    if case == "fpde-case2":
        return fpde_case2()
    if case == "fpde-estimation":
        return fpde_estimation_truth(q.alpha, q.betas[0])
    field_ = custom_field(cfg.custom_terms)
    if field_.naxes != len(q.axes()):
        raise ConfigurationError("custom terms need one exponent pair per axis")
    return field_


def _follows_params(field_: FabricatedField) -> bool:
    return any(g != 0.0 for t in field_.terms for _, g in t.exponents)


# ---------------------------------------------------------------------------
# output


def _fmt(v: float) -> str:
    return FLOAT_FORMAT % v


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _axis_names(params: ModelParams) -> list[str]:
    names = ["t"] if params.kind.has_time else []
    if params.dims == 1:
        return names + ["x"]
    return names + [f"x{j + 1}" for j in range(params.dims)]


def _uniform_points(cfg: RunConfig) -> list[np.ndarray]:
    return [np.linspace(lo, hi, n) for (lo, hi), n in zip(cfg.params.axes(), cfg.samples)]


def _grid_rows(points: list[np.ndarray], columns: list[np.ndarray]):
    for idx in itertools.product(*(range(len(p)) for p in points)):
        yield [float(points[a][i]) for a, i in enumerate(idx)] + [float(c[idx]) for c in columns]


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    field_ = truth_field(cfg)
    q = cfg.params
    forcing = field_.forcing(q) if field_ is not None else None
    coeffs = solve_forward(q, cfg.basis, forcing, cfg.method)
    points = _uniform_points(cfg)
    values = evaluate_grid(coeffs, cfg.basis, q, *points)
    write_csv(out / "solution.csv", _axis_names(q) + ["u_N"], _grid_rows(points, [values]))
    if field_ is not None:
        err = l2_error(coeffs, field_.as_separable(q), cfg.basis, q)
        log.info("L2 error %s", _fmt(err))
        print(f"L2 error: {_fmt(err)}")
    return EXIT_OK


def cmd_sensitivity(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    field_ = truth_field(cfg)
    q = cfg.params
    names = list(cfg.sensitivity_params or q.param_names())
    forcing = field_.forcing(q) if field_ is not None else None
    coeffs = solve_forward(q, cfg.basis, forcing, cfg.method)
    f_sens = {}
    if field_ is not None and _follows_params(field_):
        f_sens = {n: field_.forcing_derivative(q, n) for n in names}
    sens = solve_sensitivities(q, cfg.basis, coeffs, f_sens, names, cfg.method)
    points = _uniform_points(cfg)
    columns = [evaluate_grid(coeffs, cfg.basis, q, *points)]
    columns += [evaluate_grid(sens[n], cfg.basis, q, *points) for n in names]
    write_csv(out / "sensitivity.csv", _axis_names(q) + ["u_N"] + [f"S_{n}" for n in names],
              _grid_rows(points, columns))
    if field_ is not None and _follows_params(field_):
        for n in names:
            err = l2_error(sens[n], field_.param_derivative(q, n), cfg.basis, q)
            log.info("L2 error of S_%s %s", n, _fmt(err))
    return EXIT_OK


def _column_label(name: str, params: ModelParams) -> str:
    return name[:-2] if params.dims == 1 and name.endswith("_1") else name


def convergence_row(cfg: RunConfig, field_: FabricatedField, n: int, names: Sequence[str]) -> list:
    q = cfg.params
    basis = BasisConfig(n_temporal=n if q.kind.has_time else 1, m_spatial=(n,) * q.dims,
                        tau=cfg.basis.tau, quad_extra=cfg.basis.quad_extra)
    coeffs = solve_forward(q, basis, field_.forcing(q), cfg.method)
    row = [l2_error(coeffs, field_.as_separable(q), basis, q)]
    f_sens = {m: field_.forcing_derivative(q, m) for m in names}
    sens = solve_sensitivities(q, basis, coeffs, f_sens, names, cfg.method)
    row += [l2_error(sens[m], field_.param_derivative(q, m), basis, q) for m in names]
    log.info("N=%d err_u %s", n, _fmt(row[0]))
    return [n] + row


def cmd_convergence(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    if len(cfg.resolutions) < 2:
        raise ConfigurationError("convergence needs at least two resolutions")
    q = cfg.params
    names = [n for n in q.param_names() if not n.startswith("k_")]
    cases = cfg.convergence_cases or (cfg.truth_case,)
    for case in cases:
        field_ = truth_field(cfg, case)
        if field_ is None or not _follows_params(field_):
            raise ConfigurationError(f"convergence needs a parameter-dependent truth, not {case!r}")
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            rows = list(pool.map(lambda n: convergence_row(cfg, field_, n, names), cfg.resolutions))
        header = ["N", "err_u"] + [f"err_S_{_column_label(n, q)}" for n in names]
        name = "convergence.csv" if len(cases) == 1 else f"convergence_{case}.csv"
        write_csv(out / name, header, rows)
    return EXIT_OK


def cmd_estimate(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    if not cfg.active:
        raise ConfigurationError("estimate.active must name at least one parameter")
    field_ = truth_field(cfg)
    if field_ is None:
        raise ConfigurationError("estimation needs a truth case")
    truth = field_.frozen_at(cfg.params)
    spec = ModelErrorSpec(cfg.error_type, truth, truth.forcing(cfg.params), cfg.params,
                          cfg.active, cfg.bounds)
    region = SearchRegion(*cfg.region) if cfg.region else None
    options = EstimateOptions(**{**cfg.options.__dict__, "workers": max(1, threads)})
    trace = estimate(spec, cfg.initial, region, cfg.basis, options)
    header = ["iteration"] + list(cfg.active) + ["E", "grad_norm", "step", "clipped", "note"]
    rows = []
    for i, it in enumerate(trace.iterates):
        gnorm = float(np.linalg.norm(it.gradient)) if it.gradient is not None else float("nan")
        step = it.step if it.step is not None else float("nan")
        rows.append([i] + [float(v) for v in it.q] + [float(it.error), gnorm, float(step),
                                                      int(it.clipped), it.note])
    write_csv(out / "trace.csv", header, rows)
    if trace.region is not None:
        write_csv(out / "stage1.csv", list(cfg.active) + ["E"],
                  ([*k, v] for k, v in sorted(trace.region.corner_values.items())))
    print("iteration " + " ".join(f"{n:>12}" for n in cfg.active) + f" {'E':>14}")
    for i, it in enumerate(trace.iterates):
        print(f"{i:9d} " + " ".join(f"{v:12.6f}" for v in it.q) + f" {it.error:14.6e}")
    print("true      " + " ".join(f"{cfg.params.get(n):12.6f}" for n in cfg.active))
    print(f"status: {trace.status.value}")
    return EXIT_OK if trace.status is Status.CONVERGED else EXIT_NO_CONVERGENCE


COMMANDS = {
    "solve": cmd_solve,
    "sensitivity": cmd_sensitivity,
    "convergence": cmd_convergence,
    "estimate": cmd_estimate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracsens", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    parser.add_argument("--quiet", action="store_true", help="only log warnings")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        cfg = load_config(args.config)
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        return COMMANDS[args.command](cfg, Path(args.out), args.threads)
    except (ConfigurationError, DomainError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except StallError as exc:
        log.error("estimation stalled: %s", exc)
        return EXIT_NO_CONVERGENCE
    except FracSensError as exc:
        log.error("solver error: %s", exc)
        return EXIT_SOLVER
    except np.linalg.LinAlgError as exc:
        log.error("solver error: %s", exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

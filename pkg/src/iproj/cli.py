"""Command line driver: problem files in, CSV/JSON artifacts out.

Problem files are JSON documents validated against a closed schema
(unknown keys are rejected).  Constraint statistics come either from a
small closed vocabulary of named functions on the grid or from CSV
tables of midpoint values; densities are likewise tabulated at midpoints
and the driver applies the quadrature weights.  Two built-in documents,
``ex31`` and ``ex32``, reproduce the package's reference problems.

Exit codes: 0 converged, 2 cycle budget exhausted, 3 monitor cap abort,
4 input error, 5 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import jsonschema
import numpy as np

from .constraints import (
    FIXED_MARGINAL,
    MOMENT_EQUALITY,
    MOMENT_INEQUALITY,
    STOCHASTIC_ORDER_MARGINAL,
    Constraint,
    feasible,
    fixed_marginal,
    moment_equality,
    moment_inequality,
    stochastic_order_marginal,
)
from .engine import (
    TERMINATED_CAP_ABORT,
    TERMINATED_CONVERGED,
    TERMINATED_MAX_CYCLES,
    EngineOptions,
    Problem,
    Report,
    run,
)
from .errors import GridMismatchError, InputError, IprojError
from .measure import (
    DensityVector,
    DiscreteMeasure,
    GridSpec,
    from_density_values,
    kl_divergence,
    normalize,
    uniform_measure,
)

_MASS_SLACK = 1e-6

_EXIT_BY_TERMINATION = {
    TERMINATED_CONVERGED: 0,
    TERMINATED_MAX_CYCLES: 2,
    TERMINATED_CAP_ABORT: 3,
}

_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["grid", "base", "constraints"],
    "properties": {
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dim", "n", "domain"],
            "properties": {
                "dim": {"enum": [1, 2]},
                "n": {
                    "type": "array",
                    "minItems": 1,
                    "maxItems": 2,
                    "items": {"type": "integer", "minimum": 1},
                },
                "domain": {
                    "type": "array",
                    "minItems": 1,
                    "maxItems": 2,
                    "items": {
                        "type": "array",
                        "minItems": 2,
                        "maxItems": 2,
                        "items": {"type": "number"},
                    },
                },
            },
        },
        "base": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["uniform", "bilinear_xy", "table"]},
                "path": {"type": "string"},
            },
        },
        "constraints": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["kind"],
                "properties": {
                    "kind": {
                        "enum": [
                            MOMENT_INEQUALITY,
                            MOMENT_EQUALITY,
                            FIXED_MARGINAL,
                            STOCHASTIC_ORDER_MARGINAL,
                        ]
                    },
                    "function": {"type": "string"},
                    "table": {"type": "string"},
                    "threshold": {"type": "number"},
                    "axis": {"enum": ["x", "y"]},
                    "target": {"type": "string"},
                },
            },
        },
        "options": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["corrected", "naive"]},
                "max_cycles": {"type": "integer", "minimum": 1},
                "tol_tv": {"type": "number", "exclusiveMinimum": 0},
                "tol_feas": {"type": "number", "exclusiveMinimum": 0},
                "m1_cap": {"type": "number", "exclusiveMinimum": 0},
                "m2_cap": {"type": "number", "exclusiveMinimum": 0},
                "on_cap": {"enum": ["warn", "abort"]},
            },
        },
    },
}

_EXAMPLES = {
    "ex31": {
        "grid": {"dim": 1, "n": [4096], "domain": [[0.0, 1.0]]},
        "base": {"kind": "uniform"},
        "constraints": [
            {"kind": "moment_inequality", "function": "x", "threshold": 0.7},
            {"kind": "moment_inequality", "function": "x2", "threshold": 0.7},
        ],
        "options": {"mode": "corrected"},
    },
    "ex32": {
        "grid": {"dim": 2, "n": [256, 256], "domain": [[0.0, 1.0], [0.0, 1.0]]},
        "base": {"kind": "bilinear_xy"},
        "constraints": [
            {"kind": "moment_inequality", "function": "lnx", "threshold": -0.5},
            {"kind": "moment_inequality", "function": "x_plus_y", "threshold": 1.3},
        ],
        "options": {"mode": "corrected", "max_cycles": 6},
    },
}


def canonical_config(doc) -> str:
    """Serialize a problem document in the one normative form.

    Two-space indent, sorted keys, trailing newline; loading the output
    and serializing again reproduces it byte for byte.
    """
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def example_document(name: str) -> dict:
    try:
        return json.loads(canonical_config(_EXAMPLES[name]))
    except KeyError:
        raise InputError(f"unknown example {name!r}; choose ex31 or ex32") from None


def _fmt(v: float) -> str:
    return "%.17g" % v


def _json_num(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    return _fmt(v)


# ---------------------------------------------------------------------------
# document validation and loading


def _validate_document(doc) -> None:
    validator = jsonschema.Draft202012Validator(_SCHEMA)
    errors = list(validator.iter_errors(doc))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise InputError(f"{best.json_path}: {best.message}")
    grid = doc["grid"]
    if len(grid["n"]) != grid["dim"]:
        raise InputError("$.grid.n: length must equal grid.dim")
    if len(grid["domain"]) != grid["dim"]:
        raise InputError("$.grid.domain: length must equal grid.dim")
    for a, (lo, hi) in enumerate(grid["domain"]):
        if not lo < hi:
            raise InputError(f"$.grid.domain[{a}]: needs lo < hi")
    base = doc["base"]
    if base["kind"] == "table":
        if "path" not in base:
            raise InputError("$.base.path: required when base.kind is 'table'")
    elif "path" in base:
        raise InputError("$.base.path: only allowed when base.kind is 'table'")


def load_document(path: str) -> dict:
    """Read and validate a problem file; raises InputError on any defect."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise InputError(f"cannot read {path!r}: {e}") from None
    try:
        doc = json.loads(text)
    except ValueError as e:
        raise InputError(f"{path}: not valid JSON ({e})") from None
    _validate_document(doc)
    return doc


def _grid_from_document(doc) -> GridSpec:
    g = doc["grid"]
    return GridSpec(
        shape=tuple(g["n"]),
        domain=tuple((lo, hi) for lo, hi in g["domain"]),
    )


def _function_values(name: str, grid: GridSpec, where: str) -> np.ndarray:
    cols = grid.node_columns()
    x = cols[0]
    y = cols[1] if grid.dim == 2 else None
    if name in ("y", "y2", "lny", "x_plus_y", "xy") and y is None:
        raise InputError(f"{where}: function {name!r} needs a 2-d grid")
    if name == "x":
        return x.copy()
    if name == "y":
        return y.copy()
    if name == "x2":
        return x * x
    if name == "y2":
        return y * y
    if name == "lnx":
        if (x <= 0.0).any():
            raise InputError(f"{where}: 'lnx' needs every x node positive")
        return np.log(x)
    if name == "lny":
        if (y <= 0.0).any():
            raise InputError(f"{where}: 'lny' needs every y node positive")
        return np.log(y)
    if name == "x_plus_y":
        return x + y
    if name == "xy":
        return x * y
    raise InputError(f"{where}: unknown named function {name!r}")


def _read_csv_rows(path: str, header: list[str], where: str) -> np.ndarray:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise InputError(f"{where}: cannot read table {path!r}: {e}") from None
    if not rows or [c.strip() for c in rows[0]] != header:
        raise InputError(
            f"{where}: table {path!r} needs the header {','.join(header)!r}"
        )
    parsed: list[list[float]] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InputError(
                f"{where}: table {path!r} line {lineno} has {len(row)} fields,"
                f" expected {len(header)}"
            )
        try:
            parsed.append([float(c) for c in row])
        except ValueError:
            raise InputError(
                f"{where}: table {path!r} line {lineno}: non-numeric value"
            ) from None
    return np.asarray(parsed, dtype=np.float64).reshape(-1, len(header))


def _check_coords(data: np.ndarray, expected: np.ndarray, path: str, where: str) -> None:
    scale = np.maximum(1.0, np.abs(expected))
    bad = np.abs(data - expected) > 1e-9 * scale
    if bad.any():
        k = int(np.argmax(bad))
        raise InputError(
            f"{where}: table {path!r} row {k + 2}: coordinate {data[k]!r} does not"
            f" match the grid node {expected[k]!r} (rows must follow node order,"
            " x fastest)"
        )


def _load_values_1d(path: str, nodes: np.ndarray, where: str) -> np.ndarray:
    data = _read_csv_rows(path, ["x", "value"], where)
    if data.shape[0] != nodes.size:
        raise InputError(
            f"{where}: table {path!r} has {data.shape[0]} rows, grid needs {nodes.size}"
        )
    _check_coords(data[:, 0], nodes, path, where)
    return data[:, 1].copy()


def _load_values_2d(path: str, grid: GridSpec, where: str) -> np.ndarray:
    data = _read_csv_rows(path, ["x", "y", "value"], where)
    if data.shape[0] != grid.n_nodes:
        raise InputError(
            f"{where}: table {path!r} has {data.shape[0]} rows,"
            f" grid needs {grid.n_nodes}"
        )
    xs, ys = grid.node_columns()
    _check_coords(data[:, 0], xs, path, where)
    _check_coords(data[:, 1], ys, path, where)
    return data[:, 2].copy()


def _resolve(base_dir: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _density_table_measure(grid: GridSpec, values: np.ndarray, where: str) -> DiscreteMeasure:
    """Quadrature-weighted measure from density values, renormalized when
    the discretization drifts from unit mass by at most 1e-6."""
    m = from_density_values(grid, values)
    mass = m.total_mass
    if not math.isfinite(mass) or abs(mass - 1.0) > _MASS_SLACK:
        raise InputError(
            f"{where}: density integrates to {mass!r}, not 1 (tolerance {_MASS_SLACK:g})"
        )
    if mass != 1.0:
        m = normalize(m)[0]
    return m


def _base_measure(doc, grid: GridSpec, base_dir: str) -> DiscreteMeasure:
    spec = doc["base"]
    kind = spec["kind"]
    if kind == "uniform":
        return uniform_measure(grid)
    if kind == "bilinear_xy":
        if grid.dim != 2:
            raise InputError("$.base.kind: 'bilinear_xy' needs a 2-d grid")
        x, y = grid.node_columns()
        return from_density_values(grid, 0.8 * (1.0 + x * y))
    path = _resolve(base_dir, spec["path"])
    if grid.dim == 1:
        values = _load_values_1d(path, grid.axis_nodes("x"), "$.base.path")
    else:
        values = _load_values_2d(path, grid, "$.base.path")
    return _density_table_measure(grid, values, "$.base.path")


def _build_constraint(cdoc, grid: GridSpec, base_dir: str, where: str) -> Constraint:
    kind = cdoc["kind"]
    if kind in (MOMENT_INEQUALITY, MOMENT_EQUALITY):
        for key in ("axis", "target"):
            if key in cdoc:
                raise InputError(
                    f"{where}.{key}: not allowed on a moment constraint"
                )
        if "threshold" not in cdoc:
            raise InputError(f"{where}.threshold: required for moment constraints")
        has_fn = "function" in cdoc
        has_table = "table" in cdoc
        if has_fn == has_table:
            raise InputError(f"{where}: give exactly one of 'function' or 'table'")
        if has_fn:
            g = _function_values(cdoc["function"], grid, f"{where}.function")
        else:
            path = _resolve(base_dir, cdoc["table"])
            if grid.dim == 1:
                g = _load_values_1d(path, grid.axis_nodes("x"), f"{where}.table")
            else:
                g = _load_values_2d(path, grid, f"{where}.table")
        z = DensityVector(grid, g - float(cdoc["threshold"]))
        return moment_inequality(z) if kind == MOMENT_INEQUALITY else moment_equality(z)

    for key in ("function", "table", "threshold"):
        if key in cdoc:
            raise InputError(f"{where}.{key}: not allowed on a marginal constraint")
    for key in ("axis", "target"):
        if key not in cdoc:
            raise InputError(f"{where}.{key}: required for marginal constraints")
    axis = cdoc["axis"]
    try:
        axis_grid = grid.axis_grid(axis)
    except InputError as e:
        raise InputError(f"{where}.axis: {e}") from None
    path = _resolve(base_dir, cdoc["target"])
    values = _load_values_1d(path, axis_grid.axis_nodes("x"), f"{where}.target")
    target = _density_table_measure(axis_grid, values, f"{where}.target")
    if kind == FIXED_MARGINAL:
        return fixed_marginal(axis, target)
    return stochastic_order_marginal(axis, target)


def problem_from_document(doc, base_dir: str = ".") -> Problem:
    grid = _grid_from_document(doc)
    base = _base_measure(doc, grid, base_dir)
    constraints = tuple(
        _build_constraint(c, grid, base_dir, f"$.constraints[{k}]")
        for k, c in enumerate(doc["constraints"])
    )
    return Problem(base=base, constraints=constraints)


def options_from_document(doc, overrides: dict | None = None) -> EngineOptions:
    fields = dict(doc.get("options", {}))
    for key, value in (overrides or {}).items():
        if value is not None:
            fields[key] = value
    return EngineOptions(**fields)


def parse_problem(path: str) -> Problem:
    """Load a problem file into an executable Problem."""
    doc = load_document(path)
    return problem_from_document(doc, os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# emission


def _write_density(grid: GridSpec, base: DiscreteMeasure, solution: DiscreteMeasure,
                   path: str) -> None:
    q = base.weights
    p = solution.weights
    dpdq = np.zeros_like(p)
    np.divide(p, q, out=dpdq, where=q > 0.0)
    dpdl = p / grid.cell_volume
    cols = grid.node_columns()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if grid.dim == 1:
            fh.write("x,dP_dQ,dP_dLebesgue\n")
            for k in range(grid.n_nodes):
                fh.write(f"{_fmt(cols[0][k])},{_fmt(dpdq[k])},{_fmt(dpdl[k])}\n")
        else:
            fh.write("x,y,dP_dQ,dP_dLebesgue\n")
            for k in range(grid.n_nodes):
                fh.write(
                    f"{_fmt(cols[0][k])},{_fmt(cols[1][k])},"
                    f"{_fmt(dpdq[k])},{_fmt(dpdl[k])}\n"
                )


def _write_diag(report: Report, path: str) -> None:
    by_cycle = {c.cycle: c for c in report.cycles}
    t = len(report.problem.constraints)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("n,i,i_div,mass_S,b_integral,dual_total,tv_change\n")
        for r in report.steps:
            dual_total = tv_change = ""
            if r.index == t and r.cycle in by_cycle:
                cr = by_cycle[r.cycle]
                dual_total = _fmt(cr.dual_total)
                tv_change = _fmt(cr.tv_change)
            fh.write(
                f"{r.cycle},{r.index},{_fmt(r.divergence)},{_fmt(r.mass_s)},"
                f"{_fmt(r.b_integral)},{dual_total},{tv_change}\n"
            )


def _final_dual_total(report: Report) -> float:
    return report.cycles[-1].dual_total if report.cycles else 0.0


def _write_summary(solution: DiscreteMeasure, report: Report, path: str) -> None:
    violations = [
        feasible(c, solution, report.options.tol_feas)[1]
        for c in report.problem.constraints
    ]
    lines = [
        '  "cycles": %d' % len(report.cycles),
        '  "dual_total": %s' % _json_num(_final_dual_total(report)),
        '  "m1": %s' % _json_num(report.m1),
        '  "m2": %s' % _json_num(report.m2),
        '  "termination": %s' % json.dumps(report.termination),
        '  "violations": [%s]' % ", ".join(_json_num(v) for v in violations),
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("{\n" + ",\n".join(lines) + "\n}\n")


def emit(solution: DiscreteMeasure, report: Report, out_dir: str) -> None:
    """Write density.csv, diag.csv and summary.json into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    grid = report.problem.base.grid
    _write_density(grid, report.problem.base, solution, os.path.join(out_dir, "density.csv"))
    _write_diag(report, os.path.join(out_dir, "diag.csv"))
    _write_summary(solution, report, os.path.join(out_dir, "summary.json"))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_run(args) -> int:
    doc = load_document(args.file)
    base_dir = os.path.dirname(os.path.abspath(args.file))
    problem = problem_from_document(doc, base_dir)
    options = options_from_document(doc, {
        "mode": args.mode,
        "max_cycles": args.cycles,
        "tol_tv": args.tol_tv,
        "tol_feas": args.tol_feas,
    })
    solution, report = run(problem, options)
    for message in report.breaches:
        print(f"warning: {message}", file=sys.stderr)
    if args.out is not None:
        emit(solution, report, args.out)
    max_violation = max(
        (feasible(c, solution, options.tol_feas)[1] for c in problem.constraints),
        default=0.0,
    )
    print(
        f"{report.termination}: cycles={len(report.cycles)}"
        f" dual_total={_fmt(_final_dual_total(report))}"
        f" max_violation={_fmt(max_violation)}"
    )
    return _EXIT_BY_TERMINATION[report.termination]


def _cmd_example(args) -> int:
    text = canonical_config(_EXAMPLES[args.name])
    if args.emit_config is not None:
        with open(args.emit_config, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_oracle(args) -> int:
    from .oracle import SmallInstance, solve_with_certificate

    doc = load_document(args.file)
    base_dir = os.path.dirname(os.path.abspath(args.file))
    problem = problem_from_document(doc, base_dir)
    inst = SmallInstance(q=problem.base, constraints=problem.constraints)
    sol = solve_with_certificate(inst)
    divergence = kl_divergence(sol.measure, problem.base)
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        _write_density(problem.base.grid, problem.base, sol.measure,
                       os.path.join(args.out, "density.csv"))
    print(
        f"path={sol.path} kkt_residual={_fmt(sol.kkt_residual)}"
        f" divergence={_fmt(divergence)}"
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iproj",
        description="Divergence projection onto intersections of convex constraint sets.",
        epilog=(
            "Environment: IPROJ_KERNELS selects the kernel backend (auto, py, cy);"
            " IPROJ_THREADS caps inner reductions (0 = serial, the default and"
            " the reproducibility guarantee)."
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="{run,example}")

    p_run = sub.add_parser("run", help="solve a problem file")
    p_run.add_argument("file", help="problem JSON document")
    p_run.add_argument("--out", default=None, metavar="DIR",
                       help="write density.csv, diag.csv and summary.json here")
    p_run.add_argument("--mode", choices=["corrected", "naive"], default=None,
                       help="override the projection mode")
    p_run.add_argument("--cycles", type=int, default=None, metavar="N",
                       help="override the cycle budget")
    p_run.add_argument("--tol-tv", type=float, default=None, metavar="X",
                       dest="tol_tv", help="override the convergence tolerance")
    p_run.add_argument("--tol-feas", type=float, default=None, metavar="X",
                       dest="tol_feas", help="override the feasibility tolerance")
    p_run.set_defaults(func=_cmd_run)

    p_ex = sub.add_parser("example", help="print or save a built-in problem document")
    p_ex.add_argument("name", choices=sorted(_EXAMPLES))
    p_ex.add_argument("--emit-config", default=None, metavar="PATH",
                      dest="emit_config", help="write the document here instead of stdout")
    p_ex.set_defaults(func=_cmd_example)

    p_or = sub.add_parser("oracle")
    p_or.add_argument("file")
    p_or.add_argument("--out", default=None, metavar="DIR")
    p_or.set_defaults(func=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 4
    try:
        return args.func(args)
    except (InputError, GridMismatchError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (IprojError, OverflowError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands
-----------
solve
    Solve one configured system and write the trajectory as CSV.
verify
    Solve by both routes and report deviations, residuals and PASS/FAIL.
qtable
    Print the word-sum matrices Q(i, j) for a matrix pair.
figure
    Tabulate the scalar DPML function next to its one-matrix and pure-delay
    special cases; on divergent parameter sets the fixed partial sum is
    written together with a truncation caveat comment.

Exit codes: 0 success (verify: PASS), 1 verification failure, 2 schema or
usage violation (messages name the offending config field), 3 series
divergence (messages name the truncation policy).

File formats
------------
Configs and matrix files are JSON; matrices are 2-D row-major arrays.
CSV cells are written with ``repr`` so every float round-trips exactly,
and files are written atomically (temp file then rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .dpml import (
    CommutativityError,
    DivergenceError,
    DpmlFunction,
    DpmlParams,
    TruncationPolicy,
    WordSumTable,
    ml_eval,
    ml_partial_sum,
)
from .grid_calculus import GridSeries
from .solver import (
    DelaySystem,
    SingularityError,
    closed_form_solve,
    commutative_solve,
    delta_solve,
    step_solve,
    verify,
)

__all__ = ["ConfigError", "load_config", "parse_config", "main", "run"]


class ConfigError(ValueError):
    """Schema violation in a config or matrix file; names the field path."""

    def __init__(self, path: str, problem: str) -> None:
        self.path = path
        self.problem = problem
        super().__init__(f"{path}: {problem}" if path else problem)


def _require(doc: dict, key: str, path: str = ""):
    if key not in doc:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return doc[key]


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {type(value).__name__}")
    return value


def _as_vector(value, length: int, path: str) -> list[float]:
    if not isinstance(value, list) or len(value) != length:
        raise ConfigError(path, f"expected a list of {length} numbers")
    return [_as_number(x, f"{path}[{i}]") for i, x in enumerate(value)]


def _as_matrix(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a nonempty 2-D row-major array")
    width = None
    rows = []
    for i, row in enumerate(value):
        if not isinstance(row, list) or not row:
            raise ConfigError(f"{path}[{i}]", "expected a nonempty list of numbers")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ConfigError(f"{path}[{i}]", f"expected {width} entries, got {len(row)}")
        rows.append([_as_number(x, f"{path}[{i}][{j}]") for j, x in enumerate(row)])
    return np.array(rows)


def parse_config(doc) -> DelaySystem:
    """Build a :class:`DelaySystem` from a decoded config document.

    Raises :class:`ConfigError` naming the offending field path on any
    schema violation.
    """
    if not isinstance(doc, dict):
        raise ConfigError("", "config root must be a JSON object")
    alpha = _as_number(_require(doc, "alpha"), "alpha")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha", f"must lie in (0, 1), got {alpha}")
    delay = _as_int(_require(doc, "delay"), "delay")
    if delay < 1:
        raise ConfigError("delay", f"must be >= 1, got {delay}")
    horizon = _as_int(_require(doc, "horizon"), "horizon")
    if horizon < 1:
        raise ConfigError("horizon", f"must be >= 1, got {horizon}")
    M = _as_matrix(_require(doc, "M"), "M")
    if M.shape[0] != M.shape[1]:
        raise ConfigError("M", f"must be square, got shape {M.shape[0]}x{M.shape[1]}")
    N = _as_matrix(_require(doc, "N"), "N")
    if N.shape != M.shape:
        raise ConfigError(
            "N", f"shape {N.shape[0]}x{N.shape[1]} does not match M ({M.shape[0]}x{M.shape[0]})"
        )
    dim = M.shape[0]
    phi_doc = _require(doc, "phi")
    if not isinstance(phi_doc, list) or len(phi_doc) != delay:
        raise ConfigError(
            "phi", f"expected {delay} vectors ordered k = {1 - delay} .. 0"
        )
    phi = GridSeries(
        1 - delay, [_as_vector(v, dim, f"phi[{i}]") for i, v in enumerate(phi_doc)]
    )
    forcing = _parse_forcing(doc.get("forcing"), dim, horizon)
    policy = _parse_truncation(doc.get("truncation"))
    try:
        return DelaySystem(
            alpha=alpha, delay=delay, M=M, N=N, phi=phi,
            forcing=forcing, horizon=horizon, policy=policy,
        )
    except ValueError as exc:  # safety net; field checks above should catch first
        raise ConfigError("", str(exc)) from exc


def _parse_forcing(doc, dim: int, horizon: int) -> GridSeries | None:
    if doc is None:
        return None
    if not isinstance(doc, dict):
        raise ConfigError("forcing", "expected an object with a 'type' field")
    ftype = _require(doc, "type", "forcing")
    if ftype == "zero":
        return None
    if ftype == "constant":
        vec = _as_vector(_require(doc, "value", "forcing"), dim, "forcing.value")
        return GridSeries.constant(1, horizon, vec)
    if ftype == "table":
        values = _require(doc, "values", "forcing")
        if not isinstance(values, list) or len(values) != horizon:
            raise ConfigError(
                "forcing.values", f"expected {horizon} vectors ordered k = 1 .. {horizon}"
            )
        rows = [
            _as_vector(v, dim, f"forcing.values[{i}]") for i, v in enumerate(values)
        ]
        return GridSeries(1, rows)
    raise ConfigError("forcing.type", f"expected 'zero', 'constant' or 'table', got {ftype!r}")


def _parse_truncation(doc) -> TruncationPolicy:
    if doc is None:
        return TruncationPolicy()
    if not isinstance(doc, dict):
        raise ConfigError("truncation", "expected an object")
    kwargs = {}
    fields = {
        "tol": ("tol", _as_number),
        "window": ("window", _as_int),
        "i_max": ("i_max", _as_int),
        "divergence_growth": ("divergence_growth", _as_int),
    }
    for key, value in doc.items():
        if key not in fields:
            raise ConfigError(f"truncation.{key}", "unknown field")
        name, conv = fields[key]
        kwargs[name] = conv(value, f"truncation.{key}")
    try:
        return TruncationPolicy(**kwargs)
    except ValueError as exc:
        raise ConfigError("truncation", str(exc)) from exc


def load_config(path: str) -> DelaySystem:
    """Read and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    return parse_config(doc)


def _load_matrix_file(path: str) -> np.ndarray:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(path, f"cannot read matrix file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(path, f"invalid JSON: {exc}") from exc
    matrix = _as_matrix(doc, path)
    if matrix.shape[0] != matrix.shape[1]:
        raise ConfigError(path, f"must be square, got shape {matrix.shape[0]}x{matrix.shape[1]}")
    return matrix


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".nabladelay-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header: str, rows, comment: str | None = None) -> None:
    lines = []
    if comment is not None:
        lines.append(comment)
    lines.append(header)
    for row in rows:
        lines.append(",".join(repr(float(x)) if i else str(x) for i, x in enumerate(row)))
    _atomic_write(path, "\n".join(lines) + "\n")


def cmd_solve(args) -> int:
    system = load_config(args.config)
    methods = {
        "closed": closed_form_solve,
        "step": step_solve,
        "commutative": commutative_solve,
        "delta": delta_solve,
    }
    trace = methods[args.method](system)
    header = "k," + ",".join(f"z{i + 1}" for i in range(system.dim))
    rows = (
        (k, *trace.values.at(k))
        for k in trace.values.points()
    )
    _write_csv(args.out, header, rows)
    return 0


def cmd_verify(args) -> int:
    system = load_config(args.config)
    report = verify(system, tol=args.tol)
    if not report.closed_form_available:
        print(report.message, file=sys.stderr)
        print(f"oracle trace computed for k in [{1 - system.delay}, {system.horizon}]")
        print("FAIL")
        return 3
    print(
        f"max deviation between closed form and stepping oracle: "
        f"{report.max_deviation!r} at k = {report.worst_deviation_k}"
    )
    print(
        f"max defining-equation residual of closed form: "
        f"{report.max_residual!r} at k = {report.worst_residual_k}"
    )
    print(f"condition number of I - M: {report.condition:.6g}")
    print(f"tolerance: {args.tol!r}")
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def cmd_qtable(args) -> int:
    if not 1 <= args.imax <= 12:
        raise ConfigError("imax", f"must lie in [1, 12], got {args.imax}")
    M = _load_matrix_file(args.m)
    N = _load_matrix_file(args.n)
    if M.shape != N.shape:
        raise ConfigError(
            args.n,
            f"shape {N.shape[0]}x{N.shape[1]} does not match {args.m} "
            f"({M.shape[0]}x{M.shape[0]})",
        )
    table = WordSumTable(M, N)
    blocks = []
    for i in range(1, args.imax + 1):
        for j in range(i):
            entry = table.value(i, j)
            body = "\n".join(
                "  [" + ", ".join(repr(float(x)) for x in row) + "]" for row in entry
            )
            blocks.append(f"Q({i},{j}) =\n{body}")
    print("\n\n".join(blocks))
    return 0


def _figure_columns(alpha, beta, m, n, r, policy):
    full = DpmlFunction(DpmlParams(alpha, beta, r, [[m]], [[n]], policy))
    pure_delay = DpmlFunction(DpmlParams(alpha, beta, r, [[0.0]], [[n]], policy))

    def one_matrix(k: int) -> float:
        if k <= -r - 1:
            return 0.0
        if k == -r:
            return 1.0
        return float(ml_eval([[m]], alpha, beta - 1.0, k, -r, policy)[0, 0])

    return full, one_matrix, pure_delay


def cmd_figure(args) -> int:
    if args.delay < 1:
        raise ConfigError("delay", f"must be >= 1, got {args.delay}")
    if args.kmax < -args.delay:
        raise ConfigError("kmax", f"must be >= {-args.delay}, got {args.kmax}")
    if args.imax < 0:
        raise ConfigError("imax", f"must be >= 0, got {args.imax}")
    policy = TruncationPolicy()
    try:
        full, one_matrix, pure_delay = _figure_columns(
            args.alpha, args.beta, args.m, args.n, args.delay, policy
        )
    except ValueError as exc:
        raise ConfigError("alpha", str(exc)) from exc
    points = range(-args.delay, args.kmax + 1)
    comment = None
    try:
        rows = [
            (k, float(full.value(k)[0, 0]), one_matrix(k), float(pure_delay.value(k)[0, 0]))
            for k in points
        ]
    except DivergenceError:
        # Divergent parameter set: fall back to the fixed partial sum for
        # every column so the table remains well defined.
        comment = f"# truncated at i={args.imax}, convergence not guaranteed"

        def one_matrix_partial(k: int) -> float:
            if k <= -args.delay - 1:
                return 0.0
            if k == -args.delay:
                return 1.0
            return float(
                ml_partial_sum([[args.m]], args.alpha, args.beta - 1.0, k, -args.delay, args.imax)[0, 0]
            )

        rows = [
            (
                k,
                float(full.partial_sum(k, args.imax)[0, 0]),
                one_matrix_partial(k),
                float(pure_delay.partial_sum(k, args.imax)[0, 0]),
            )
            for k in points
        ]
    _write_csv(args.out, "k,D,E,F", rows, comment=comment)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nabladelay",
        description=(
            "Closed-form and stepping solvers for linear nabla fractional "
            "difference systems with one constant delay"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a configured system and write CSV")
    p_solve.add_argument("--config", required=True, help="JSON system config")
    p_solve.add_argument(
        "--method",
        choices=["closed", "step", "commutative", "delta"],
        default="closed",
        help="solution route (default: closed)",
    )
    p_solve.add_argument("--out", required=True, help="output CSV path")
    p_solve.set_defaults(func=cmd_solve)

    p_verify = sub.add_parser(
        "verify", help="cross-check closed form against the stepping oracle"
    )
    p_verify.add_argument("--config", required=True, help="JSON system config")
    p_verify.add_argument("--tol", type=float, default=1e-8, help="pass tolerance")
    p_verify.set_defaults(func=cmd_verify)

    p_qtable = sub.add_parser("qtable", help="print word-sum matrices Q(i, j)")
    p_qtable.add_argument("--m", required=True, help="JSON matrix file for M")
    p_qtable.add_argument("--n", required=True, help="JSON matrix file for N")
    p_qtable.add_argument("--imax", type=int, required=True, help="max word index (<= 12)")
    p_qtable.set_defaults(func=cmd_qtable)

    p_figure = sub.add_parser(
        "figure", help="tabulate the scalar DPML function and its special cases"
    )
    p_figure.add_argument("--alpha", type=float, required=True)
    p_figure.add_argument("--beta", type=float, required=True)
    p_figure.add_argument("--m", type=float, required=True, help="scalar coefficient M")
    p_figure.add_argument("--n", type=float, required=True, help="scalar coefficient N")
    p_figure.add_argument("--delay", type=int, required=True)
    p_figure.add_argument("--kmax", type=int, default=20)
    p_figure.add_argument("--imax", type=int, default=60, help="partial-sum order for divergent sets")
    p_figure.add_argument("--out", required=True, help="output CSV path")
    p_figure.set_defaults(func=cmd_figure)

    return parser


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CommutativityError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"series divergence: {exc}", file=sys.stderr)
        return 3
    except SingularityError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


def run() -> None:  # console-script shim
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

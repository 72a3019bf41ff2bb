"""Command-line front end.

Subcommands: enumerate, simulate, fit, select, predict, lq, scan.  All file
output is deterministic (floats printed with 17 significant digits, atomic
write-then-rename) so identical configurations produce byte-identical files.

Exit codes: 0 success, 2 usage, 3 data/validation error, 4 numerical
failure or divergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from .blockops import BlockMatrixG, lq_multi_lag, parameterize
from .errors import (
    DataError,
    LikelihoodDomainError,
    RankDeficiencyError,
    SingularMomentError,
    StructureError,
    VarstateError,
)
from .estimation import (
    FitOptions,
    FitResult,
    fit_from_moments,
    full_ols_fit,
    predict,
    scan_grid,
    select_structure,
)
from .likelihood import build_lag_data, moment_matrices
from .simulation import random_stable_model, simulate
from .structure import (
    StructureParams,
    centralizer_dim,
    enumerate_structures,
    param_reduction,
    structure_from_json,
    structure_to_json,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


# ---------------------------------------------------------------------------
# deterministic serialization

def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(float(x), ".17g")


def _to_json_text(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {_to_json_text(v, indent + 1)}'
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        inner = ", ".join(_to_json_text(v, indent) for v in obj)
        return "[" + inner + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def _matrix_json(M) -> dict:
    M = np.asarray(M, dtype=float)
    return {"shape": list(M.shape), "data": [float(v) for v in M.ravel()]}


def _matrix_from_json(obj) -> np.ndarray:
    return np.asarray(obj["data"], dtype=float).reshape(obj["shape"])


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-varstate-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str | None, obj) -> None:
    text = _to_json_text(obj) + "\n"
    if path:
        _atomic_write(path, text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [_fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row]
        )
    return buf.getvalue()


def _write_csv(path: str | None, header, rows) -> None:
    text = _csv_text(header, rows)
    if path:
        _atomic_write(path, text)
    else:
        sys.stdout.write(text)


def _print_matrix(name, M, decimals=6):
    print(f"{name} =")
    for row in np.atleast_2d(np.asarray(M, dtype=float)):
        print("  [" + ", ".join(f"{v: .{decimals}f}" for v in row) + "]")


# ---------------------------------------------------------------------------
# input parsing

def _load_json_arg(arg: str):
    text = arg.strip()
    if not text.startswith("{"):
        try:
            with open(arg) as fh:
                text = fh.read()
        except OSError as exc:
            raise DataError(f"cannot read {arg}: {exc}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON in {arg!r}: {exc}")


def _load_structure(arg: str) -> StructureParams:
    return structure_from_json(_load_json_arg(arg))


def _read_series_csv(path: str) -> tuple[list, np.ndarray]:
    """Read a series file (rows = time, header row required) as ``m x T``."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}")
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(
                    f"{path}:{lineno}: expected {width} columns, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=float).T


def _write_series_csv(path: str, names, series: np.ndarray) -> None:
    rows = [list(col) for col in np.asarray(series, dtype=float).T]
    _write_csv(path, names, rows)


def _load_xy(args) -> tuple[np.ndarray, np.ndarray]:
    _, Y_f = _read_series_csv(args.y)
    if getattr(args, "autoregressive", False):
        return Y_f, Y_f
    if not getattr(args, "x", None):
        raise DataError("provide --x FILE or --autoregressive")
    _, X_f = _read_series_csv(args.x)
    return X_f, Y_f


def _fit_options(args) -> FitOptions:
    return FitOptions(
        method=args.method,
        restarts=args.restarts,
        max_iters=args.max_iters,
        grad_tol=args.grad_tol,
        seed=args.seed,
    )


# ---------------------------------------------------------------------------
# result serialization

def _rank_report_json(rep) -> dict:
    return {
        "name": rep.name,
        "required": rep.required,
        "rank": rep.rank,
        "ok": rep.ok,
        "tol": rep.tol,
        "singular_values": list(rep.singular_values),
    }


def _fit_result_json(res: FitResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "structure": structure_to_json(res.structure),
        "G": _matrix_json(res.G.data),
        "H": _matrix_json(res.H),
        "F": _matrix_json(res.F),
        "Phi": [_matrix_json(P) for P in res.Phi],
        "Omega": _matrix_json(res.Omega),
        "neg_log_lik": res.neg_log_lik,
        "converged": res.converged,
        "diverged": res.diverged,
        "degenerate": res.degenerate,
        "iterations": res.iterations,
        "restarts_used": res.restarts_used,
        "minimality": {
            "G": _rank_report_json(res.minimality_G),
            "H": _rank_report_json(res.minimality_H),
        },
    }


def _selection_json(rep) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "criterion": rep.criterion,
        "T": rep.T,
        "full_ols_llk": rep.full_ols_llk,
        "rows": [
            {
                "structure": structure_to_json(r.structure),
                "dvec": list(r.structure.dvec),
                "n_min": r.n_min,
                "param_reduction": r.param_reduction,
                "neg_log_lik": r.neg_log_lik,
                "criterion_value": r.criterion_value,
                "converged": r.converged,
                "error": r.error,
            }
            for r in rep.rows
        ],
    }


# ---------------------------------------------------------------------------
# subcommands

def _cmd_enumerate(args) -> int:
    structures = enumerate_structures(args.h, args.p)
    with_red = args.k is not None and args.m is not None
    header = ["pairs", "dvec", "n_min", "rank_sum", "centralizer_dim"]
    if with_red:
        header.append("param_reduction")
    rows = []
    for st in structures:
        row = [
            ";".join(f"{r}:{l}" for r, l in st.pairs),
            " ".join(str(d) for d in st.dvec),
            st.n_min,
            st.lrank,
            centralizer_dim(st),
        ]
        if with_red:
            row.append(param_reduction(st, args.k, args.m))
        rows.append(row)
    if args.format == "json":
        payload = {
            "schema_version": SCHEMA_VERSION,
            "h": args.h,
            "p": args.p,
            "count": len(structures),
            "rows": [dict(zip(header, row)) for row in rows],
        }
        _write_json(args.output, payload)
    else:
        _write_csv(args.output, header, rows)
    return EXIT_OK


def _cmd_lq(args) -> int:
    obj = _load_json_arg(args.input)
    if "structure" not in obj or "data" not in obj:
        raise DataError("lq input JSON needs 'structure' and 'data' keys")
    st = structure_from_json(obj["structure"])
    data = obj["data"]
    G_arr = _matrix_from_json(data) if isinstance(data, dict) else np.asarray(data, dtype=float)
    G = BlockMatrixG(G_arr, st)
    S, Go = lq_multi_lag(G)
    Sm = S.realize()
    _print_matrix("G_o", Go.data)
    _print_matrix("S", Sm)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "structure": structure_to_json(st),
        "S": _matrix_json(Sm),
        "G_o": _matrix_json(Go.data),
    }
    if args.output:
        _write_json(args.output, payload)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    st = _load_structure(args.structure)
    model = random_stable_model(st, args.k, args.m, seed=args.seed)
    Y_f, X_f = simulate(
        model, args.T, seed=args.seed + 1, burn_in=args.burn_in, mode=args.mode
    )
    prefix = args.output or "simulated"
    _write_series_csv(prefix + "_y.csv", [f"y{i+1}" for i in range(model.k)], Y_f)
    _write_series_csv(prefix + "_x.csv", [f"x{i+1}" for i in range(model.m)], X_f)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "structure": structure_to_json(st),
        "H": _matrix_json(model.H),
        "F": _matrix_json(model.F),
        "G": _matrix_json(model.G.data),
        "Phi": [_matrix_json(P) for P in model.Phi],
        "Omega_gen": _matrix_json(model.Omega_gen),
        "seed": model.seed,
    }
    _write_json(prefix + "_model.json", payload)
    print(f"wrote {prefix}_y.csv, {prefix}_x.csv, {prefix}_model.json")
    return EXIT_OK


def _cmd_fit(args) -> int:
    X_f, Y_f = _load_xy(args)
    data = build_lag_data(X_f, Y_f, args.p)
    mom = moment_matrices(data)
    if args.full_ols:
        phis, omega, llk = full_ols_fit(mom)
        payload = {
            "schema_version": SCHEMA_VERSION,
            "full_ols": True,
            "Phi": [_matrix_json(P) for P in phis],
            "Omega": _matrix_json(omega),
            "neg_log_lik": llk,
        }
        if args.output:
            _write_json(args.output, payload)
        print(f"full OLS  neg_log_lik={_fmt_float(llk)}")
        return EXIT_OK
    if not args.structure:
        raise DataError("provide --structure or --full-ols")
    st = _load_structure(args.structure)
    st.validate_for(data.k, data.m)
    res = fit_from_moments(mom, st, _fit_options(args))
    if args.output:
        _write_json(args.output, _fit_result_json(res))
    print(f"structure       {structure_to_json(st)['pairs']}")
    print(f"n_min           {st.n_min}")
    print(f"neg_log_lik     {_fmt_float(res.neg_log_lik)}")
    print(f"converged       {res.converged}")
    print(f"iterations      {res.iterations} (restarts used: {res.restarts_used})")
    print(f"minimality G    rank {res.minimality_G.rank}/{res.minimality_G.required} ok={res.minimality_G.ok}")
    print(f"minimality H    rank {res.minimality_H.rank}/{res.minimality_H.required} ok={res.minimality_H.ok}")
    if res.diverged:
        print("fit diverged: objective decreases along an unbounded direction")
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_select(args) -> int:
    X_f, Y_f = _load_xy(args)
    data = build_lag_data(X_f, Y_f, args.p)
    structures = None
    if args.structures:
        structures = [structure_from_json(o) for o in _load_json_arg(args.structures)]
    rep = select_structure(
        moment_matrices(data),
        args.p,
        criterion=args.criterion,
        opts=_fit_options(args),
        structures=structures,
        threads=args.threads,
    )
    if args.format == "csv":
        header = ["dvec", "n_min", "param_reduction", "neg_log_lik", "criterion_value", "converged", "error"]
        rows = [
            [" ".join(map(str, r.structure.dvec)), r.n_min, r.param_reduction,
             r.neg_log_lik, r.criterion_value, r.converged, r.error or ""]
            for r in rep.rows
        ]
        _write_csv(args.output, header, rows)
    else:
        _write_json(args.output, _selection_json(rep))
    print(f"criterion={rep.criterion}  full_ols_llk={_fmt_float(rep.full_ols_llk)}")
    for r in rep.rows:
        print(
            f"  dvec={list(r.structure.dvec)} n_min={r.n_min} llk={_fmt_float(r.neg_log_lik)} "
            f"criterion={_fmt_float(r.criterion_value)} converged={r.converged}"
            + (f" error={r.error}" if r.error else "")
        )
    return EXIT_OK


def _cmd_predict(args) -> int:
    obj = _load_json_arg(args.model)
    if "Phi" not in obj:
        raise DataError("model JSON needs a 'Phi' list")
    phis = [_matrix_from_json(P) for P in obj["Phi"]]
    _, recent = _read_series_csv(args.recent)
    p = len(phis)
    k, m = phis[0].shape
    if recent.shape != (m, p):
        raise DataError(
            f"recent window must hold exactly p={p} samples of {m} series "
            f"(rows = time), got {recent.shape[1]} samples of {recent.shape[0]}"
        )

    class _Phis:
        Phi = phis

    forecast = predict(_Phis, recent, steps=args.steps, autoregressive=args.autoregressive)
    if args.output:
        _write_series_csv(args.output, [f"y{i+1}" for i in range(k)], forecast)
    for s in range(forecast.shape[1]):
        print("step", s + 1, " ".join(_fmt_float(v) for v in forecast[:, s]))
    return EXIT_OK


def _cmd_scan(args) -> int:
    X_f, Y_f = _load_xy(args)
    data = build_lag_data(X_f, Y_f, args.p)
    st = _load_structure(args.structure)
    result = scan_grid(
        moment_matrices(data),
        st,
        t_points=args.t_points,
        c_points=args.c_points,
        c_max=args.c_max,
    )
    header = list(result.columns) + ["neg_log_lik"]
    rows = [list(pt) + [val] for pt, val in zip(result.points, result.values)]
    _write_csv(args.output, header, rows)
    argmin = " ".join(f"{c}={_fmt_float(v)}" for c, v in zip(result.columns, result.argmin))
    print(f"scan minimum {_fmt_float(result.min_value)} at {argmin}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    parser.add_argument("--threads", type=int, default=1, help="worker threads")
    parser.add_argument("--output", help="output file path")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_fit_opts(parser):
    parser.add_argument("--method", choices=("newton", "gradient", "grid-scan"), default="newton")
    parser.add_argument("--restarts", type=int, default=5)
    parser.add_argument("--max-iters", type=int, default=500, dest="max_iters")
    parser.add_argument("--grad-tol", type=float, default=1e-8, dest="grad_tol")


def _add_data_opts(parser):
    parser.add_argument("--y", required=True, help="response CSV (rows = time)")
    parser.add_argument("--x", help="regressor CSV (rows = time)")
    parser.add_argument(
        "--autoregressive", action="store_true", help="use the responses as regressors"
    )
    parser.add_argument("--p", type=int, required=True, help="lag order")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varstate",
        description="Reduced-structure VARX estimation via nilpotent-Jordan state-space realizations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_enum = sub.add_parser("enumerate", help="list all structures for (h, p)")
    p_enum.add_argument("--h", type=int, required=True)
    p_enum.add_argument("--p", type=int, required=True)
    p_enum.add_argument("--k", type=int)
    p_enum.add_argument("--m", type=int)
    _add_common(p_enum)
    p_enum.set_defaults(func=_cmd_enumerate)

    p_lq = sub.add_parser("lq", help="generalized LQ normalization of a G matrix")
    p_lq.add_argument("--input", required=True, help="JSON with 'structure' and 'data'")
    _add_common(p_lq)
    p_lq.set_defaults(func=_cmd_lq)

    p_sim = sub.add_parser("simulate", help="draw a stable model and simulate a path")
    p_sim.add_argument("--structure", required=True, help="structure JSON or file")
    p_sim.add_argument("--k", type=int, required=True)
    p_sim.add_argument("--m", type=int, required=True)
    p_sim.add_argument("--T", type=int, required=True)
    p_sim.add_argument("--burn-in", type=int, default=100, dest="burn_in")
    p_sim.add_argument("--mode", choices=("autoregressive", "exogenous"))
    _add_common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit a structured model")
    _add_data_opts(p_fit)
    p_fit.add_argument("--structure", help="structure JSON or file")
    p_fit.add_argument("--full-ols", action="store_true", dest="full_ols",
                       help="unrestricted least squares instead of a structured fit")
    _add_fit_opts(p_fit)
    _add_common(p_fit)
    p_fit.set_defaults(func=_cmd_fit)

    p_sel = sub.add_parser("select", help="fit all structures and rank by criterion")
    _add_data_opts(p_sel)
    p_sel.add_argument("--criterion", choices=("aic", "bic", "llk-gap"), default="bic")
    p_sel.add_argument("--structures", help="JSON list of structures to restrict the search")
    _add_fit_opts(p_sel)
    _add_common(p_sel)
    p_sel.set_defaults(func=_cmd_select)

    p_pred = sub.add_parser("predict", help="forecast from a fitted model")
    p_pred.add_argument("--model", required=True, help="fit result JSON")
    p_pred.add_argument("--recent", required=True, help="CSV with the p most recent samples")
    p_pred.add_argument("--steps", type=int, default=1)
    p_pred.add_argument("--autoregressive", action="store_true")
    _add_common(p_pred)
    p_pred.set_defaults(func=_cmd_predict)

    p_scan = sub.add_parser("scan", help="objective grid over reduced coordinates (m=2)")
    _add_data_opts(p_scan)
    p_scan.add_argument("--structure", required=True)
    p_scan.add_argument("--t-points", type=int, default=200, dest="t_points")
    p_scan.add_argument("--c-points", type=int, default=25, dest="c_points")
    p_scan.add_argument("--c-max", type=float, default=3.0, dest="c_max")
    _add_common(p_scan)
    p_scan.set_defaults(func=_cmd_scan)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, StructureError, SingularMomentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RankDeficiencyError, LikelihoodDomainError, VarstateError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

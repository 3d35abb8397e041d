"""Command-line interface: ``gofstab <command> [options]``.

Exit codes: 0 success, 2 usage or validation error, 3 data parse error,
4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from typing import List, Optional

import numpy as np

from .asymptotics import AlphaGrid, default_projected_table
from .errors import DataError, GofError, ValidityError
from .fitpipeline import RegressionSpec, fit_dimension_form, refit
from .kinds import as_kind
from .pvalue import approx_pvalue, monte_carlo_pvalue, pvalue_batch_csv, reject
from .readers import read_angles, read_spherical_csv, read_unit_values
from .scan import ScanConfig, read_scan_csv, scan_stream
from .simulation import QuantileTable, build_quantile_table, packaged_desk_table
from .stabilizer import (ALPHA_MAX, N_MIN, critical_value, default_form, load_form, save_form,
                         stabilize)
from .statistics import MonteCarloScheme, SphericalSample, UnitSample, compute_statistic
from .validation import A_TEST, METHODS, N_TEST, calibrate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 2, 3, 4


def int_list(text: str) -> List[int]:
    """``"5..10,20,30..50:10"`` -> [5, 6, ..., 10, 20, 30, 40, 50]."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            rng, _, step = part.partition(":")
            lo, hi = rng.split("..")
            out.extend(range(int(lo), int(hi) + 1, int(step or 1)))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer list {text!r}")
    return out


def float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    c.add_argument("--kind", default=None, help="statistic kind (D, W2, A2, V, U2, PCvM, PAD, NBak)")
    c.add_argument("--n", default=None, help="sample size, or a list such as 5..50,100")
    c.add_argument("--p", default=None, help="dimension, or a list for table/fit")
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--M", type=int, default=None, help="Monte Carlo replicates")
    c.add_argument("--grid-A", type=int, default=1000, dest="grid_A")
    c.add_argument("--directions", type=int, default=None,
                   help="estimate projected statistics from this many random directions")
    c.add_argument("--input", default=None)
    c.add_argument("--output", default=None)
    c.add_argument("--format", choices=("csv", "json", "text"), default="text")
    c.add_argument("--angles", choices=("radians", "degrees"), default=None,
                   help="input holds one angle per line")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="gofstab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("stat", parents=[common], help="compute a statistic from data")

    s = sub.add_parser("pvalue", parents=[common], help="approximate p-value of a statistic")
    s.add_argument("--statistic", type=float, default=None,
                   help="statistic on the limiting-law scale (sqrt(n) D_n for D and V)")

    sub.add_parser("test", parents=[common], help="statistic, stabilized value, p-value and decision")

    s = sub.add_parser("table", parents=[common], help="simulate a quantile table")
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("fit", parents=[common], help="fit a stabilizing form from a quantile table")
    s.add_argument("--weights", default="w2")
    s.add_argument("--lambda", type=int, default=2, dest="lambda_")
    s.add_argument("--mu", type=int, default=2)
    s.add_argument("--dims", type=int_list, default=None, help="dimensions for a directional fit")

    s = sub.add_parser("validate", parents=[common], help="calibration study of critical values")
    s.add_argument("--alphas", type=float_list, default=None)
    s.add_argument("--methods", default=",".join(METHODS))
    s.add_argument("--form", default=None, help="JSON form replacing the built-in one")

    s = sub.add_parser("scan", parents=[common], help="rolling-window scan with FDR adjustment")
    s.add_argument("--window", type=int, default=100)
    s.add_argument("--window-days", type=float, default=None, dest="window_days")
    s.add_argument("--step", type=int, default=1)
    s.add_argument("--fdr", choices=("none", "by"), default="by")
    s.add_argument("--alpha-report", type=float, default=0.05, dest="alpha_report")

    s = sub.add_parser("bench", parents=[common], help="latency of approx_pvalue")
    s.add_argument("--repeats", type=int, default=1000)
    s.add_argument("--warmup", type=int, default=10)
    s.add_argument("--mc-trials", type=int, default=0, dest="mc_trials",
                   help="also time a Monte Carlo p-value with this many trials")
    return ap


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _need(args, name):
    val = getattr(args, name)
    if val is None:
        raise ValidityError(f"--{name.replace('_', '-')} is required for '{args.command}'")
    return val


def _single_int(text, name):
    if text is None:
        return None
    vals = int_list(str(text))
    if len(vals) != 1:
        raise ValidityError(f"--{name} takes a single value here")
    return vals[0]


def _kinds(args, default):
    return [as_kind(k) for k in (args.kind or default).split(",")]


def _read_data(args, kind):
    path = _need(args, "input")
    if args.angles is not None:
        ang = read_angles(path)
        degrees = args.angles == "degrees"
        if kind.is_classical:
            return UnitSample.from_angles(ang, degrees=degrees)
        return SphericalSample.from_angles(ang, degrees=degrees)
    if kind.is_classical:
        return read_unit_values(path)
    return read_spherical_csv(path)


def _statistic(args, kind):
    data = _read_data(args, kind)
    kw = {}
    if args.directions and kind.value in ("PCvM", "PAD"):
        kw["scheme"] = MonteCarloScheme(M=args.directions, seed=args.seed)
    return compute_statistic(kind, data, **kw)


def _emit(args, record: dict, out=None):
    out = sys.stdout if out is None else out
    if args.format == "json":
        print(json.dumps(record, indent=2, default=str), file=out)
    elif args.format == "csv":
        w = csv.writer(out)
        w.writerow(list(record))
        w.writerow(list(record.values()))
    else:
        for k, v in record.items():
            print(f"{k}: {v}", file=out)


def _write_rows(path, header, rows):
    if path is None:
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(rows)
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_stat(args) -> int:
    kind = as_kind(_need(args, "kind"))
    T = _statistic(args, kind)
    rec = {"kind": kind.value, "n": T.n, "p": T.p, "statistic": T.value, "scaled": T.scaled}
    if T.estimation is not None:
        rec["directions"] = T.estimation.direction_count
        rec["std_error"] = T.estimation.std_error
    _emit(args, rec)
    return EXIT_OK


def cmd_pvalue(args) -> int:
    kind = as_kind(_need(args, "kind"))
    if args.statistic is None:
        src = _need(args, "input")
        if args.output is None:
            raise ValidityError("batch mode needs --output")
        pvalue_batch_csv(src, args.output, kind)
        return EXIT_OK
    n = _single_int(_need(args, "n"), "n")
    p = _single_int(args.p, "p")
    res = approx_pvalue(args.statistic, n=n, p=p, kind=kind)
    _emit(args, {"kind": kind.value, "n": n, "p": p, "statistic": args.statistic,
                 "pvalue": res.value, "display": str(res), "method": res.method})
    return EXIT_OK


def cmd_test(args) -> int:
    kind = as_kind(_need(args, "kind"))
    alpha = args.alpha
    if not 0.0 < alpha <= ALPHA_MAX:
        raise ValidityError(f"alpha={alpha} outside (0, {ALPHA_MAX}]")
    T = _statistic(args, kind)
    if T.n < N_MIN:
        raise ValidityError(f"n={T.n} below the smallest supported sample size {N_MIN}")
    p = _single_int(args.p, "p") if args.p is not None else T.p
    if kind.is_spherical and args.angles is not None:
        p = 2
    res = approx_pvalue(T, p=p)
    t_star = stabilize(T, alpha, p=p)
    rec = {"kind": kind.value, "n": T.n, "p": p, "alpha": alpha, "statistic": T.value,
           "scaled_statistic": T.scaled, "stabilized_statistic": t_star,
           "critical_value": critical_value(kind, T.n, alpha, p=p), "pvalue": res.value,
           "pvalue_display": str(res), "pvalue_method": res.method,
           "reject": reject(T, alpha, p=p)}
    _emit(args, rec)
    return EXIT_OK


def cmd_table(args) -> int:
    kind = as_kind(_need(args, "kind"))
    N = int_list(str(_need(args, "n")))
    P = int_list(str(args.p)) if args.p is not None else None
    table = build_quantile_table(kind, N, AlphaGrid(args.grid_A), M=args.M or 10 ** 5, P=P,
                                 seed=args.seed, workers=args.workers)
    table.to_csv(_need(args, "output"))
    print(f"wrote {args.output} ({len(N)} sample sizes, M={table.M}, seed={table.seed})",
          file=sys.stderr)
    return EXIT_OK


def cmd_fit(args) -> int:
    kind = as_kind(args.kind or "D")
    if args.input is not None:
        table = QuantileTable.from_csv(args.input)
    elif args.dims is not None:
        N = int_list(str(args.n or "5..50:5,100,200"))
        table = build_quantile_table(kind, N, AlphaGrid(args.grid_A), M=args.M or 10 ** 5,
                                     P=args.dims, seed=args.seed)
    elif kind.value == "D":
        table = packaged_desk_table()
    else:
        raise ValidityError("fit needs --input, or --dims for a directional kind")
    if args.kind is not None and table.kind is not kind:
        raise ValidityError(f"table holds {table.kind}, not {kind}")
    if table.kind.is_spherical:
        fit = fit_dimension_form(table, default_projected_table(), scheme=args.weights)
        form = fit.form
        for r, q in form.q.items():
            print(f"q[{r}](p) = {q[0]:+.6f}/sqrt(p) {q[1]:+.6f}/p   ({fit.rule[r]})")
    else:
        spec = RegressionSpec(lambda_=args.lambda_, mu=args.mu, weight_scheme=args.weights)
        model = refit(table, spec)
        print(model.summary())
        form = model.to_form()
    if args.output:
        save_form(form, args.output)
    else:
        print(json.dumps(form.to_dict(), indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    kinds = _kinds(args, "D,W2,A2,V,U2")
    M = args.M or 10 ** 5
    if M < 10 ** 4:
        raise ValidityError(f"--M={M} below the minimum 10000")
    methods = [m.strip() for m in args.methods.split(",")]
    for m in methods:
        if m not in METHODS:
            raise ValidityError(f"unknown method {m!r}")
    N = int_list(str(args.n)) if args.n else list(N_TEST)
    forms = {}
    if args.form:
        f = load_form(args.form)
        forms[f.kind] = f
    p = _single_int(args.p, "p")
    report = calibrate(kinds, N, args.alphas or A_TEST, M=M, methods=methods, seed=args.seed,
                       p=p, forms=forms)
    if args.output:
        report.to_csv(args.output)
    for (k, m, band), v in report.summary().items():
        print(f"{k:5s} {m:14s} n in [{band[0]}, {band[1]}]: mean relative error {100 * v:.2f}%")
    return EXIT_OK


def cmd_scan(args) -> int:
    cfg = ScanConfig(window=None if args.window_days else args.window, window_days=args.window_days,
                     step=args.step, kind=args.kind or "PAD", fdr=args.fdr,
                     alpha_report=args.alpha_report)
    groups = read_scan_csv(_need(args, "input"))
    rows = []
    for g, (t, lon) in sorted(groups.items()):
        res, notes = scan_stream(t, lon, cfg)
        for msg in notes:
            print(f"notice: {'group ' + g + ': ' if g else ''}{msg}", file=sys.stderr)
        for r in res:
            rows.append([g, r["start"], r["end"], r["n"], r["statistic"], r["p_raw"], r["p_adj"],
                         r["method"]])
        hits = sum(r["p_adj"] < cfg.alpha_report for r in res)
        print(f"group {g or '-'}: {len(res)} windows, {hits} with adjusted p < {cfg.alpha_report}",
              file=sys.stderr)
    _write_rows(args.output, ["group", "start", "end", "n", "statistic", "p_raw", "p_adj",
                              "p_method"], rows)
    return EXIT_OK


def bench_latency(kind, n: int, alpha: float, repeats: int = 1000, warmup: int = 10,
                  p: Optional[int] = None, batch: int = 20) -> float:
    """Median wall time (seconds) of one ``approx_pvalue`` call.

    Each of the ``repeats`` samples times ``batch`` back-to-back calls, so the
    clock's own overhead does not dominate a microsecond-scale call.
    """
    kind = as_kind(kind)
    if kind.is_spherical and p is None:
        p = 2
    T = critical_value(kind, n, alpha, p=p, table=default_projected_table() if kind.is_spherical else None)
    for _ in range(warmup):
        approx_pvalue(T, n=n, p=p, kind=kind)
    calls = range(batch)
    times = np.empty(repeats)
    clock = time.perf_counter
    for i in range(repeats):
        t0 = clock()
        for _ in calls:
            approx_pvalue(T, n=n, p=p, kind=kind)
        times[i] = clock() - t0
    return float(np.median(times)) / batch


def cmd_bench(args) -> int:
    kinds = _kinds(args, "D,W2,A2,V,U2")
    N = int_list(str(args.n or "5,50,500"))
    p = _single_int(args.p, "p")
    rows = []
    for kind in kinds:
        for n in N:
            med = bench_latency(kind, n, args.alpha, args.repeats, args.warmup, p)
            row = [kind.value, n, args.alpha, f"{med * 1e6:.3f}"]
            if args.mc_trials:
                rng = np.random.default_rng(args.seed)
                t0 = time.perf_counter()
                monte_carlo_pvalue(kind, 1.0, n, args.mc_trials, rng, p if kind.is_spherical else None)
                row.append(f"{(time.perf_counter() - t0) * 1e6:.1f}")
            rows.append(row)
    header = ["kind", "n", "alpha", "median_us"] + (["mc_us"] if args.mc_trials else [])
    _write_rows(args.output, header, rows)
    return EXIT_OK


COMMANDS = {"stat": cmd_stat, "pvalue": cmd_pvalue, "test": cmd_test, "table": cmd_table,
            "fit": cmd_fit, "validate": cmd_validate, "scan": cmd_scan, "bench": cmd_bench}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GofError, ValueError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``exactber <command> [flags]``.

Exit codes: 0 success, 2 invalid input, 3 metric-state cap exceeded,
4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import Dmc, QuantizerError, awgn_dmc, bsc, design_quantizer
from .encoder import GeneratorSyntaxError, RealizationError, parse_generator, realize
from .linalg import SingularSystemError
from .metricgraph import DEFAULT_CAP, ClosureCapError, closure, graph_json
from .montecarlo import SimConfig, csv_rows, simulate_many
from .scalar import BackendMismatchError, SeriesPoleError, make_backend
from .solver import (
    ConvergenceError,
    NonminimalEncoderError,
    NonUniqueEigenvectorError,
    ReducibleChainError,
    analyze,
)

EXIT_OK, EXIT_INVALID, EXIT_CAP, EXIT_SOLVER = 0, 2, 3, 4

VALIDATION_ERRORS = (GeneratorSyntaxError, RealizationError, QuantizerError, NonminimalEncoderError,
                     BackendMismatchError, ValueError)
SOLVER_ERRORS = (ReducibleChainError, NonUniqueEigenvectorError, ConvergenceError, SingularSystemError,
                 SeriesPoleError)


class UsageError(ValueError):
    pass


def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:log|lin:N`` to an array of N points."""
    parts = text.split(":")
    if len(parts) != 4:
        raise UsageError(f"grid {text!r} must look like lo:hi:log|lin:N")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[3])
    except ValueError as exc:
        raise UsageError(f"grid {text!r}: {exc}") from None
    if n < 1:
        raise UsageError("grid needs at least one point")
    if parts[2] == "log":
        if lo <= 0 or hi <= 0:
            raise UsageError("log grid bounds must be positive")
        return np.geomspace(lo, hi, n)
    if parts[2] == "lin":
        return np.linspace(lo, hi, n)
    raise UsageError(f"grid spacing must be 'log' or 'lin', got {parts[2]!r}")


def _add_encoder(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--gen", required=required, help="generator matrix, octal '5,7' or '[[1+D^2, 1+D+D^2]]'")
    p.add_argument("--form", default="controller", choices=["controller", "observer"])
    p.add_argument("--expect-states", type=int, default=None)
    p.add_argument("--allow-nonminimal", action="store_true")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="metric-state cap")
    p.add_argument("--dump-fsm", metavar="PATH", help="also write the encoder state machine as JSON")


def _add_awgn(p: argparse.ArgumentParser) -> None:
    p.add_argument("--levels", type=int, default=None, help="quantizer levels (AWGN)")
    p.add_argument("--method", default="uniform", choices=["uniform", "massey"])
    p.add_argument("--metric-scale", type=float, default=4.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exactber", description="Exact bit error probability of Viterbi decoding.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="closed-form P_b over the BSC as a rational function of p")
    _add_encoder(p)
    p.add_argument("--out")

    p = sub.add_parser("series", help="power series of P_b in p")
    _add_encoder(p)
    p.add_argument("--order", type=int, default=10)
    p.add_argument("--out")

    p = sub.add_parser("curve", help="numeric P_b over a grid of crossover probabilities")
    _add_encoder(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--p", type=float)
    g.add_argument("--p-grid")
    p.add_argument("--backend", default="numeric", choices=["numeric", "exact"])
    p.add_argument("--out")

    p = sub.add_parser("graph-dump", help="metric-state graph as JSON (and DOT when small)")
    _add_encoder(p)
    p.add_argument("--backend", default="exact", choices=["exact", "series", "numeric", "none"])
    p.add_argument("--order", type=int, default=10)
    p.add_argument("--p", type=float, default=None)
    _add_awgn(p)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="Monte Carlo BER with a streaming Viterbi decoder")
    _add_encoder(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--p", type=float)
    g.add_argument("--snr-db", type=float)
    _add_awgn(p)
    p.add_argument("--bits", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--tie-rule", default="fair-random", choices=["fair-random", "fixed-lowest-state"])
    p.add_argument("--traceback", type=int, default=None)
    p.add_argument("--out")

    p = sub.add_parser("quantize", help="cutoff-rate optimal quantizer for BPSK over AWGN")
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--method", default="uniform", choices=["uniform", "massey"])
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--rate", type=float, default=0.5)
    p.add_argument("--out")

    p = sub.add_parser("awgn-curve", help="numeric P_b over E_b/N_0 with a quantized AWGN channel")
    _add_encoder(p)
    _add_awgn(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--snr-db", type=float)
    g.add_argument("--snr-grid")
    p.add_argument("--out")
    return ap


def _emit(args, name: str, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _encoder(args):
    fsm = realize(parse_generator(args.gen), args.form)
    if args.dump_fsm:
        Path(args.dump_fsm).parent.mkdir(parents=True, exist_ok=True)
        Path(args.dump_fsm).write_text(fsm.dumps() + "\n", encoding="utf-8")
    return fsm


def _analysis_kw(args) -> dict:
    return {"cap": args.cap, "expect_states": args.expect_states, "allow_nonminimal": args.allow_nonminimal}


def _validate(args) -> None:
    if getattr(args, "cap", 1) < 1:
        raise UsageError("--cap must be positive")
    if getattr(args, "order", 1) < 1:
        raise UsageError("--order must be positive")
    p = getattr(args, "p", None)
    if p is not None and not 0.0 <= p <= 0.5:
        raise UsageError("--p must lie in [0, 1/2]")
    if getattr(args, "metric_scale", 1.0) <= 0:
        raise UsageError("--metric-scale must be positive")
    awgn = getattr(args, "snr_db", None) is not None or getattr(args, "snr_grid", None) is not None
    if args.command in ("simulate", "awgn-curve") and awgn and args.levels is None:
        raise UsageError("quantized AWGN needs --levels")
    if args.command == "simulate" and args.seeds < 1:
        raise UsageError("--seeds must be positive")
    if getattr(args, "p_grid", None):
        grid = parse_grid(args.p_grid)
        if grid.min() < 0 or grid.max() > 0.5:
            raise UsageError("--p-grid must stay inside [0, 1/2]")
    if getattr(args, "snr_grid", None):
        parse_grid(args.snr_grid)


def _awgn_channel(levels: int, method: str, snr_db: float, rate: float, scale: float) -> tuple[Dmc, object]:
    q = design_quantizer(levels, snr_db, rate, method)
    return awgn_dmc(q, scale=scale), q


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False)


def cmd_exact(args) -> int:
    fsm = _encoder(args)
    sol = analyze(fsm, bsc(), make_backend("exact"), **_analysis_kw(args))
    out = {"generator": args.gen, "form": args.form, "M": sol.M, "pb": sol.pb.to_json(), "text": str(sol.pb)}
    _emit(args, "exact.json", _json(out))
    return EXIT_OK


def cmd_series(args) -> int:
    fsm = _encoder(args)
    sol = analyze(fsm, bsc(), make_backend("series", order=args.order), **_analysis_kw(args))
    out = {"generator": args.gen, "form": args.form, "M": sol.M, "pb": sol.pb.to_json(), "text": str(sol.pb)}
    _emit(args, "series.json", _json(out))
    return EXIT_OK


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_curve(args) -> int:
    fsm = _encoder(args)
    ps = [args.p] if args.p is not None else parse_grid(args.p_grid).tolist()
    kw = _analysis_kw(args)
    g = closure(fsm, bsc(), cap=args.cap)
    rows = []
    if args.backend == "exact":
        pb = analyze(fsm, bsc(), make_backend("exact"), graph=g, **kw).pb
        rows = [(repr(float(p)), repr(float(pb(p)))) for p in ps]
    else:
        for p in ps:
            sol = analyze(fsm, bsc(), make_backend("numeric", p=float(p)), graph=g, **kw)
            rows.append((repr(float(p)), repr(float(sol.pb))))
    _emit(args, "curve.csv", _csv(["p", "pb"], rows))
    return EXIT_OK


def cmd_graph_dump(args) -> int:
    fsm = _encoder(args)
    if args.snr_db is not None:
        if args.levels is None:
            raise UsageError("quantized AWGN needs --levels")
        chan, _ = _awgn_channel(args.levels, args.method, args.snr_db, fsm.b / fsm.c, args.metric_scale)
        backend = None if args.backend == "none" else make_backend("numeric")
    else:
        chan = bsc(args.p)
        if args.backend == "none":
            backend = None
        elif args.backend == "numeric":
            if args.p is None:
                raise UsageError("numeric graph dump needs --p")
            backend = make_backend("numeric", p=args.p)
        else:
            backend = make_backend(args.backend, order=args.order)
    g = closure(fsm, chan, cap=args.cap)
    _emit(args, "graph.json", graph_json(g, backend))
    if args.out and g.M <= 64:
        _emit(args, "graph.dot", g.to_dot())
    return EXIT_OK


def cmd_simulate(args) -> int:
    fsm = _encoder(args)
    q = None
    if args.snr_db is not None:
        chan, q = _awgn_channel(args.levels, args.method, args.snr_db, fsm.b / fsm.c, args.metric_scale)
    else:
        chan = bsc(args.p)
    cfg = SimConfig(fsm, chan, info_bits=args.bits, seed=args.seed, traceback_depth=args.traceback,
                    tie_rule=args.tie_rule, p=args.p, quantizer=q, encoder_label=args.gen)
    results = simulate_many(cfg, range(args.seed, args.seed + args.seeds))
    _emit(args, "simulate.csv", csv_rows(cfg, results))
    return EXIT_OK


def cmd_quantize(args) -> int:
    q = design_quantizer(args.levels, args.snr_db, args.rate, args.method)
    _emit(args, "quantizer.json", q.dumps())
    return EXIT_OK


def cmd_awgn_curve(args) -> int:
    fsm = _encoder(args)
    snrs = [args.snr_db] if args.snr_db is not None else parse_grid(args.snr_grid).tolist()
    rows = []
    for snr in snrs:
        chan, _ = _awgn_channel(args.levels, args.method, snr, fsm.b / fsm.c, args.metric_scale)
        sol = analyze(fsm, chan, make_backend("numeric"), **_analysis_kw(args))
        rows.append((repr(float(snr)), repr(float(sol.pb)), sol.M))
    _emit(args, "awgn_curve.csv", _csv(["snr_db", "pb", "M"], rows))
    return EXIT_OK


COMMANDS = {
    "exact": cmd_exact,
    "series": cmd_series,
    "curve": cmd_curve,
    "graph-dump": cmd_graph_dump,
    "simulate": cmd_simulate,
    "quantize": cmd_quantize,
    "awgn-curve": cmd_awgn_curve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    try:
        _validate(args)
        return COMMANDS[args.command](args)
    except ClosureCapError as exc:
        print(f"error: ClosureCapError: {exc}", file=sys.stderr)
        return EXIT_CAP
    except SOLVER_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except VALIDATION_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

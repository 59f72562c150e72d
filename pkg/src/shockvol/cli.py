"""Command-line front end.

Data goes to ``--out`` (or standard output); logs go to standard error. Every
command also writes a JSON manifest with the resolved configuration, the
derived constants and a checksum of each output.

Exit codes: 0 success, 2 configuration error, 3 verification failure,
4 numerical guard failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import asymptotics as asy
from .config import SCHEMA, ConfigError, RunConfig, dump_config, load_config
from .model import DomainError, QueryPoint, derive_constants
from .pricing import NoConvergence, PriceOutOfBounds, call_samples, implied_vol_mc, price_call_mc
from .simulate import estimate_log_tail, sample_It_batch, simulate_ou_batch
from .verify import Context, run_all

log = logging.getLogger("shockvol")

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_NUMERIC = 0, 2, 3, 4

CONSTANT_FORMULAS = {
    "c_sf": "lambda^(D-1/2) V / sqrt(Gamma(2D+1))",
    "sigma0": "lambda^(D-1/2) V (-tau0)^(D-1/2) / sqrt(Gamma(2D))",
    "C_sf": "(1-D)^(1/(2(1-D))) / (1/2-D)^((1/2-D)/(1-D)) / c_sf^(1/(1-D))",
    "C_tilde": "c_sf^(1/D) (2D)^(1/(2D)) (1-2D)^((1-2D)/(2D))",
    "ou_c": "(1-2D) / (2D c_sf^2)^(1/(1-2D))",
    "ou_gamma": "(2-2D) / (1-2D)",
}


# ---------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if x is None:
        return ""
    return str(x)


def render(columns: list[str], rows: list[dict], form: str) -> str:
    if form == "json":
        clean = [{c: _jsonable(r.get(c)) for c in columns} for r in rows]
        return json.dumps(clean, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(cfg: RunConfig, command: str, text: str, started: float, extra: dict | None = None) -> None:
    out = cfg["out"]
    if out:
        atomic_write(Path(out), text)
        target = str(out)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()
        target = "<stdout>"
    manifest_path = Path(cfg["manifest"] or (f"{out}.manifest.json" if out else f"shockvol-{command}.manifest.json"))
    consts = derive_constants(cfg.params())
    manifest = {
        "command": command,
        "tool": "shockvol",
        "tool_version": __version__,
        "config": cfg.echo(),
        "config_text": dump_config(cfg),
        "params": asdict(cfg.params()),
        "constants": asdict(consts),
        "wall_time_s": time.perf_counter() - started,
        "outputs": {target: hashlib.sha256(text.encode("utf-8")).hexdigest()},
    }
    if extra:
        manifest.update(extra)
    atomic_write(manifest_path, json.dumps(_jsonable(manifest), indent=1, sort_keys=True) + "\n")
    log.info("wrote %s and manifest %s", target, manifest_path)


# ---------------------------------------------------------------------------
# row machinery


_ROW_ERRORS = (DomainError, PriceOutOfBounds, NoConvergence, OverflowError, ZeroDivisionError, FloatingPointError)


def _grouped(cfg: RunConfig) -> dict[float, list[float]]:
    groups: dict[float, list[float]] = {}
    for k, t in cfg.queries():
        groups.setdefault(t, []).append(k)
    return groups


def _per_maturity(cfg: RunConfig, fn) -> list[dict]:
    """Run ``fn(t, kappas, draws)`` per maturity and keep input order.

    Draws for a maturity come from a stream keyed by ``t`` itself, so the
    values of a row do not depend on where it sits in the grid.
    """
    params, seed = cfg.params(), cfg.seed()
    groups = _grouped(cfg)

    def one(t: float) -> list[dict]:
        log.info("maturity t=%g: %d strikes", t, len(groups[t]))
        I = sample_It_batch(params, t, cfg["n_samples"], seed.for_maturity(t), cfg["chunk_size"])
        return fn(t, groups[t], I)

    ts = list(groups)
    if cfg["workers"] > 1 and len(ts) > 1:
        with ThreadPoolExecutor(max_workers=cfg["workers"]) as pool:
            parts = list(pool.map(one, ts))
    else:
        parts = [one(t) for t in ts]
    by_key = {(r["kappa"], r["t"]): r for part in parts for r in part}
    return [by_key[q] for q in cfg.queries()]


# ---------------------------------------------------------------------------
# commands


def cmd_constants(cfg: RunConfig, started: float) -> int:
    consts = derive_constants(cfg.params())
    rows = [{"name": k, "value": getattr(consts, k), "formula": f} for k, f in CONSTANT_FORMULAS.items()]
    params = cfg.params()
    for k, key in (("D", "D"), ("V", "V"), ("lam", "lambda"), ("tau0", "tau0")):
        given = key in cfg.values or SCHEMA[key][1] is not None
        rows.append({"name": k, "value": getattr(params, k), "formula": "input" if given else "resolved"})
    emit(cfg, "constants", render(["name", "value", "formula"], rows, cfg["format"]), started)
    return EXIT_OK


PRICE_COLUMNS = ["kappa", "t", "call", "call_se", "iv", "iv_se", "regime", "flags", "error"]


def cmd_price(cfg: RunConfig, started: float) -> int:
    params, seed, th = cfg.params(), cfg.seed(), cfg.thresholds()
    consts = derive_constants(params)

    def rows_for(t, kappas, I):
        out = []
        for k in kappas:
            q = QueryPoint(k, t)
            row = {"kappa": k, "t": t}
            try:
                row["regime"] = asy.classify(q, consts, th).label
                pe = price_call_mc(params, q, I.size, seed, I=I)
                row.update(call=pe.call.value, call_se=pe.call.std_error)
                iv = implied_vol_mc(params, q, I.size, seed, I=I).implied_vol
                row.update(iv=iv.value, iv_se=iv.std_error, flags=";".join(iv.flags))
            except _ROW_ERRORS as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
            out.append(row)
        return out

    rows = _per_maturity(cfg, rows_for)
    emit(cfg, "price", render(PRICE_COLUMNS, rows, cfg["format"]), started)
    return EXIT_OK


SMILE_COLUMNS = ["kappa", "t", "iv_mc", "iv_mc_se", "iv_asym", "regime", "ratio", "error"]


def cmd_smile(cfg: RunConfig, started: float) -> int:
    params, seed, th = cfg.params(), cfg.seed(), cfg.thresholds()
    consts = derive_constants(params)

    def rows_for(t, kappas, I):
        out = []
        for k in kappas:
            q = QueryPoint(k, t)
            row = {"kappa": k, "t": t}
            errors = []
            try:
                a = asy.smile_asymptote(q, consts, th)
                row.update(iv_asym=a.value, regime=a.regime.label)
            except _ROW_ERRORS as exc:
                errors.append(f"asym {type(exc).__name__}: {exc}")
            try:
                iv = implied_vol_mc(params, q, I.size, seed, I=I).implied_vol
                row.update(iv_mc=iv.value, iv_mc_se=iv.std_error)
            except _ROW_ERRORS as exc:
                errors.append(f"mc {type(exc).__name__}: {exc}")
            if "iv_mc" in row and "iv_asym" in row:
                row["ratio"] = row["iv_mc"] / row["iv_asym"]
            row["error"] = " | ".join(errors)
            out.append(row)
        return out

    rows = _per_maturity(cfg, rows_for)
    emit(cfg, "smile", render(SMILE_COLUMNS, rows, cfg["format"]), started)
    return EXIT_OK


TAIL_COLUMNS = ["kappa", "t", "logp_mc", "logp_se", "logp_asym", "logp_unified", "regime", "error"]


def cmd_tail(cfg: RunConfig, started: float) -> int:
    params, seed, th = cfg.params(), cfg.seed(), cfg.thresholds()
    consts = derive_constants(params)

    def rows_for(t, kappas, I):
        out = []
        for k in kappas:
            q = QueryPoint(k, t)
            row = {"kappa": k, "t": t}
            errors = []
            est = estimate_log_tail(params, q, I.size, seed, I=I)
            row.update(logp_mc=est.value, logp_se=est.std_error)
            try:
                a = asy.tail_asymptote(q, consts, th)
                row.update(logp_asym=a.value, regime=a.regime.label)
            except _ROW_ERRORS as exc:
                errors.append(f"asym {type(exc).__name__}: {exc}")
            try:
                row["logp_unified"] = asy.tail_asymptote_unified(q, consts).value
            except _ROW_ERRORS as exc:
                errors.append(f"unified {type(exc).__name__}: {exc}")
            row["error"] = " | ".join(errors)
            out.append(row)
        return out

    rows = _per_maturity(cfg, rows_for)
    emit(cfg, "tail", render(TAIL_COLUMNS, rows, cfg["format"]), started)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, started: float, only: list[str] | None = None) -> int:
    ctx = Context(cfg.params(), cfg.seed(), cfg["verify_scale"], cfg["chunk_size"])
    results = run_all(ctx, only, cfg["expect_C_sf"], cfg["expect_sigma0"], log=log.info)
    for r in results:
        print(r.line(), file=sys.stderr)
    rows = [
        {"id": r.id, "passed": r.passed, "title": r.title, "tolerance": r.tolerance,
         "measured": json.dumps(_jsonable(r.measured), sort_keys=True)}
        for r in results
    ]
    text = render(["id", "passed", "title", "tolerance", "measured"], rows, cfg["format"])
    n_fail = sum(not r.passed for r in results)
    emit(cfg, "verify", text, started, {"timings_s": {r.id: r.seconds for r in results}, "failed": n_fail})
    log.info("%d of %d checks passed", len(results) - n_fail, len(results))
    return EXIT_VERIFY if n_fail else EXIT_OK


OU_COLUMNS = ["path_id", "I_tilde", "I", "dominated"]


def cmd_ou_bound(cfg: RunConfig, started: float) -> int:
    params, seed, spec = cfg.params(), cfg.seed(), cfg.ou_spec()
    ts = cfg["t"] or (1.0,)
    kappas = cfg["kappa"] or (-0.2, 0.0, 0.1, 0.3, 1.0)
    t_path = max(ts)
    It, I = simulate_ou_batch(params, spec, t_path, cfg["ou_paths"], seed.for_maturity(t_path), cfg["chunk_size"])
    dominated = It <= I
    rows = [{"path_id": i, "I_tilde": a, "I": b, "dominated": d} for i, (a, b, d) in enumerate(zip(It, I, dominated))]
    prices = []
    for t in ts:
        price_seed = seed.for_maturity(t)
        price_seed = price_seed.salted(price_seed.salt + 2**64)
        Jt, J = simulate_ou_batch(params, spec, t, cfg["n_samples"], price_seed, cfg["chunk_size"])
        for k in kappas:
            c_tilde = float(np.mean(call_samples(k, Jt)))
            c = float(np.mean(call_samples(k, J)))
            prices.append({"kappa": k, "t": t, "c_tilde": c_tilde, "c": c, "ordered": c_tilde <= c})
    summary = {
        "t": t_path,
        "paths": int(dominated.size),
        "dominated": int(dominated.sum()),
        "all_dominated": bool(dominated.all()),
        "prices": prices,
        "all_prices_ordered": all(p["ordered"] for p in prices),
    }
    log.info("dominated %d/%d paths; prices ordered: %s", summary["dominated"], summary["paths"], summary["all_prices_ordered"])
    emit(cfg, "ou-bound", render(OU_COLUMNS, rows, cfg["format"]), started, {"summary": summary})
    return EXIT_OK


COMMANDS = {
    "constants": cmd_constants,
    "price": cmd_price,
    "smile": cmd_smile,
    "tail": cmd_tail,
    "verify": cmd_verify,
    "ou-bound": cmd_ou_bound,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed")
    common.add_argument("--samples", type=int, metavar="N", help="Monte Carlo samples")
    common.add_argument("--chunk", type=int, metavar="N", help="samples per chunk")
    common.add_argument("--workers", type=int, metavar="N", help="worker threads")
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    common.add_argument("--manifest", metavar="PATH", help="manifest file")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = argparse.ArgumentParser(prog="shockvol", description="Poisson-shock volatility model toolkit")
    parser.add_argument("--version", action="version", version=f"shockvol {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("constants", parents=[common], help="derived constants")
    sub.add_parser("price", parents=[common], help="Monte Carlo call prices and implied vols")
    sub.add_parser("smile", parents=[common], help="Monte Carlo smile against its asymptote")
    sub.add_parser("tail", parents=[common], help="log tail probabilities against asymptotes")
    v = sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    v.add_argument("--only", nargs="+", metavar="ID", help="subset of checks, e.g. C01 C14")
    sub.add_parser("ou-bound", parents=[common], help="generalized OU domination table")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    started = time.perf_counter()
    try:
        cfg = load_config(args.config).replace(
            master_seed=args.seed, n_samples=args.samples, chunk_size=args.chunk,
            workers=args.workers, out=args.out, manifest=args.manifest, format=args.format,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "verify":
            return cmd_verify(cfg, started, args.only)
        return COMMANDS[args.command](cfg, started)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, NoConvergence, PriceOutOfBounds, OverflowError, FloatingPointError) as exc:
        print(f"numerical guard failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

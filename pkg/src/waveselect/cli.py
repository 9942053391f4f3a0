"""Command line front end: ``waveselect select | simulate | plotdata``.

Exit codes: 0 success, 2 input error, 3 computation error, 4 degenerate data.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .experiment import (
    ConfigError,
    list_profiles,
    load_plan,
    render_tables,
    results_from_json,
    results_to_json,
)
from .expressions import ExpressionError
from .selection import CRITERIA, DegenerateDataError, SelectionReport, WaveletConfig, parse_candidates, wp_select
from .simulation import THREADS_ENV, run_scenario, thread_count

log = logging.getLogger("waveselect")

EXIT_OK, EXIT_INPUT, EXIT_COMPUTE, EXIT_DEGENERATE = 0, 2, 3, 4
MIN_ROWS = 16
DEFAULT_CANDIDATES = "builtin"
EPOCH = "1970-01-01T00:00:00+00:00"
_MISSING = {"", "na", "nan", "null", "none"}


class InputError(Exception):
    pass


# --- CSV ingestion ----------------------------------------------------------


def read_columns(path, y_col, x_cols):
    """Numeric columns from a headed CSV; returns ``(y, X, dropped_rows)``.

    Rows with a missing value in any selected column are dropped (order of the
    remaining rows is kept).  Non-numeric entries are an input error.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise InputError(f"{path}: empty file")
            header = [h.strip() for h in header]
            wanted = [y_col] + list(x_cols)
            missing = [c for c in wanted if c not in header]
            if missing:
                raise InputError(f"{path}: no column(s) {missing}; header is {header}")
            idx = [header.index(c) for c in wanted]
            rows, dropped = [], 0
            for lineno, rec in enumerate(reader, start=2):
                if not rec:
                    continue
                vals = [rec[i].strip() if i < len(rec) else "" for i in idx]
                if any(v.lower() in _MISSING for v in vals):
                    dropped += 1
                    continue
                try:
                    rows.append([float(v) for v in vals])
                except ValueError:
                    raise InputError(f"{path}:{lineno}: non-numeric value in {vals}") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    data = np.array(rows, dtype=float).reshape(-1, len(idx))
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: infinite values in the selected columns")
    return data[:, 0], data[:, 1:], dropped


def _timestamp(fixed):
    return fixed if fixed else datetime.now(timezone.utc).isoformat(timespec="seconds")


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# --- commands ---------------------------------------------------------------


def cmd_select(args) -> int:
    criteria = CRITERIA if args.criteria == "both" else (args.criteria,)
    try:
        if not args.x:
            raise InputError("at least one --x column is required")
        y, X, dropped = read_columns(args.input, args.y, args.x)
        if len(y) < MIN_ROWS:
            raise InputError(f"need at least {MIN_ROWS} complete rows, got {len(y)} ({dropped} dropped)")
        candidates = parse_candidates(args.candidates)
        wav = WaveletConfig(wavelet=args.wavelet, j0=args.j0, rule=args.threshold)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except (ExpressionError, ValueError, OSError) as exc:
        log.error("invalid option: %s", exc)
        return EXIT_INPUT

    if np.any(np.ptp(X, axis=0) == 0):
        const = [c for c, s in zip(args.x, np.ptp(X, axis=0)) if s == 0]
        log.error("degenerate predictor: column(s) %s are constant", const)
        return EXIT_DEGENERATE
    design = np.column_stack([np.ones(len(y)), X])
    try:
        report = wp_select(design, y, candidates, criteria, wav)
    except DegenerateDataError as exc:
        log.error("%s", exc)
        return EXIT_DEGENERATE
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    if all(report.winner(c) is None for c in criteria):
        for cid, s in report.scores.items():
            log.error("%s: %s", cid, s.message or "fit failed")
        log.error("no candidate could be fitted")
        return EXIT_COMPUTE

    settings = {
        "input": str(args.input), "y": args.y, "x": list(args.x), "candidates": [c.id for c in candidates],
        "criteria": list(criteria), "wavelet": asdict(wav),
    }
    doc = {
        "kind": "selection",
        "metadata": {
            "version": __version__,
            "seed": args.seed,
            "config_hash": _hash(settings),
            "timestamp": _timestamp(args.fixed_timestamp),
            "settings": settings,
            "rows_used": int(len(y)),
            "rows_dropped": int(dropped),
        },
        "table": _score_table(report, criteria),
        "report": report.to_dict(),
    }
    _write(args.out, json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    for c in criteria:
        log.info("winner by %s: %s", c.upper(), report.winner(c))
    return EXIT_OK


def _score_table(report: SelectionReport, criteria):
    order = report.ranking(criteria[0])
    order += sorted(cid for cid in report.scores if cid not in order)
    rows = []
    for rank, cid in enumerate(order, start=1):
        s = report.scores[cid]
        rows.append({
            "rank": rank if s.fit_ok else None,
            "candidate": cid,
            "rmse": s.rmse if math.isfinite(s.rmse) else None,
            "mae": s.mae if math.isfinite(s.mae) else None,
            "fit_ok": s.fit_ok,
            "converged": s.converged,
            "message": s.message,
        })
    return rows


def cmd_simulate(args) -> int:
    if args.list_profiles:
        print("\n".join(list_profiles()))
        return EXIT_OK
    if not args.config:
        log.error("--config is required (a YAML file or one of: %s)", ", ".join(list_profiles()))
        return EXIT_INPUT
    try:
        plan = load_plan(args.config)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    if args.seed is not None:
        plan.configs = [replace(c, seed=args.seed) for c in plan.configs]
    try:
        jobs = args.jobs if args.jobs is not None else (plan.n_jobs or thread_count())
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_INPUT

    results = []
    for i, cfg in enumerate(plan.configs, start=1):
        log.info("[%d/%d] %s %s n=%d %s%s", i, len(plan.configs), cfg.scenario, cfg.true_model, cfg.n,
                 cfg.dependence, " gap" if cfg.gap else "")
        try:
            res = run_scenario(cfg, n_jobs=jobs)
        except (ValueError, RuntimeError) as exc:
            log.error("%s %s failed: %s", cfg.scenario, cfg.true_model, exc)
            return EXIT_COMPUTE
        if res.failed:
            log.warning("%d of %d replicates failed", res.failed, cfg.replications)
        results.append(res)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in render_tables(results, plan.tables).items():
        (out / f"{name}.csv").write_text(text, encoding="utf-8")
    meta = {
        "version": __version__,
        "seed": args.seed if args.seed is not None else plan.configs[0].seed,
        "config_hash": plan.fingerprint(),
        "timestamp": _timestamp(args.fixed_timestamp),
        "config": str(args.config),
    }
    (out / "summary.json").write_text(results_to_json(results, meta), encoding="utf-8")
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_plotdata(args) -> int:
    try:
        doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
        kind = doc.get("kind")
    except (OSError, UnicodeDecodeError, json.JSONDecodeError, AttributeError) as exc:
        log.error("cannot read report %s: %s", args.report, exc)
        return EXIT_COMPUTE

    buf = []
    try:
        if kind == "selection":
            report = SelectionReport.from_dict(doc["report"])
            criterion = args.criterion
            winner = report.winner(criterion) or report.winner("rmse")
            if not report.x or not report.wavelet_fit or winner not in report.candidate_fits:
                log.error("report has no fitted series to export")
                return EXIT_COMPUTE
            buf.append(["index", "x", "observed", "wavelet", "winner", "winner_model"])
            fits = report.candidate_fits[winner]
            for i, (xv, yv, wv, cv) in enumerate(zip(report.x, report.y, report.wavelet_fit, fits)):
                buf.append([i, repr(float(xv)), repr(float(yv)), repr(float(wv)), repr(float(cv)), winner])
        elif kind == "monte_carlo":
            _, results = results_from_json(json.dumps(doc))
            buf.append(["scenario", "true_model", "dependence", "gap", "n", "criterion", "measure", "value"])
            for r in results:
                c = r.config
                key = [c["scenario"], c["true_model"], c["dependence"], int(c["gap"]), c["n"]]
                for crit, v in r.true_classification_rate.items():
                    buf.append(key + [crit, "true_classification_pct", "" if v is None else repr(v)])
                for crit, v in r.glm_win_proportion.items():
                    buf.append(key + [crit, "glm_win_proportion", "" if v is None else repr(v)])
        else:
            log.error("unrecognized report kind %r", kind)
            return EXIT_COMPUTE
    except (KeyError, TypeError, ValueError) as exc:
        log.error("malformed report: %s", exc)
        return EXIT_COMPUTE

    lines = [",".join(str(v) for v in row) for row in buf]
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="waveselect",
        description="Choose a parametric regression form by its distance to a wavelet fit.",
        epilog=f"Worker processes for simulate default to ${THREADS_ENV} (else 1).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    ts = dict(nargs="?", const=EPOCH, default=None, metavar="ISO",
              help=f"write this timestamp instead of the current time (default {EPOCH})")

    sel = sub.add_parser("select", help="rank candidate models on a CSV data set")
    sel.add_argument("--input", required=True, help="CSV file with a header row")
    sel.add_argument("--y", required=True, help="response column")
    sel.add_argument("--x", action="append", default=[], help="predictor column (repeatable)")
    sel.add_argument("--candidates", default=DEFAULT_CANDIDATES,
                     help="comma list of f1..f4, f24, glm:family:link, file:models.yaml or 'builtin'")
    sel.add_argument("--criteria", choices=["rmse", "mae", "both"], default="both")
    sel.add_argument("--seed", type=int, default=None, help="recorded in the report metadata")
    sel.add_argument("--out", default="-", help="report path (default stdout)")
    sel.add_argument("--fixed-timestamp", **ts)
    sel.add_argument("--wavelet", default=WaveletConfig.wavelet, help="haar or daubN, N in 1..4")
    sel.add_argument("--j0", type=int, default=WaveletConfig.j0)
    sel.add_argument("--threshold", choices=["soft", "hard"], default=WaveletConfig.rule)
    sel.set_defaults(func=cmd_select)

    sim = sub.add_parser("simulate", help="run Monte Carlo experiments from a config or bundled profile")
    sim.add_argument("--config", help="YAML config path or bundled profile name")
    sim.add_argument("--out", default="results", help="output directory")
    sim.add_argument("--seed", type=int, default=None, help="override every scenario's seed")
    sim.add_argument("--jobs", type=int, default=None, help="worker processes")
    sim.add_argument("--fixed-timestamp", **ts)
    sim.add_argument("--list-profiles", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    plot = sub.add_parser("plotdata", help="export plot-ready series from a report")
    plot.add_argument("--report", required=True)
    plot.add_argument("--out", default="-")
    plot.add_argument("--criterion", choices=list(CRITERIA), default="rmse")
    plot.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command-line interface: encode / bd / complexity / experiment."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import bd
from .complexity import sequence_complexity
from .report import (
    DEFAULT_QPS,
    ComparisonRow,
    RunConfig,
    comparison_csv,
    encode_and_persist,
    load_sequence,
    run_csv,
    run_experiment,
    scatter_csv,
)
from .search import EXHAUSTIVE, SEARCHERS


def _add_input_args(p: argparse.ArgumentParser, multiple: bool = False):
    if multiple:
        p.add_argument("--input", action="append", required=True,
                       help="input video (Y4M, or raw planar with --width/--height); repeatable")
    else:
        p.add_argument("--input", required=True,
                       help="input video (Y4M, or raw planar with --width/--height)")
    p.add_argument("--width", type=int, help="raw input width in pixels")
    p.add_argument("--height", type=int, help="raw input height in pixels")
    p.add_argument("--chroma", choices=["420", "400"], default="420",
                   help="raw input chroma subsampling (default 420)")
    p.add_argument("--frames", type=int, help="limit the number of frames")


def _parse_qps(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad qp list {text!r}") from None


def _config(args, input_path: str, searchers) -> RunConfig:
    return RunConfig(
        input=input_path,
        width=args.width,
        height=args.height,
        chroma=args.chroma,
        frames=args.frames,
        searchers=searchers,
        qps=args.qp,
        outdir=args.outdir,
        dump_maps=getattr(args, "dump_maps", False),
        dump_schedule=getattr(args, "dump_schedule", False),
    )


def cmd_encode(args) -> int:
    cfg = _config(args, args.input, (args.searcher,))
    outdir = cfg.resolved_outdir()
    outdir.mkdir(parents=True, exist_ok=True)
    seq = load_sequence(cfg)
    doc = encode_and_persist(cfg, seq, args.searcher, outdir)
    report_path = Path(args.report) if args.report else outdir / f"run_{Path(cfg.input).stem}_{args.searcher}.json"
    if args.report:
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.csv:
        report_path.with_suffix(".csv").write_text(run_csv(doc))
    summary = {
        "report": str(report_path),
        "qp_runs": [
            {"qp": q["qp"], "rate_bits": q["rate_bits"], "psnr_db": q["psnr_db"],
             "rd_nodes": q["rd_nodes"], "wall_seconds": q["wall_seconds"]}
            for q in doc["qp_runs"]
        ],
    }
    print(json.dumps(summary, indent=2))
    return 0


def _read_curve(path: str):
    """CSV rows of (rate_or_time, psnr); a third column, when present, is an
    alternate cost axis (e.g. seconds) returned as a second curve."""
    main, extra = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if len(row) < 2 or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            try:
                values = [float(tok) for tok in row[:3]]
            except ValueError:
                continue  # header line
            main.append(bd.RdPoint(values[0], values[1]))
            if len(values) > 2:
                extra.append(bd.RdPoint(values[2], values[1]))
    return main, extra


def cmd_bd(args) -> int:
    anchor, anchor_extra = _read_curve(args.anchor)
    test, test_extra = _read_curve(args.test)
    out: dict[str, float | None] = {}
    if anchor_extra and test_extra:
        out["bdbr_percent"] = bd.bd_rate(anchor, test)
        out["bdt_percent"] = bd.bd_time(anchor_extra, test_extra)
        out["ratio"] = bd.bd_ratio(out["bdbr_percent"], out["bdt_percent"])
    elif args.axis == "rate":
        out["bdbr_percent"] = bd.bd_rate(anchor, test)
    else:
        out["bdt_percent"] = bd.bd_time(anchor, test)
    print(json.dumps(out, indent=2))
    return 0


def cmd_complexity(args) -> int:
    out = {}
    for path in args.input:
        cfg = RunConfig(input=path, width=args.width, height=args.height,
                        chroma=args.chroma, frames=args.frames)
        score = sequence_complexity(load_sequence(cfg))
        out[path] = {"e": score.e_spatial, "h": score.h_temporal}
    print(json.dumps(out, indent=2))
    return 0


def cmd_experiment(args) -> int:
    rows: list[ComparisonRow] = []
    outdir = None
    for path in args.input:
        cfg = _config(args, path, tuple(args.searchers))
        outdir = cfg.resolved_outdir()
        rows.append(run_experiment(cfg))
    (outdir / "comparison.csv").write_text(comparison_csv(rows))
    (outdir / "scatter.csv").write_text(scatter_csv(rows))
    print(json.dumps(
        [
            {"sequence": r.sequence, "e": r.e_spatial, "h": r.h_temporal,
             "bdbr_percent": r.bdbr_percent, "bdt_nodes_percent": r.bdt_nodes_percent,
             "bdt_wall_percent": r.bdt_wall_percent, "ratio": r.ratio}
            for r in rows
        ],
        indent=2,
    ))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qtmtlab",
        description="Block-partitioning rate-distortion laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="encode a sequence with one searcher across a QP ladder")
    _add_input_args(enc)
    enc.add_argument("--searcher", choices=SEARCHERS, default=EXHAUSTIVE)
    enc.add_argument("--qp", type=_parse_qps, default=DEFAULT_QPS,
                     help="comma-separated QP list (default 22,27,32,37)")
    enc.add_argument("--outdir", default="runs", help="output directory (env QTMTLAB_OUT overrides)")
    enc.add_argument("--report", help="write the run JSON to this path as well")
    enc.add_argument("--csv", action="store_true", help="also write a per-frame CSV flattening")
    enc.add_argument("--dump-maps", action="store_true",
                     help="dump partition maps (256 widths + 256 heights per CTU)")
    enc.add_argument("--dump-schedule", action="store_true",
                     help="dump the GOP schedule (poc, layer, rank, refs) as CSV")
    enc.set_defaults(func=cmd_encode)

    bdp = sub.add_parser("bd", help="Bjøntegaard deltas between two result curves")
    bdp.add_argument("--anchor", required=True, help="anchor CSV: rate_or_time,psnr[,seconds]")
    bdp.add_argument("--test", required=True, help="test CSV: rate_or_time,psnr[,seconds]")
    bdp.add_argument("--axis", choices=["rate", "time"], default="rate",
                     help="how to interpret the first column of 2-column files")
    bdp.set_defaults(func=cmd_bd)

    comp = sub.add_parser("complexity", help="spatial/temporal complexity scores")
    _add_input_args(comp, multiple=True)
    comp.set_defaults(func=cmd_complexity)

    exp = sub.add_parser("experiment", help="exhaustive-vs-pruned comparison over the QP ladder")
    _add_input_args(exp, multiple=True)
    exp.add_argument("--searchers", nargs="+", choices=SEARCHERS, default=list(SEARCHERS))
    exp.add_argument("--qp", type=_parse_qps, default=DEFAULT_QPS,
                     help="comma-separated QP list (default 22,27,32,37)")
    exp.add_argument("--outdir", default="runs", help="output directory (env QTMTLAB_OUT overrides)")
    exp.add_argument("--dump-maps", action="store_true")
    exp.add_argument("--dump-schedule", action="store_true")
    exp.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Experiment driver: run configs, result persistence, and comparison tables.

Runs are persisted as versioned JSON (stable key order, so reruns of the same
config are byte-identical except for wall-time fields).  The experiment
command encodes each input with both searchers across the QP ladder, then
reports BDBR, BDT on wall time and on search-node counts, the BDBR/BDT ratio,
and the sequence's complexity scores.  The node-count BDT variant is the
deterministic one; wall time is reported alongside but depends on the machine.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path

from . import bd
from .complexity import sequence_complexity
from .frame_io import VideoSequence, load_raw, load_y4m
from .gop import build_schedule, schedule_csv
from .qtmt import dump_maps
from .search import EXHAUSTIVE, SEARCHERS, RunResult, encode_sequence

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "QTMTLAB_OUT"
DEFAULT_QPS = (22, 27, 32, 37)

SCATTER_COLUMNS = ["e", "h", "bdbr", "bdt_nodes", "bdt_wall", "ratio"]


class SchemaError(ValueError):
    """Raised when a persisted run file cannot be trusted."""


@dataclass
class RunConfig:
    input: str
    width: int | None = None  # raw input geometry; None means Y4M
    height: int | None = None
    chroma: str = "420"
    frames: int | None = None  # frame-count limit (and raw frame count)
    searchers: tuple[str, ...] = SEARCHERS
    qps: tuple[int, ...] = DEFAULT_QPS
    outdir: str = "runs"
    dump_maps: bool = False
    dump_schedule: bool = False

    def __post_init__(self):
        if not self.qps:
            raise ValueError("qp list must not be empty")
        for qp in self.qps:
            if not 0 <= qp <= 51:
                raise ValueError(f"qp {qp} out of range 0..51")
        for s in self.searchers:
            if s not in SEARCHERS:
                raise ValueError(f"unknown searcher {s!r}")

    def resolved_outdir(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV, self.outdir))


@dataclass
class ComparisonRow:
    sequence: str
    e_spatial: float
    h_temporal: float
    bdbr_percent: float
    bdt_nodes_percent: float
    bdt_wall_percent: float
    ratio: float | None  # bdbr / bdt_nodes; None when undefined


def load_sequence(cfg: RunConfig) -> VideoSequence:
    if cfg.width is not None or cfg.height is not None:
        if cfg.width is None or cfg.height is None:
            raise ValueError("raw input needs both --width and --height")
        if cfg.frames is not None:
            count = cfg.frames
        else:
            luma = cfg.width * cfg.height
            stride = luma + (luma // 2 if cfg.chroma == "420" else 0)
            count = os.path.getsize(cfg.input) // stride
        return load_raw(cfg.input, cfg.width, cfg.height, count, cfg.chroma)
    seq = load_y4m(cfg.input)
    if cfg.frames is not None and cfg.frames < len(seq.frames):
        seq = VideoSequence(frames=seq.frames[: cfg.frames], frame_rate=seq.frame_rate)
    return seq


# ---------------------------------------------------------------------------
# Persistence


def run_to_dict(sequence_name: str, seq: VideoSequence, run: RunResult) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "sequence": sequence_name,
        "width": seq.width,
        "height": seq.height,
        "num_frames": len(seq.frames),
        "searcher": run.searcher,
        "qp_runs": [
            {
                "qp": qr.qp,
                "rate_bits": qr.rate_bits,
                "psnr_db": qr.psnr_db,
                "rd_nodes": qr.rd_nodes,
                "wall_seconds": qr.wall_seconds,
                "frames": [
                    {
                        "poc": fr.poc,
                        "layer": fr.layer,
                        "rate_bits": fr.total_rate,
                        "psnr_db": fr.psnr_db,
                        "rd_nodes": fr.stats.rd_nodes,
                        "skipped_ns": fr.stats.skipped_ns,
                        "terminated": fr.stats.terminated,
                        "fallbacks": fr.stats.fallbacks,
                        "wall_seconds": fr.stats.wall_time,
                    }
                    for fr in qr.frames
                ],
            }
            for qr in run.qp_runs
        ],
    }


def dumps_run(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def persist_run(path, doc: dict):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps_run(doc))


def load_run(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if "version" not in doc:
        raise SchemaError(f"{path}: missing schema version")
    version = doc["version"]
    if not isinstance(version, int) or version < 1:
        raise SchemaError(f"{path}: bad schema version {version!r}")
    if version > SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: schema version {version} is newer than supported {SCHEMA_VERSION}"
        )
    return doc


def rate_points(doc: dict) -> list[bd.RdPoint]:
    return [bd.RdPoint(q["rate_bits"], q["psnr_db"]) for q in doc["qp_runs"]]


def node_points(doc: dict) -> list[bd.RdPoint]:
    return [bd.RdPoint(q["rd_nodes"], q["psnr_db"]) for q in doc["qp_runs"]]


def wall_points(doc: dict) -> list[bd.RdPoint]:
    return [bd.RdPoint(q["wall_seconds"], q["psnr_db"]) for q in doc["qp_runs"]]


def run_csv(doc: dict) -> str:
    """Flatten a run document into per-frame CSV rows."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["searcher", "qp", "poc", "layer", "rate_bits", "psnr_db",
         "rd_nodes", "skipped_ns", "terminated", "fallbacks", "wall_seconds"]
    )
    for qr in doc["qp_runs"]:
        for fr in qr["frames"]:
            writer.writerow(
                [doc["searcher"], qr["qp"], fr["poc"], fr["layer"], fr["rate_bits"],
                 fr["psnr_db"], fr["rd_nodes"], fr["skipped_ns"], fr["terminated"],
                 fr["fallbacks"], fr["wall_seconds"]]
            )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Experiment driver


def _sequence_name(path: str) -> str:
    return Path(path).stem


def compare_runs(anchor_doc: dict, test_doc: dict, e: float, h: float) -> ComparisonRow:
    bdbr = bd.bd_rate(rate_points(anchor_doc), rate_points(test_doc))
    bdt_nodes = bd.bd_time(node_points(anchor_doc), node_points(test_doc))
    bdt_wall = bd.bd_time(wall_points(anchor_doc), wall_points(test_doc))
    return ComparisonRow(
        sequence=test_doc["sequence"],
        e_spatial=e,
        h_temporal=h,
        bdbr_percent=bdbr,
        bdt_nodes_percent=bdt_nodes,
        bdt_wall_percent=bdt_wall,
        ratio=bd.bd_ratio(bdbr, bdt_nodes),
    )


def encode_and_persist(cfg: RunConfig, seq: VideoSequence, searcher: str, outdir: Path) -> dict:
    name = _sequence_name(cfg.input)
    run = encode_sequence(seq, searcher, list(cfg.qps))
    doc = run_to_dict(name, seq, run)
    persist_run(outdir / f"run_{name}_{searcher}.json", doc)
    if cfg.dump_schedule:
        (outdir / f"schedule_{name}.csv").write_text(schedule_csv(build_schedule(len(seq.frames))))
    if cfg.dump_maps:
        for qr in run.qp_runs:
            maps_by_poc = {fr.poc: fr.maps for fr in qr.frames}
            (outdir / f"maps_{name}_{searcher}_qp{qr.qp}.txt").write_text(dump_maps(maps_by_poc))
    return doc


def run_experiment(cfg: RunConfig) -> ComparisonRow:
    """Encode one input with every configured searcher and compare against
    the exhaustive baseline.  Returns the comparison row (also persisted)."""
    if len(cfg.qps) < bd.MIN_POINTS:
        raise ValueError(f"BD comparison needs at least {bd.MIN_POINTS} QPs, got {len(cfg.qps)}")
    outdir = cfg.resolved_outdir()
    outdir.mkdir(parents=True, exist_ok=True)
    seq = load_sequence(cfg)
    comp = sequence_complexity(seq)

    docs = {s: encode_and_persist(cfg, seq, s, outdir) for s in cfg.searchers}
    anchor = docs.get(EXHAUSTIVE)
    if anchor is None:
        raise ValueError("experiment needs the exhaustive searcher as the anchor")
    test = next((docs[s] for s in cfg.searchers if s != EXHAUSTIVE), anchor)
    return compare_runs(anchor, test, comp.e_spatial, comp.h_temporal)


def comparison_csv(rows: list[ComparisonRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["sequence", "e_spatial", "h_temporal", "bdbr_percent",
         "bdt_nodes_percent", "bdt_wall_percent", "ratio"]
    )
    for row in rows:
        writer.writerow(
            [row.sequence, row.e_spatial, row.h_temporal, row.bdbr_percent,
             row.bdt_nodes_percent, row.bdt_wall_percent,
             "" if row.ratio is None else row.ratio]
        )
    return buf.getvalue()


def scatter_csv(rows: list[ComparisonRow]) -> str:
    """Complexity-vs-performance scatter data for external plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(SCATTER_COLUMNS)
    for row in rows:
        writer.writerow(
            [row.e_spatial, row.h_temporal, row.bdbr_percent, row.bdt_nodes_percent,
             row.bdt_wall_percent, "" if row.ratio is None else row.ratio]
        )
    return buf.getvalue()

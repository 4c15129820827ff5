"""Random-access GOP-32 hierarchical coding order and reference assignment.

Six temporal layers (0..5).  Layer-0 frames (POC divisible by 32) are intra
coded; every other frame predicts from the two nearest lower-layer frames at
POC +/- 2^(5-layer).  Frames in layers 2..5 additionally receive the partition
maps of those same two frames to bound their split search; layers 0 and 1 are
searched in full.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

GOP_SIZE = 32
NUM_LAYERS = 6
MAP_GUIDED_LAYERS = range(2, 6)


def temporal_layer(poc: int, gop_size: int = GOP_SIZE) -> int:
    """Temporal layer of a display index under the GOP-32 pyramid."""
    if gop_size != GOP_SIZE:
        raise ValueError(f"unsupported gop_size {gop_size}, only {GOP_SIZE} is implemented")
    if poc < 0:
        raise ValueError(f"poc must be >= 0, got {poc}")
    p = poc % gop_size
    if p == 0:
        return 0
    trailing = (p & -p).bit_length() - 1
    return 5 - trailing


def _reference_distance(layer: int) -> int:
    return 1 << (5 - layer)


@dataclass(frozen=True)
class FrameCoding:
    """Per-frame schedule entry."""

    poc: int
    layer: int
    encode_rank: int
    pred_refs: tuple[int, ...]  # up to 2 POCs, prediction sources (empty = intra)
    etrf_refs: tuple[int, ...]  # up to 2 POCs whose partition maps bound the search


@dataclass(frozen=True)
class GopSchedule:
    entries: list[FrameCoding]  # indexed by POC
    gop_size: int = GOP_SIZE

    def encode_order(self) -> list[FrameCoding]:
        return sorted(self.entries, key=lambda fc: fc.encode_rank)


def build_schedule(num_frames: int) -> GopSchedule:
    """Coding order, layers, and reference lists for `num_frames` frames.

    Encode order is layer-major within each GOP (ties by ascending POC), which
    guarantees every reference precedes its dependents.  Forward references
    that fall off the end of the sequence are dropped.
    """
    if num_frames < 1:
        raise ValueError(f"num_frames must be >= 1, got {num_frames}")

    pocs = list(range(num_frames))
    # POC 0 forms its own leading GOP; GOP k >= 1 covers POCs 32(k-1)+1 .. 32k.
    order = sorted(pocs, key=lambda p: ((p + GOP_SIZE - 1) // GOP_SIZE, temporal_layer(p), p))
    rank_of = {poc: rank for rank, poc in enumerate(order)}

    entries = []
    for poc in pocs:
        layer = temporal_layer(poc)
        if layer == 0:
            refs: tuple[int, ...] = ()
        else:
            dist = _reference_distance(layer)
            refs = tuple(p for p in (poc - dist, poc + dist) if 0 <= p < num_frames)
        etrf = refs if layer in MAP_GUIDED_LAYERS else ()
        entries.append(
            FrameCoding(
                poc=poc,
                layer=layer,
                encode_rank=rank_of[poc],
                pred_refs=refs,
                etrf_refs=etrf,
            )
        )
    return GopSchedule(entries=entries)


def schedule_csv(schedule: GopSchedule) -> str:
    """One CSV line per frame in display order: poc, layer, rank, refs."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["poc", "layer", "encode_rank", "pred_refs", "etrf_refs"])
    for fc in schedule.entries:
        writer.writerow(
            [
                fc.poc,
                fc.layer,
                fc.encode_rank,
                " ".join(str(p) for p in fc.pred_refs),
                " ".join(str(p) for p in fc.etrf_refs),
            ]
        )
    return buf.getvalue()

"""CTU/CU geometry, QTMT split modes and legality, and per-CTU partition maps.

The split grammar is a simplified-but-complete QTMT subset: quad splits on
squares down to 8x8, binary and ternary splits (1:2:1) afterwards, minimum CU
dimension 4, at most three multi-type splits on any path, and no quad split
once a multi-type split has occurred.  Multi-type splits never produce a child
dimension above 64, which disables them at the 128x128 CTU root.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

CTU_SIZE = 128
MIN_CU_DIM = 4
MAX_MTT_DEPTH = 3
MAX_MTT_CHILD_DIM = 64
MIN_QT_DIM = 16
MIN_TT_DIM = 16
MAP_CELL = 8  # map grid cell size in pixels
MAP_CELLS = CTU_SIZE // MAP_CELL  # 16 cells per axis, 256 per CTU
MAP_SENTINEL = 0  # stored for cells outside the frame
MAP_DISABLED = 128  # lookup result when no valid cell overlaps


class SplitMode(Enum):
    NS = "NS"
    QT = "QT"
    BTH = "BTH"
    BTV = "BTV"
    TTH = "TTH"
    TTV = "TTV"


# Deterministic tie-break order for equal-cost candidates.
MODE_ORDER = (SplitMode.NS, SplitMode.QT, SplitMode.BTH, SplitMode.BTV, SplitMode.TTH, SplitMode.TTV)


@dataclass(frozen=True)
class CuGeometry:
    """A coding unit: pixel rectangle plus its position in the split grammar."""

    x: int
    y: int
    w: int
    h: int
    qt_depth: int = 0
    mtt_depth: int = 0
    in_mtt: bool = False

    def footprint(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


def legal_splits(cu: CuGeometry) -> set[SplitMode]:
    """The subset of the six modes this CU may take.

    NS is always included here; the searcher overrides it for CUs that
    extend past the frame boundary.
    """
    modes = {SplitMode.NS}
    if cu.w == cu.h and cu.w >= MIN_QT_DIM and not cu.in_mtt:
        modes.add(SplitMode.QT)
    if cu.mtt_depth < MAX_MTT_DEPTH:
        # A multi-type split keeps the unsplit dimension, so it may not run
        # on a CU whose other dimension exceeds the 64-pixel MTT ceiling.
        if cu.h >= 8 and cu.w <= MAX_MTT_CHILD_DIM and cu.h // 2 <= MAX_MTT_CHILD_DIM:
            modes.add(SplitMode.BTH)
        if cu.w >= 8 and cu.h <= MAX_MTT_CHILD_DIM and cu.w // 2 <= MAX_MTT_CHILD_DIM:
            modes.add(SplitMode.BTV)
        if cu.h >= MIN_TT_DIM and cu.w <= MAX_MTT_CHILD_DIM and cu.h // 2 <= MAX_MTT_CHILD_DIM:
            modes.add(SplitMode.TTH)
        if cu.w >= MIN_TT_DIM and cu.h <= MAX_MTT_CHILD_DIM and cu.w // 2 <= MAX_MTT_CHILD_DIM:
            modes.add(SplitMode.TTV)
    return modes


def apply_split(cu: CuGeometry, mode: SplitMode) -> list[CuGeometry]:
    """Children of `cu` under `mode`, ordered top-to-bottom / left-to-right."""
    if mode == SplitMode.NS or mode not in legal_splits(cu):
        raise ValueError(f"illegal split {mode.value} for {cu.w}x{cu.h} cu")
    x, y, w, h = cu.x, cu.y, cu.w, cu.h
    if mode == SplitMode.QT:
        hw, hh = w // 2, h // 2
        return [
            CuGeometry(x, y, hw, hh, cu.qt_depth + 1, 0, False),
            CuGeometry(x + hw, y, hw, hh, cu.qt_depth + 1, 0, False),
            CuGeometry(x, y + hh, hw, hh, cu.qt_depth + 1, 0, False),
            CuGeometry(x + hw, y + hh, hw, hh, cu.qt_depth + 1, 0, False),
        ]
    qd, md = cu.qt_depth, cu.mtt_depth + 1
    if mode == SplitMode.BTH:
        hh = h // 2
        return [
            CuGeometry(x, y, w, hh, qd, md, True),
            CuGeometry(x, y + hh, w, hh, qd, md, True),
        ]
    if mode == SplitMode.BTV:
        hw = w // 2
        return [
            CuGeometry(x, y, hw, h, qd, md, True),
            CuGeometry(x + hw, y, hw, h, qd, md, True),
        ]
    if mode == SplitMode.TTH:
        q, half = h // 4, h // 2
        return [
            CuGeometry(x, y, w, q, qd, md, True),
            CuGeometry(x, y + q, w, half, qd, md, True),
            CuGeometry(x, y + q + half, w, q, qd, md, True),
        ]
    # TTV
    q, half = w // 4, w // 2
    return [
        CuGeometry(x, y, q, h, qd, md, True),
        CuGeometry(x + q, y, half, h, qd, md, True),
        CuGeometry(x + q + half, y, q, h, qd, md, True),
    ]


@dataclass(frozen=True)
class PartitionTree:
    """Recursive record of split decisions; leaves have split == NS."""

    geometry: CuGeometry
    split: SplitMode
    children: tuple["PartitionTree", ...] = ()

    def leaves(self):
        if self.split == SplitMode.NS:
            yield self
        else:
            for child in self.children:
                yield from child.leaves()


@dataclass
class PartitionMap:
    """16x16 grid over one CTU: leaf CU (width, height) per 8x8 pixel cell.

    `widths[i, j]` / `heights[i, j]` cover pixels
    [ctu_x + 8j, ctu_x + 8j + 8) x [ctu_y + 8i, ctu_y + 8i + 8).
    Cells outside the frame hold the 0 sentinel in both arrays.
    """

    ctu_x: int
    ctu_y: int
    widths: np.ndarray = field(default_factory=lambda: np.zeros((MAP_CELLS, MAP_CELLS), dtype=np.int16))
    heights: np.ndarray = field(default_factory=lambda: np.zeros((MAP_CELLS, MAP_CELLS), dtype=np.int16))

    def flat_widths(self) -> list[int]:
        return [int(v) for v in self.widths.ravel()]

    def flat_heights(self) -> list[int]:
        return [int(v) for v in self.heights.ravel()]


def record_map(tree: PartitionTree, frame_width: int, frame_height: int) -> PartitionMap:
    """Rasterize a CTU's final tree into its partition map.

    Each in-frame cell stores the minimum leaf width and minimum leaf height
    among leaves overlapping it (a cell can host up to four 4-pixel leaves;
    taking the minimum never reports a coarser partition than existed).
    """
    root = tree.geometry
    pmap = PartitionMap(ctu_x=root.x, ctu_y=root.y)
    # Large placeholder so minima fall through; sentinel applied afterwards.
    pmap.widths[:] = np.iinfo(np.int16).max
    pmap.heights[:] = np.iinfo(np.int16).max

    for leaf in tree.leaves():
        g = leaf.geometry
        j0 = max((g.x - root.x) // MAP_CELL, 0)
        j1 = min((g.x + g.w - 1 - root.x) // MAP_CELL, MAP_CELLS - 1)
        i0 = max((g.y - root.y) // MAP_CELL, 0)
        i1 = min((g.y + g.h - 1 - root.y) // MAP_CELL, MAP_CELLS - 1)
        if j1 < j0 or i1 < i0:
            continue
        region_w = pmap.widths[i0 : i1 + 1, j0 : j1 + 1]
        region_h = pmap.heights[i0 : i1 + 1, j0 : j1 + 1]
        np.minimum(region_w, g.w, out=region_w)
        np.minimum(region_h, g.h, out=region_h)

    cols = np.arange(MAP_CELLS) * MAP_CELL + root.x
    rows = np.arange(MAP_CELLS) * MAP_CELL + root.y
    outside = (cols[None, :] + MAP_CELL > frame_width) | (rows[:, None] + MAP_CELL > frame_height)
    pmap.widths[outside] = MAP_SENTINEL
    pmap.heights[outside] = MAP_SENTINEL
    return pmap


def max_sz_lookup(maps, cu: CuGeometry) -> int:
    """Largest CU dimension recorded under `cu`'s footprint in the given maps.

    Sentinel cells are ignored; if nothing valid overlaps, returns 128, which
    downstream treats as "no information, search everything".
    """
    maps = list(maps)
    if not maps:
        return MAP_DISABLED
    best = 0
    for pmap in maps:
        j0 = (cu.x - pmap.ctu_x) // MAP_CELL
        j1 = (cu.x + cu.w - 1 - pmap.ctu_x) // MAP_CELL
        i0 = (cu.y - pmap.ctu_y) // MAP_CELL
        i1 = (cu.y + cu.h - 1 - pmap.ctu_y) // MAP_CELL
        if i0 < 0 or j0 < 0 or i1 >= MAP_CELLS or j1 >= MAP_CELLS:
            raise ValueError(
                f"cu footprint {cu.footprint()} outside CTU at ({pmap.ctu_x}, {pmap.ctu_y})"
            )
        region = np.maximum(
            pmap.widths[i0 : i1 + 1, j0 : j1 + 1],
            pmap.heights[i0 : i1 + 1, j0 : j1 + 1],
        )
        best = max(best, int(region.max()))
    return best if best > MAP_SENTINEL else MAP_DISABLED


def dump_maps(maps_by_poc: dict[int, list[PartitionMap]]) -> str:
    """Text dump: per CTU a "CTU x y poc" header, then 256 widths, then 256 heights."""
    lines = []
    for poc in sorted(maps_by_poc):
        for pmap in maps_by_poc[poc]:
            lines.append(f"CTU {pmap.ctu_x} {pmap.ctu_y} {poc}")
            lines.append(" ".join(str(v) for v in pmap.flat_widths()))
            lines.append(" ".join(str(v) for v in pmap.flat_heights()))
    return "\n".join(lines) + "\n"

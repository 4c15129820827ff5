"""RD partition search over CTUs: exhaustive baseline and the map-guided
early-termination searcher, plus the closed-loop frame/sequence encode driver.

Both searchers walk the same split-state DAG (enumerated once per CTU shape
and cached).  A state is (x, y, w, h, qt_depth, mtt_depth, in_mtt); distinct
paths reaching the same state share one evaluation, so node counts below mean
unique evaluations.  Leaf (non-split) costs are batched per block size: motion
runs as a lockstep three-step search backed by per-displacement summed-area
tables of absolute differences, which reproduces the scalar search in
`codec.predict` exactly while evaluating hundreds of blocks at once.

The map-guided searcher derives a per-CU bound from collocated partition maps
of its reference frames: CUs larger than the recorded maximum size must split
without costing NS, and recursion stops two size halvings below that maximum.
A recorded maximum of 128 means "no information" and disables both rules.

Frames must be encoded in schedule order (references first).  Within a frame,
CTU searches are independent and share only immutable inputs, so results do
not depend on evaluation order; counters aggregate associatively.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .codec import (
    MOTION_CLAMP,
    SEARCH_RADII,
    SIGNAL_BITS,
    QuantizerParams,
    RdCost,
    golomb_bits,
    hadamard_forward,
    hadamard_inverse,
)
from .frame_io import FrameBuffer, psnr
from .gop import FrameCoding, build_schedule
from .qtmt import (
    CTU_SIZE,
    MAP_DISABLED,
    MODE_ORDER,
    CuGeometry,
    PartitionMap,
    PartitionTree,
    SplitMode,
    apply_split,
    legal_splits,
    record_map,
)

EXHAUSTIVE = "exhaustive"
ETRF = "etrf"
SEARCHERS = (EXHAUSTIVE, ETRF)


@dataclass(frozen=True)
class EtrfBound:
    """Per-CU search bound from reference partition maps.

    min_allowed = max(max_sz / 4, 4): two size halvings below the recorded
    maximum.  Early termination stays inactive for max_sz <= 16 (the start
    point is already low) and for max_sz = 128 (no usable map information,
    so nothing may be pruned).
    """

    max_sz: int

    @property
    def min_allowed(self) -> int:
        return max(self.max_sz // 4, 4)

    @property
    def early_skip_active(self) -> bool:
        return 16 < self.max_sz < MAP_DISABLED


@dataclass
class SearchStats:
    """Instrumentation counters for one search scope (CTU, frame, or run).

    rd_nodes counts unique CUs whose non-split cost was evaluated.
    skipped_ns counts unique CUs whose non-split evaluation was pruned by the
    size bound; terminated counts states whose recursion was cut at the depth
    margin; fallbacks counts states where pruning was bypassed because no
    split was legal.
    """

    rd_nodes: int = 0
    skipped_ns: int = 0
    terminated: int = 0
    fallbacks: int = 0
    wall_time: float = 0.0
    evaluated_nodes: set | None = None

    def add(self, other: "SearchStats"):
        self.rd_nodes += other.rd_nodes
        self.skipped_ns += other.skipped_ns
        self.terminated += other.terminated
        self.fallbacks += other.fallbacks
        self.wall_time += other.wall_time


@dataclass
class FrameResult:
    poc: int
    layer: int
    total_rate: int
    psnr_db: float
    reconstruction: FrameBuffer
    maps: list[PartitionMap]
    stats: SearchStats
    trees: list[PartitionTree] | None = None  # kept only on request


@dataclass
class QpRun:
    """One sequence encode at one QP."""

    qp: int
    rate_bits: int
    psnr_db: float  # mean frame PSNR
    rd_nodes: int
    wall_seconds: float
    frames: list[FrameResult]


@dataclass
class RunResult:
    searcher: str
    qp_runs: list[QpRun]


# ---------------------------------------------------------------------------
# Split-state DAG templates (cached per CTU shape)


@dataclass
class _State:
    x: int
    y: int
    w: int
    h: int
    qt_depth: int
    mtt_depth: int
    in_mtt: bool
    straddle: bool
    geo_id: int  # index into template geometry table, -1 when straddling
    # (mode, ordered children) where each child is ('s', state_id) for an
    # in-frame child or ('o', CuGeometry) for one fully past the frame edge
    edges: list = field(default_factory=list)


class _Template:
    """Reachable states and split edges for one root shape, relative coords."""

    def __init__(self, root: CuGeometry, vis_w: int, vis_h: int, allowed_modes):
        self.vis_w = vis_w
        self.vis_h = vis_h
        self.states: list[_State] = []
        self.geos: list[tuple[int, int, int, int]] = []
        self._state_ids: dict = {}
        self._geo_ids: dict = {}
        self.allowed_modes = allowed_modes
        self.root_id = self._visit(root)
        self._prune_infeasible()
        self._collect_reachable()
        # children strictly shrink, so ascending area orders children first
        self.topo = sorted(range(len(self.states)), key=lambda i: self.states[i].w * self.states[i].h)

    def _prune_infeasible(self):
        """Drop split choices that cannot be completed at the frame boundary.

        A CU past the frame edge must keep splitting until every in-frame
        descendant is fully inside; a chain that exhausts the multi-type
        budget while still straddling is not a valid choice, so the edge
        leading into it is removed (bottom-up, children first)."""
        feasible = [True] * len(self.states)
        for sid in sorted(range(len(self.states)), key=lambda i: self.states[i].w * self.states[i].h):
            st = self.states[sid]
            st.edges = [
                (mode, children)
                for mode, children in st.edges
                if all(feasible[p] for k, p in children if k == "s")
            ]
            if st.straddle and not st.edges:
                feasible[sid] = False
        if not feasible[self.root_id]:
            raise AssertionError("root cannot be partitioned within the frame")

    def _collect_reachable(self):
        """Drop states orphaned by the boundary split preference (they were
        enumerated before their only incoming edge was filtered away)."""
        keep = set()
        stack = [self.root_id]
        while stack:
            sid = stack.pop()
            if sid in keep:
                continue
            keep.add(sid)
            for _, children in self.states[sid].edges:
                for kind, payload in children:
                    if kind == "s":
                        stack.append(payload)
        if len(keep) == len(self.states):
            return
        order = sorted(keep)
        remap = {old: new for new, old in enumerate(order)}
        states = [self.states[old] for old in order]
        geo_ids = sorted({st.geo_id for st in states if st.geo_id >= 0})
        geo_remap = {old: new for new, old in enumerate(geo_ids)}
        for st in states:
            st.edges = [
                (mode, [(k, remap[p] if k == "s" else p) for k, p in children])
                for mode, children in st.edges
            ]
            if st.geo_id >= 0:
                st.geo_id = geo_remap[st.geo_id]
        self.states = states
        self.geos = [self.geos[old] for old in geo_ids]
        self.root_id = remap[self.root_id]
        self._state_ids = {}
        self._geo_ids = {}

    def _visit(self, cu: CuGeometry) -> int:
        key = (cu.x, cu.y, cu.w, cu.h, cu.qt_depth, cu.mtt_depth, cu.in_mtt)
        sid = self._state_ids.get(key)
        if sid is not None:
            return sid
        straddle = cu.x + cu.w > self.vis_w or cu.y + cu.h > self.vis_h
        geo_id = -1
        if not straddle:
            gkey = (cu.x, cu.y, cu.w, cu.h)
            geo_id = self._geo_ids.get(gkey)
            if geo_id is None:
                geo_id = len(self.geos)
                self._geo_ids[gkey] = geo_id
                self.geos.append(gkey)
        state = _State(cu.x, cu.y, cu.w, cu.h, cu.qt_depth, cu.mtt_depth, cu.in_mtt, straddle, geo_id)
        sid = len(self.states)
        self._state_ids[key] = sid
        self.states.append(state)

        edges = []
        for mode in MODE_ORDER[1:]:
            if mode not in legal_splits(cu):
                continue
            if self.allowed_modes is not None and mode not in self.allowed_modes:
                continue
            children = []
            clean = True
            for child in apply_split(cu, mode):
                if child.x >= self.vis_w or child.y >= self.vis_h:
                    children.append(("o", child))
                    continue
                cid = self._visit(child)
                children.append(("s", cid))
                if self.states[cid].straddle:
                    clean = False
            edges.append((mode, children, clean))
        if straddle:
            # Boundary CUs may not stay unsplit; prefer splits whose in-frame
            # children land fully inside when any such split exists.
            if any(clean for _, _, clean in edges):
                edges = [e for e in edges if e[2]]
        state.edges = [(mode, children) for mode, children, _ in edges]
        return sid


_template_cache: dict = {}


def _get_template(root: CuGeometry, vis_w: int, vis_h: int, allowed_modes) -> _Template:
    key = (root.w, root.h, root.qt_depth, root.mtt_depth, root.in_mtt, vis_w, vis_h, allowed_modes)
    tpl = _template_cache.get(key)
    if tpl is None:
        rel_root = CuGeometry(0, 0, root.w, root.h, root.qt_depth, root.mtt_depth, root.in_mtt)
        tpl = _Template(rel_root, vis_w, vis_h, allowed_modes)
        _template_cache[key] = tpl
    return tpl


# ---------------------------------------------------------------------------
# Batched leaf-cost evaluation


class _FrameContext:
    """Per-(frame, qp) evaluation context shared across that frame's CTUs."""

    def __init__(self, original: FrameBuffer, refs: list[FrameBuffer], qp: int, ref_pocs=None):
        self.original = original
        self.refs = refs
        self.ref_pocs = list(ref_pocs) if ref_pocs is not None else list(range(len(refs)))
        self.qp = qp
        self.params = QuantizerParams(qp)
        self.width = original.width
        self.height = original.height
        self._padded_refs = [np.pad(r.samples, MOTION_CLAMP, mode="edge") for r in refs]
        self._ref_windows: dict = {}

    def ref_window_view(self, ref_idx: int, h: int, w: int):
        key = (ref_idx, h, w)
        view = self._ref_windows.get(key)
        if view is None:
            view = sliding_window_view(self.refs[ref_idx].samples, (h, w))
            self._ref_windows[key] = view
        return view


class _SadTables:
    """Per-displacement summed-area tables of |original - shifted reference|
    over one CTU's visible extent.  sad(block, d) becomes four lookups.

    CU coordinates and sizes are always multiples of 4, so the tables are
    binned into 4x4 cells first; queries stay exact."""

    BIN = 4

    def __init__(self, ctx: _FrameContext, ctu_x: int, ctu_y: int, vis_w: int, vis_h: int):
        self.ctu_x = ctu_x
        self.ctu_y = ctu_y
        span = 2 * MOTION_CLAMP + 1
        bin_ = self.BIN
        o_block = ctx.original.samples[ctu_y : ctu_y + vis_h, ctu_x : ctu_x + vis_w]
        self.tables = []
        for padded in ctx._padded_refs:
            rows = padded[ctu_y : ctu_y + vis_h + span - 1, ctu_x : ctu_x + vis_w + span - 1]
            shifted = sliding_window_view(rows, (vis_h, vis_w))  # (span, span, vis_h, vis_w)
            # |a - b| for uint8 without widening: max - min
            diff = np.maximum(o_block[None, None], shifted) - np.minimum(o_block[None, None], shifted)
            cols = diff.reshape(span, span, vis_h, vis_w // bin_, bin_).sum(axis=4, dtype=np.int32)
            binned = cols.reshape(span, span, vis_h // bin_, bin_, vis_w // bin_).sum(axis=3)
            sat = np.zeros((span, span, vis_h // bin_ + 1, vis_w // bin_ + 1), dtype=np.int32)
            sat[:, :, 1:, 1:] = binned.cumsum(axis=2).cumsum(axis=3)
            self.tables.append(sat)

    def sad(self, ref_idx: int, rel_x, rel_y, w, h, dx, dy):
        """Vectorized SAD of blocks at CTU-relative (rel_x, rel_y) displaced by (dx, dy)."""
        sat = self.tables[ref_idx]
        di = dy + MOTION_CLAMP
        dj = dx + MOTION_CLAMP
        bin_ = self.BIN
        y0, y1 = rel_y // bin_, (rel_y + h) // bin_
        x0, x1 = rel_x // bin_, (rel_x + w) // bin_
        return (
            sat[di, dj, y1, x1]
            - sat[di, dj, y0, x1]
            - sat[di, dj, y1, x0]
            + sat[di, dj, y0, x0]
        )


def _pack_tie_key(dx, dy):
    # lexicographic (|dx|+|dy|, dy, dx) packed into one integer
    return (np.abs(dx) + np.abs(dy)) * 1024 + (dy + MOTION_CLAMP) * 32 + (dx + MOTION_CLAMP)


def _lockstep_motion(ctx: _FrameContext, sads: _SadTables, xs, ys, ws, hs):
    """Three-step search for many blocks (mixed sizes) at once.

    Mirrors `codec.three_step_search` decision-for-decision: same radii, the
    same clipping to the valid displacement window, the same
    (sad, |dx|+|dy|, dy, dx) ordering, and references merged by ascending
    index on full ties.
    """
    num = len(xs)
    rel_x = xs - sads.ctu_x
    rel_y = ys - sads.ctu_y
    lo_x = np.maximum(-MOTION_CLAMP, -xs)
    hi_x = np.minimum(MOTION_CLAMP, ctx.width - ws - xs)
    lo_y = np.maximum(-MOTION_CLAMP, -ys)
    hi_y = np.minimum(MOTION_CLAMP, ctx.height - hs - ys)

    best_sad = None
    best_key = None
    best_dx = best_dy = None
    best_ref = None
    for ref_idx in range(len(ctx.refs)):
        zero = np.zeros(num, dtype=np.int64)
        sad = sads.sad(ref_idx, rel_x, rel_y, ws, hs, zero, zero).astype(np.int64)
        key = np.full(num, _pack_tie_key(0, 0), dtype=np.int64)
        dx = zero.copy()
        dy = zero.copy()
        for radius in SEARCH_RADII:
            cx = dx.copy()
            cy = dy.copy()
            for ody in (-radius, 0, radius):
                for odx in (-radius, 0, radius):
                    cand_dx = np.clip(cx + odx, lo_x, hi_x)
                    cand_dy = np.clip(cy + ody, lo_y, hi_y)
                    cand_sad = sads.sad(ref_idx, rel_x, rel_y, ws, hs, cand_dx, cand_dy).astype(np.int64)
                    cand_key = _pack_tie_key(cand_dx, cand_dy)
                    better = (cand_sad < sad) | ((cand_sad == sad) & (cand_key < key))
                    sad = np.where(better, cand_sad, sad)
                    key = np.where(better, cand_key, key)
                    dx = np.where(better, cand_dx, dx)
                    dy = np.where(better, cand_dy, dy)
        if best_sad is None:
            best_sad, best_key, best_dx, best_dy = sad, key, dx, dy
            best_ref = np.zeros(num, dtype=np.int64)
        else:
            better = (sad < best_sad) | ((sad == best_sad) & (key < best_key))
            best_sad = np.where(better, sad, best_sad)
            best_key = np.where(better, key, best_key)
            best_dx = np.where(better, dx, best_dx)
            best_dy = np.where(better, dy, best_dy)
            best_ref = np.where(better, ref_idx, best_ref)
    return best_dx, best_dy, best_ref


class _LeafCosts:
    """Non-split coding results for the evaluated geometries of one CTU.

    dist/rate/motion live in dense arrays indexed by geometry id; the
    reconstructions stay stacked per size class and are fetched lazily for
    the few leaves the chosen tree actually uses."""

    def __init__(self, n_geos: int):
        self.dist = np.zeros(n_geos, dtype=np.int64)
        self.rate = np.zeros(n_geos, dtype=np.int64)
        self.dx = np.zeros(n_geos, dtype=np.int64)
        self.dy = np.zeros(n_geos, dtype=np.int64)
        self.ref_sel = np.full(n_geos, -1, dtype=np.int64)  # -1 = intra
        self._stacks: list[np.ndarray] = []
        self._stack_of = np.full(n_geos, -1, dtype=np.int64)
        self._row_of = np.zeros(n_geos, dtype=np.int64)

    def recon(self, gid: int) -> np.ndarray:
        return self._stacks[self._stack_of[gid]][self._row_of[gid]]


def _evaluate_leaves(
    ctx: _FrameContext,
    template: _Template,
    ctu_x: int,
    ctu_y: int,
    geo_ids,
    sads: _SadTables | None,
) -> _LeafCosts:
    out = _LeafCosts(len(template.geos))
    if not geo_ids:
        return out
    geo_sel = np.array(sorted(geo_ids), dtype=np.int64)
    geos = np.array([template.geos[g] for g in geo_sel], dtype=np.int64)
    all_xs = geos[:, 0] + ctu_x
    all_ys = geos[:, 1] + ctu_y
    all_ws = geos[:, 2]
    all_hs = geos[:, 3]
    num_refs = len(ctx.refs)
    if num_refs:
        all_dx, all_dy, all_ref = _lockstep_motion(ctx, sads, all_xs, all_ys, all_ws, all_hs)
        out.dx[geo_sel] = all_dx
        out.dy[geo_sel] = all_dy
        out.ref_sel[geo_sel] = all_ref

    orig = ctx.original.samples
    qstep = ctx.params.qstep
    by_size: dict[tuple[int, int], list[int]] = {}
    for row in range(len(geo_sel)):
        by_size.setdefault((int(all_ws[row]), int(all_hs[row])), []).append(row)

    for (w, h), rows in sorted(by_size.items()):
        sel = np.array(rows, dtype=np.int64)
        gids = geo_sel[sel]
        xs, ys = all_xs[sel], all_ys[sel]
        blocks = sliding_window_view(orig, (h, w))[ys, xs].astype(np.int32)

        if num_refs:
            dxs, dys, ref_sel = all_dx[sel], all_dy[sel], all_ref[sel]
            pred = np.empty((len(sel), h, w), dtype=np.uint8)
            for ref_idx in range(num_refs):
                mask = ref_sel == ref_idx
                if not mask.any():
                    continue
                win = ctx.ref_window_view(ref_idx, h, w)
                pred[mask] = win[ys[mask] + dys[mask], xs[mask] + dxs[mask]]
            mv_rate = np.abs(dxs) + np.abs(dys) + (1 if num_refs == 2 else 0)
        else:
            level = np.rint(blocks.mean(axis=(1, 2)))
            pred = np.broadcast_to(
                level.astype(np.uint8)[:, None, None], (len(sel), h, w)
            )
            mv_rate = 0

        residual = blocks - pred.astype(np.int32)
        coeffs = hadamard_forward(residual)
        q = np.rint(coeffs / qstep)
        res_rate = golomb_bits(q).sum(axis=(1, 2))
        deq = hadamard_inverse(q * qstep)
        recon = np.clip(np.rint(pred.astype(np.float64) + deq), 0, 255).astype(np.uint8)
        dist = ((blocks - recon.astype(np.int64)) ** 2).sum(axis=(1, 2))

        out.dist[gids] = dist
        out.rate[gids] = res_rate + mv_rate + SIGNAL_BITS[SplitMode.NS]
        stack_id = len(out._stacks)
        out._stacks.append(recon)
        out._stack_of[gids] = stack_id
        out._row_of[gids] = np.arange(len(sel))
    return out


# ---------------------------------------------------------------------------
# Gated DAG search


def _combined_cell_max(ref_maps) -> np.ndarray:
    """Per-cell max of width/height over the collocated maps (0 = no info)."""
    combined = None
    for pmap in ref_maps:
        cell = np.maximum(pmap.widths, pmap.heights)
        combined = cell if combined is None else np.maximum(combined, cell)
    return combined


class _Gate:
    """Per-state pruning decisions for the map-guided searcher."""

    def __init__(self, template: _Template, ref_maps):
        self.template = template
        self.cells = _combined_cell_max(ref_maps)
        self._bounds: dict[int, EtrfBound] = {}
        self.skipped_geos: set[int] = set()
        self.terminated = 0
        self.fallbacks = 0

    def bound(self, geo_id: int) -> EtrfBound:
        b = self._bounds.get(geo_id)
        if b is None:
            gx, gy, gw, gh = self.template.geos[geo_id]
            region = self.cells[gy // 8 : (gy + gh - 1) // 8 + 1, gx // 8 : (gx + gw - 1) // 8 + 1]
            mx = int(region.max())
            b = EtrfBound(mx if mx > 0 else MAP_DISABLED)
            self._bounds[geo_id] = b
        return b

    def decide(self, state: _State) -> tuple[bool, list]:
        """Returns (evaluate_ns, active_edges) for one state."""
        if state.straddle:
            # boundary rule outranks the gate: the CU cannot stay unsplit and
            # must keep every split option, or it could end up uncoded
            return False, state.edges
        b = self.bound(state.geo_id)
        maxdim = max(state.w, state.h)
        if b.early_skip_active and maxdim <= b.min_allowed:
            if state.edges:
                self.terminated += 1
            return True, []
        if maxdim > b.max_sz:
            if state.edges:
                self.skipped_geos.add(state.geo_id)
                return False, state.edges
            self.fallbacks += 1  # nothing legal to split: code the CU anyway
            return True, []
        return True, state.edges


def _search_root(
    ctx: _FrameContext,
    root: CuGeometry,
    ref_maps,
    allowed_modes=None,
    collect_nodes: bool = False,
    canvas: np.ndarray | None = None,
):
    t0 = time.perf_counter()
    vis_w = min(root.w, ctx.width - root.x)
    vis_h = min(root.h, ctx.height - root.y)
    if vis_w <= 0 or vis_h <= 0:
        raise ValueError(f"root at ({root.x}, {root.y}) lies outside the frame")
    template = _get_template(root, vis_w, vis_h, allowed_modes)
    states = template.states

    n_states = len(states)
    gate = _Gate(template, ref_maps) if ref_maps is not None else None
    if gate is None:
        reachable = [True] * n_states
        ns_eval = [not st.straddle for st in states]
        active = [st.edges for st in states]
    else:
        reachable = [False] * n_states
        ns_eval = [False] * n_states
        active: list = [()] * n_states
        stack = [template.root_id]
        while stack:
            sid = stack.pop()
            if reachable[sid]:
                continue
            reachable[sid] = True
            ns, edges = gate.decide(states[sid])
            ns_eval[sid] = ns
            active[sid] = edges
            for _, children in edges:
                for kind, payload in children:
                    if kind == "s" and not reachable[payload]:
                        stack.append(payload)

    eval_geos = sorted(
        {states[sid].geo_id for sid in range(n_states) if reachable[sid] and ns_eval[sid]}
    )
    sads = _SadTables(ctx, root.x, root.y, vis_w, vis_h) if (ctx.refs and eval_geos) else None
    costs = _evaluate_leaves(ctx, template, root.x, root.y, eval_geos, sads)
    leaf_dist = costs.dist.tolist()
    leaf_rate = costs.rate.tolist()

    lam = ctx.params.lam
    best: list = [None] * n_states
    for sid in template.topo:
        if not reachable[sid]:
            continue
        st = states[sid]
        chosen = None
        if ns_eval[sid]:
            d, r = leaf_dist[st.geo_id], leaf_rate[st.geo_id]
            chosen = (d + lam * r, d, r, SplitMode.NS, None)
        for mode, children in active[sid]:
            d = 0
            r = SIGNAL_BITS[mode]
            for kind, payload in children:
                if kind == "s":
                    cb = best[payload]
                    d += cb[1]
                    r += cb[2]
            j = d + lam * r
            if chosen is None or j < chosen[0]:
                chosen = (j, d, r, mode, children)
        if chosen is None:
            raise AssertionError(f"state {st} produced no candidate")
        best[sid] = chosen

    def build(sid: int) -> PartitionTree:
        st = states[sid]
        geo = CuGeometry(
            st.x + root.x, st.y + root.y, st.w, st.h, st.qt_depth, st.mtt_depth, st.in_mtt
        )
        mode, children = best[sid][3], best[sid][4]
        if mode == SplitMode.NS:
            if canvas is not None:
                canvas[geo.y : geo.y + geo.h, geo.x : geo.x + geo.w] = costs.recon(st.geo_id)
            return PartitionTree(geo, SplitMode.NS)
        subtrees = []
        for kind, payload in children:
            if kind == "s":
                subtrees.append(build(payload))
            else:
                out_geo = CuGeometry(
                    payload.x + root.x,
                    payload.y + root.y,
                    payload.w,
                    payload.h,
                    payload.qt_depth,
                    payload.mtt_depth,
                    payload.in_mtt,
                )
                subtrees.append(PartitionTree(out_geo, SplitMode.NS))
        return PartitionTree(geo, mode, tuple(subtrees))

    tree = build(template.root_id)

    stats = SearchStats(rd_nodes=len(eval_geos))
    if gate is not None:
        stats.skipped_ns = len(gate.skipped_geos - set(eval_geos))
        stats.terminated = gate.terminated
        stats.fallbacks = gate.fallbacks
    if collect_nodes:
        nodes = set()
        for gid in eval_geos:
            gx, gy, gw, gh = template.geos[gid]
            nodes.add((gx + root.x, gy + root.y, gw, gh, "NS"))
        for sid in range(n_states):
            if not reachable[sid]:
                continue
            st = states[sid]
            for mode, _ in active[sid]:
                nodes.add((st.x + root.x, st.y + root.y, st.w, st.h, mode.value))
        stats.evaluated_nodes = nodes

    root_best = best[template.root_id]
    cost = RdCost.of(root_best[1], root_best[2], lam)
    stats.wall_time = time.perf_counter() - t0
    return tree, cost, stats


def _check_ctu_origin(origin):
    x, y = origin
    if x % CTU_SIZE or y % CTU_SIZE:
        raise ValueError(f"CTU origin {origin} is not aligned to {CTU_SIZE}")
    return CuGeometry(x, y, CTU_SIZE, CTU_SIZE)


def search_ctu_exhaustive(
    ctu_origin,
    original: FrameBuffer,
    refs: list[FrameBuffer],
    qp: int,
    *,
    ref_pocs=None,
    collect_nodes: bool = False,
):
    """Full RD search of one CTU; returns (tree, cost, stats)."""
    root = _check_ctu_origin(ctu_origin)
    ctx = _FrameContext(original, refs, qp, ref_pocs)
    return _search_root(ctx, root, None, collect_nodes=collect_nodes)


def search_ctu_etrf(
    ctu_origin,
    original: FrameBuffer,
    refs: list[FrameBuffer],
    qp: int,
    ref_maps,
    *,
    ref_pocs=None,
    collect_nodes: bool = False,
):
    """Map-guided RD search of one CTU; returns (tree, cost, stats)."""
    root = _check_ctu_origin(ctu_origin)
    ctx = _FrameContext(original, refs, qp, ref_pocs)
    return _search_root(ctx, root, list(ref_maps), collect_nodes=collect_nodes)


def search_region_exhaustive(
    root: CuGeometry,
    original: FrameBuffer,
    refs: list[FrameBuffer],
    qp: int,
    *,
    allowed_modes=None,
    collect_nodes: bool = False,
):
    """Full RD search from an arbitrary root CU (test and oracle harness)."""
    ctx = _FrameContext(original, refs, qp, None)
    modes = None if allowed_modes is None else frozenset(allowed_modes)
    return _search_root(ctx, root, None, allowed_modes=modes, collect_nodes=collect_nodes)


# ---------------------------------------------------------------------------
# Frame and sequence encoding


def _ctu_grid(width: int, height: int):
    return [(x, y) for y in range(0, height, CTU_SIZE) for x in range(0, width, CTU_SIZE)]


def encode_frame(
    fc: FrameCoding,
    sequence,
    recon_store: dict,
    maps_store: dict,
    qp: int,
    searcher: str = EXHAUSTIVE,
    collect_nodes: bool = False,
    keep_trees: bool = False,
) -> FrameResult:
    """Encode one frame per its schedule entry, closing the loop through
    previously reconstructed references."""
    original = sequence.frames[fc.poc]
    try:
        refs = [recon_store[p] for p in fc.pred_refs]
    except KeyError as missing:
        raise RuntimeError(
            f"frame {fc.poc} needs reconstruction of {missing.args[0]} before encoding"
        ) from None
    use_maps = searcher == ETRF and fc.layer >= 2 and fc.etrf_refs
    ctx = _FrameContext(original, refs, qp, ref_pocs=list(fc.pred_refs))

    canvas = np.empty((original.height, original.width), dtype=np.uint8)
    stats = SearchStats()
    if collect_nodes:
        stats.evaluated_nodes = set()
    total_rate = 0
    frame_maps = []
    trees = [] if keep_trees else None
    t0 = time.perf_counter()
    for idx, (cx, cy) in enumerate(_ctu_grid(original.width, original.height)):
        root = CuGeometry(cx, cy, CTU_SIZE, CTU_SIZE)
        ref_maps = [maps_store[p][idx] for p in fc.etrf_refs] if use_maps else None
        tree, cost, ctu_stats = _search_root(
            ctx, root, ref_maps, collect_nodes=collect_nodes, canvas=canvas
        )
        total_rate += cost.rate
        stats.add(ctu_stats)
        if collect_nodes:
            stats.evaluated_nodes |= ctu_stats.evaluated_nodes
        if keep_trees:
            trees.append(tree)
        frame_maps.append(record_map(tree, original.width, original.height))
    stats.wall_time = time.perf_counter() - t0

    recon = FrameBuffer(original.width, original.height, canvas)
    return FrameResult(
        poc=fc.poc,
        layer=fc.layer,
        total_rate=total_rate,
        psnr_db=psnr(original, recon),
        reconstruction=recon,
        maps=frame_maps,
        stats=stats,
        trees=trees,
    )


def encode_sequence(
    sequence, searcher: str, qps, collect_nodes: bool = False, keep_trees: bool = False
) -> RunResult:
    """Encode the whole sequence once per QP; returns per-QP outcomes."""
    if searcher not in SEARCHERS:
        raise ValueError(f"unknown searcher {searcher!r}, expected one of {SEARCHERS}")
    schedule = build_schedule(len(sequence.frames))
    qp_runs = []
    for qp in qps:
        recon_store: dict[int, FrameBuffer] = {}
        maps_store: dict[int, list[PartitionMap]] = {}
        results: dict[int, FrameResult] = {}
        for fc in schedule.encode_order():
            fr = encode_frame(
                fc, sequence, recon_store, maps_store, qp, searcher, collect_nodes, keep_trees
            )
            recon_store[fc.poc] = fr.reconstruction
            maps_store[fc.poc] = fr.maps
            results[fc.poc] = fr
        frames = [results[p] for p in sorted(results)]
        qp_runs.append(
            QpRun(
                qp=qp,
                rate_bits=sum(f.total_rate for f in frames),
                psnr_db=float(np.mean([f.psnr_db for f in frames])),
                rd_nodes=sum(f.stats.rd_nodes for f in frames),
                wall_seconds=sum(f.stats.wall_time for f in frames),
                frames=frames,
            )
        )
    return RunResult(searcher=searcher, qp_runs=qp_runs)

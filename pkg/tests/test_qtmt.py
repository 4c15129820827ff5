import numpy as np
import pytest

from conftest import random_tree
from qtmtlab.qtmt import (
    CuGeometry,
    PartitionMap,
    SplitMode,
    apply_split,
    dump_maps,
    legal_splits,
    max_sz_lookup,
    record_map,
)


def test_root_admits_only_ns_and_qt():
    root = CuGeometry(0, 0, 128, 128)
    assert legal_splits(root) == {SplitMode.NS, SplitMode.QT}


def test_legal_splits_8x8():
    cu = CuGeometry(0, 0, 8, 8, qt_depth=4)
    assert legal_splits(cu) == {SplitMode.NS, SplitMode.BTH, SplitMode.BTV}


def test_legal_splits_4x8():
    cu = CuGeometry(0, 0, 4, 8, mtt_depth=1, in_mtt=True)
    assert legal_splits(cu) == {SplitMode.NS, SplitMode.BTH}


def test_legal_splits_respects_mtt_budget():
    cu = CuGeometry(0, 0, 32, 32, mtt_depth=3, in_mtt=True)
    assert legal_splits(cu) == {SplitMode.NS}


def test_qt_forbidden_after_mtt():
    cu = CuGeometry(0, 0, 32, 32, mtt_depth=1, in_mtt=True)
    assert SplitMode.QT not in legal_splits(cu)


def test_apply_qt_offsets():
    children = apply_split(CuGeometry(0, 0, 64, 64, qt_depth=1), SplitMode.QT)
    assert [(c.x, c.y, c.w, c.h) for c in children] == [
        (0, 0, 32, 32), (32, 0, 32, 32), (0, 32, 32, 32), (32, 32, 32, 32)
    ]
    assert all(c.qt_depth == 2 and not c.in_mtt for c in children)


def test_apply_tth_ratio():
    children = apply_split(CuGeometry(0, 0, 32, 32, qt_depth=2), SplitMode.TTH)
    assert [(c.w, c.h, c.y) for c in children] == [(32, 8, 0), (32, 16, 8), (32, 8, 24)]
    assert all(c.in_mtt and c.mtt_depth == 1 for c in children)


def test_apply_btv_flags():
    children = apply_split(CuGeometry(0, 0, 16, 8, qt_depth=3), SplitMode.BTV)
    assert [(c.w, c.h) for c in children] == [(8, 8), (8, 8)]
    assert all(c.in_mtt and c.mtt_depth == 1 for c in children)


def test_apply_split_rejects_illegal():
    with pytest.raises(ValueError):
        apply_split(CuGeometry(0, 0, 128, 128), SplitMode.BTH)
    with pytest.raises(ValueError):
        apply_split(CuGeometry(0, 0, 64, 64), SplitMode.NS)


def test_random_trees_tile_exactly(rng):
    for seed in range(20):
        tree = random_tree(CuGeometry(0, 0, 128, 128), np.random.default_rng(seed))
        grid = np.zeros((128, 128), dtype=np.int32)
        for leaf in tree.leaves():
            g = leaf.geometry
            grid[g.y : g.y + g.h, g.x : g.x + g.w] += 1
        assert grid.min() == 1 and grid.max() == 1


def test_legality_closure(rng):
    for seed in range(20):
        tree = random_tree(CuGeometry(0, 0, 128, 128), np.random.default_rng(seed + 100))
        stack = [tree]
        while stack:
            node = stack.pop()
            g = node.geometry
            assert min(g.w, g.h) >= 4
            assert g.qt_depth <= 5 and g.mtt_depth <= 3
            if node.split == SplitMode.QT:
                assert not g.in_mtt
            expected = {SplitMode.QT: 4, SplitMode.BTH: 2, SplitMode.BTV: 2,
                        SplitMode.TTH: 3, SplitMode.TTV: 3, SplitMode.NS: 0}
            assert len(node.children) == expected[node.split]
            stack.extend(node.children)


def ns_tree(cu):
    from qtmtlab.qtmt import PartitionTree

    return PartitionTree(cu, SplitMode.NS)


def split_tree(cu, mode, children):
    from qtmtlab.qtmt import PartitionTree

    return PartitionTree(cu, mode, tuple(children))


def test_record_map_single_leaf():
    tree = ns_tree(CuGeometry(0, 0, 128, 128))
    pmap = record_map(tree, 128, 128)
    assert np.all(pmap.widths == 128) and np.all(pmap.heights == 128)
    assert len(pmap.flat_widths()) == 256 and len(pmap.flat_heights()) == 256


def test_record_map_qt_then_ns():
    root = CuGeometry(0, 0, 128, 128)
    children = [ns_tree(c) for c in apply_split(root, SplitMode.QT)]
    pmap = record_map(split_tree(root, SplitMode.QT, children), 128, 128)
    assert np.all(pmap.widths == 64) and np.all(pmap.heights == 64)


def test_record_map_qt_with_bth_quadrant():
    root = CuGeometry(0, 0, 128, 128)
    q = apply_split(root, SplitMode.QT)
    tl = split_tree(q[0], SplitMode.BTH, [ns_tree(c) for c in apply_split(q[0], SplitMode.BTH)])
    rest = [ns_tree(c) for c in q[1:]]
    pmap = record_map(split_tree(root, SplitMode.QT, [tl] + rest), 128, 128)
    assert np.all(pmap.widths[:8, :8] == 64) and np.all(pmap.heights[:8, :8] == 32)
    assert np.all(pmap.widths[:8, 8:] == 64) and np.all(pmap.heights[:8, 8:] == 64)


def test_record_map_minimum_rule_for_4px_leaves():
    # 8x8 CU split into 4x8 halves, left half split into 4x4s: the covering
    # cell must store the minimum leaf width/height among its leaves.
    cu = CuGeometry(0, 0, 8, 8, qt_depth=4)
    left, right = apply_split(cu, SplitMode.BTV)
    lt, lb = apply_split(left, SplitMode.BTH)
    tree = split_tree(
        cu, SplitMode.BTV,
        [split_tree(left, SplitMode.BTH, [ns_tree(lt), ns_tree(lb)]), ns_tree(right)],
    )
    pmap = record_map(tree, 128, 128)
    assert pmap.widths[0, 0] == 4 and pmap.heights[0, 0] == 4


def test_record_map_boundary_sentinels():
    tree = ns_tree(CuGeometry(128, 0, 128, 128))
    pmap = record_map(tree, 136, 128)  # only one 8-pixel column in frame
    assert np.all(pmap.widths[:, 0] == 128)
    assert np.all(pmap.widths[:, 1:] == 0) and np.all(pmap.heights[:, 1:] == 0)


def point_query_map(tree, frame_w, frame_h):
    """Independent per-cell oracle: probe the four 4x4 sub-points of each
    cell, walk the tree for the covering leaf, and keep the minima."""
    root = tree.geometry
    widths = np.zeros((16, 16), dtype=np.int16)
    heights = np.zeros((16, 16), dtype=np.int16)

    def leaf_at(px, py):
        node = tree
        while node.split != SplitMode.NS:
            for child in node.children:
                g = child.geometry
                if g.x <= px < g.x + g.w and g.y <= py < g.y + g.h:
                    node = child
                    break
            else:
                raise AssertionError("point not covered")
        return node.geometry

    for i in range(16):
        for j in range(16):
            x0, y0 = root.x + 8 * j, root.y + 8 * i
            if x0 + 8 > frame_w or y0 + 8 > frame_h:
                continue
            leaves = {leaf_at(x0 + dx, y0 + dy) for dx in (0, 4) for dy in (0, 4)}
            widths[i, j] = min(g.w for g in leaves)
            heights[i, j] = min(g.h for g in leaves)
    return widths, heights


def test_record_map_matches_point_query_oracle():
    for seed in range(30):
        tree = random_tree(CuGeometry(0, 0, 128, 128), np.random.default_rng(seed + 500))
        pmap = record_map(tree, 128, 128)
        widths, heights = point_query_map(tree, 128, 128)
        assert np.array_equal(pmap.widths, widths)
        assert np.array_equal(pmap.heights, heights)


def uniform_map(w, h, ctu_x=0, ctu_y=0):
    pmap = PartitionMap(ctu_x=ctu_x, ctu_y=ctu_y)
    pmap.widths[:] = w
    pmap.heights[:] = h
    return pmap


def test_max_sz_uniform_64():
    maps = [uniform_map(64, 64), uniform_map(64, 64)]
    assert max_sz_lookup(maps, CuGeometry(0, 0, 128, 128)) == 64


def test_max_sz_mixed_cells():
    a = uniform_map(8, 16)
    b = uniform_map(32, 4)
    assert max_sz_lookup([a, b], CuGeometry(0, 0, 128, 128)) == 32


def test_max_sz_single_coarse_cell_dominates():
    a = uniform_map(4, 4)
    b = uniform_map(4, 4)
    b.widths[3, 3] = 128
    b.heights[3, 3] = 128
    assert max_sz_lookup([a, b], CuGeometry(0, 0, 128, 128)) == 128
    # outside that cell's footprint the coarse value is invisible
    assert max_sz_lookup([a, b], CuGeometry(64, 64, 64, 64)) == 4


def test_max_sz_all_sentinel_disables():
    pmap = PartitionMap(ctu_x=0, ctu_y=0)  # all zeros
    assert max_sz_lookup([pmap], CuGeometry(0, 0, 32, 32)) == 128


def test_max_sz_footprint_subsetting():
    pmap = uniform_map(8, 8)
    pmap.widths[0, 0] = 64
    assert max_sz_lookup([pmap], CuGeometry(0, 0, 8, 8)) == 64
    assert max_sz_lookup([pmap], CuGeometry(8, 8, 8, 8)) == 8


def test_max_sz_rejects_outside_footprint():
    pmap = uniform_map(8, 8)
    with pytest.raises(ValueError, match="outside"):
        max_sz_lookup([pmap], CuGeometry(120, 120, 16, 16))


def test_dump_maps_format():
    pmap = uniform_map(32, 16, ctu_x=128, ctu_y=0)
    text = dump_maps({7: [pmap]})
    lines = text.strip().splitlines()
    assert lines[0] == "CTU 128 0 7"
    assert len(lines) == 3
    assert len(lines[1].split()) == 256 and len(lines[2].split()) == 256
    assert set(lines[1].split()) == {"32"} and set(lines[2].split()) == {"16"}


def test_lookup_covers_leaf_dimensions_for_cell_sized_leaves():
    # For leaves no smaller than a map cell, every covered cell is exclusive
    # to that leaf, so looking the leaf's own footprint back up must report
    # at least its own size.  (Sub-cell leaves share cells and the stored
    # minima may legitimately be smaller.)
    for seed in range(20):
        tree = random_tree(CuGeometry(0, 0, 128, 128), np.random.default_rng(seed + 900))
        pmap = record_map(tree, 128, 128)
        for leaf in tree.leaves():
            g = leaf.geometry
            if min(g.w, g.h) >= 8:
                assert max_sz_lookup([pmap], g) >= max(g.w, g.h)

import pytest

from qtmtlab.gop import build_schedule, schedule_csv, temporal_layer

# Hand-enumerated layer pyramid for one GOP of 32 (display order 0..32):
# the key frame sits at layer 0, its midpoint at 1, quarter points at 2,
# and so on down to the odd positions at layer 5.
GOLDEN_LAYERS = {
    0: 0, 32: 0,
    16: 1,
    8: 2, 24: 2,
    4: 3, 12: 3, 20: 3, 28: 3,
    2: 4, 6: 4, 10: 4, 14: 4, 18: 4, 22: 4, 26: 4, 30: 4,
    1: 5, 3: 5, 5: 5, 7: 5, 9: 5, 11: 5, 13: 5, 15: 5,
    17: 5, 19: 5, 21: 5, 23: 5, 25: 5, 27: 5, 29: 5, 31: 5,
}


def test_temporal_layer_matches_golden_table():
    for poc, layer in GOLDEN_LAYERS.items():
        assert temporal_layer(poc) == layer, poc


def test_temporal_layer_periodic():
    for poc in range(33):
        assert temporal_layer(poc + 32) == temporal_layer(poc) or poc == 0
    assert temporal_layer(24) == 2


def test_temporal_layer_rejects_other_gop_sizes():
    with pytest.raises(ValueError, match="gop_size"):
        temporal_layer(3, gop_size=16)


def test_layer_histogram_per_gop():
    counts = {}
    for poc in range(1, 33):
        counts[temporal_layer(poc)] = counts.get(temporal_layer(poc), 0) + 1
    assert counts == {0: 1, 1: 1, 2: 2, 3: 4, 4: 8, 5: 16}


def test_schedule_reference_examples():
    sched = build_schedule(33)
    by_poc = {fc.poc: fc for fc in sched.entries}
    assert by_poc[9].layer == 5
    assert by_poc[9].pred_refs == (8, 10)
    assert by_poc[9].etrf_refs == (8, 10)
    assert by_poc[8].layer == 2
    assert by_poc[8].pred_refs == (0, 16)
    assert by_poc[8].etrf_refs == (0, 16)
    assert by_poc[16].layer == 1
    assert by_poc[16].pred_refs == (0, 32)
    assert by_poc[16].etrf_refs == ()
    assert by_poc[0].pred_refs == ()


def test_schedule_sequence_end_clipping():
    sched = build_schedule(2)
    fc = sched.entries[1]
    assert fc.poc == 1 and fc.layer == 5
    assert fc.pred_refs == (0,)
    assert fc.etrf_refs == (0,)


def test_schedule_topological_soundness():
    for num_frames in range(1, 201):
        sched = build_schedule(num_frames)
        ranks = [fc.encode_rank for fc in sched.entries]
        assert sorted(ranks) == list(range(num_frames))
        by_poc = {fc.poc: fc for fc in sched.entries}
        for fc in sched.entries:
            for ref in fc.pred_refs + fc.etrf_refs:
                assert by_poc[ref].layer < fc.layer
                assert by_poc[ref].encode_rank < fc.encode_rank


def test_etrf_reference_distances():
    sched = build_schedule(200)
    for fc in sched.entries:
        if fc.layer in (2, 3, 4, 5):
            dist = 2 ** (5 - fc.layer)
            assert fc.etrf_refs, fc
            for ref in fc.etrf_refs:
                assert abs(ref - fc.poc) == dist
        else:
            assert fc.etrf_refs == ()


def test_layer_major_encode_order_within_gop():
    sched = build_schedule(65)
    order = [fc.poc for fc in sched.encode_order()]
    assert order[0] == 0
    first_gop = [p for p in order if 1 <= p <= 32]
    layers = [temporal_layer(p) for p in first_gop]
    assert layers == sorted(layers)
    assert first_gop[0] == 32  # the next key frame leads its GOP


def test_schedule_csv_shape():
    text = schedule_csv(build_schedule(5))
    lines = text.strip().splitlines()
    assert lines[0] == "poc,layer,encode_rank,pred_refs,etrf_refs"
    assert len(lines) == 6
    assert lines[2].startswith("1,5,")


def test_build_schedule_rejects_empty():
    with pytest.raises(ValueError):
        build_schedule(0)

"""qtmtlab: a desk-scale QTMT block-partitioning rate-distortion laboratory.

A toy closed-loop luma coder with VVC-style recursive quad/binary/ternary
partitioning, an exhaustive RD search baseline, a reference-frame-map guided
pruned searcher, and the evaluation pipeline around them (Bjøntegaard deltas,
complexity scores, experiment reports).
"""

from .bd import BdResult, RdPoint, bd_delta, bd_rate, bd_ratio, bd_time
from .codec import CodedBlock, QuantizerParams, RdCost, predict, rd_cost_cu, transform_quant_rate
from .complexity import ComplexityScore, frame_energy, sequence_complexity
from .frame_io import FrameBuffer, VideoSequence, load_raw, load_y4m, psnr, write_y4m
from .gop import FrameCoding, GopSchedule, build_schedule, temporal_layer
from .qtmt import (
    CuGeometry,
    PartitionMap,
    PartitionTree,
    SplitMode,
    apply_split,
    legal_splits,
    max_sz_lookup,
    record_map,
)
from .search import (
    ETRF,
    EXHAUSTIVE,
    EtrfBound,
    FrameResult,
    RunResult,
    SearchStats,
    encode_frame,
    encode_sequence,
    search_ctu_etrf,
    search_ctu_exhaustive,
)

__version__ = "0.1.0"

__all__ = [
    "BdResult", "RdPoint", "bd_delta", "bd_rate", "bd_ratio", "bd_time",
    "CodedBlock", "QuantizerParams", "RdCost", "predict", "rd_cost_cu", "transform_quant_rate",
    "ComplexityScore", "frame_energy", "sequence_complexity",
    "FrameBuffer", "VideoSequence", "load_raw", "load_y4m", "psnr", "write_y4m",
    "FrameCoding", "GopSchedule", "build_schedule", "temporal_layer",
    "CuGeometry", "PartitionMap", "PartitionTree", "SplitMode",
    "apply_split", "legal_splits", "max_sz_lookup", "record_map",
    "ETRF", "EXHAUSTIVE", "EtrfBound", "FrameResult", "RunResult", "SearchStats",
    "encode_frame", "encode_sequence", "search_ctu_etrf", "search_ctu_exhaustive",
    "__version__",
]

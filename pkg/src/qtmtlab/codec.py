"""Prediction / transform / quantization / rate-estimation kernel.

Assigns a rate-distortion cost to any candidate CU against reconstructed
reference frames (closed loop).  Inter prediction is an integer-pel three-step
search clamped to +/-8; intra prediction is the block mean.  The residual goes
through a tiled 4x4 orthonormal Hadamard transform, uniform quantization, and
a signed exp-Golomb code-length model standing in for entropy coding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard

from .frame_io import FrameBuffer
from .qtmt import CuGeometry, SplitMode

MOTION_CLAMP = 8
SEARCH_RADII = (8, 4, 2, 1)

# Side-information bits charged when a CU signals its mode.
SIGNAL_BITS = {
    SplitMode.NS: 1,
    SplitMode.QT: 2,
    SplitMode.BTH: 3,
    SplitMode.BTV: 3,
    SplitMode.TTH: 4,
    SplitMode.TTV: 4,
}

_H4 = hadamard(4).astype(np.float64)  # symmetric, H @ H = 4 I


@dataclass(frozen=True)
class QuantizerParams:
    """QP with its derived quantizer step and Lagrange multiplier.

    qstep = 2^((qp-4)/6) and lam = 0.57 * 2^((qp-12)/3), so both rise
    strictly with qp.
    """

    qp: int

    def __post_init__(self):
        if not 0 <= self.qp <= 51:
            raise ValueError(f"qp must be in 0..51, got {self.qp}")

    @property
    def qstep(self) -> float:
        return 2.0 ** ((self.qp - 4) / 6.0)

    @property
    def lam(self) -> float:
        return 0.57 * 2.0 ** ((self.qp - 12) / 3.0)


@dataclass(frozen=True)
class RdCost:
    """Distortion (SSE), rate (bits), and j = distortion + lam * rate.

    Distortion and rate are exact integers; j is always recomputed from them
    so that identical (distortion, rate) totals give bit-identical costs no
    matter how a tree was assembled.
    """

    distortion: int
    rate: int
    j: float

    @classmethod
    def of(cls, distortion: int, rate: int, lam: float) -> "RdCost":
        return cls(distortion=distortion, rate=rate, j=distortion + lam * rate)


@dataclass(frozen=True)
class CodedBlock:
    geometry: CuGeometry
    reconstruction: np.ndarray  # (h, w) uint8
    cost: RdCost
    pred_ref_poc: int | None  # None = intra
    motion: tuple[int, int]  # (dx, dy) integer pixels


def motion_bounds(x: int, y: int, w: int, h: int, frame_w: int, frame_h: int):
    """Valid displacement window keeping the reference block inside the frame."""
    return (
        max(-MOTION_CLAMP, -x),
        min(MOTION_CLAMP, frame_w - w - x),
        max(-MOTION_CLAMP, -y),
        min(MOTION_CLAMP, frame_h - h - y),
    )


def _tie_key(dx: int, dy: int) -> tuple[int, int, int]:
    return (abs(dx) + abs(dy), dy, dx)


def three_step_search(sad_of, bounds) -> tuple[int, int, int]:
    """Shared three-step driver: radii 8/4/2/1 around zero motion.

    `sad_of(dx, dy)` evaluates one candidate; candidates outside `bounds`
    are clipped onto it.  Each step keeps the minimum of the running best and
    the 3x3 neighbourhood of the current centre, ordering ties by
    (|dx|+|dy|, dy, dx).  Returns (sad, dx, dy).
    """
    lo_x, hi_x, lo_y, hi_y = bounds
    best = (sad_of(0, 0), _tie_key(0, 0), 0, 0)
    for radius in SEARCH_RADII:
        cx, cy = best[2], best[3]
        for ody in (-radius, 0, radius):
            for odx in (-radius, 0, radius):
                dx = min(max(cx + odx, lo_x), hi_x)
                dy = min(max(cy + ody, lo_y), hi_y)
                cand = (sad_of(dx, dy), _tie_key(dx, dy), dx, dy)
                if cand[:2] < best[:2]:
                    best = cand
    return best[0], best[2], best[3]


def predict(
    cu: CuGeometry, refs: list[FrameBuffer], original: FrameBuffer
) -> tuple[np.ndarray, tuple[int, int], int | None]:
    """Prediction block for a fully in-frame CU.

    Inter: per-reference three-step search minimizing SAD, then the best
    reference (ties by smaller motion key, then reference index).
    Intra (no refs): flat block at the mean of the original CU samples.
    Returns (prediction, (dx, dy), ref_index or None).
    """
    x, y, w, h = cu.x, cu.y, cu.w, cu.h
    block = original.samples[y : y + h, x : x + w].astype(np.int32)
    if not refs:
        level = int(np.rint(block.mean()))
        pred = np.full((h, w), level, dtype=np.uint8)
        return pred, (0, 0), None

    bounds = motion_bounds(x, y, w, h, original.width, original.height)
    best = None
    for idx, ref in enumerate(refs):
        plane = ref.samples

        def sad_of(dx, dy, plane=plane):
            cand = plane[y + dy : y + dy + h, x + dx : x + dx + w].astype(np.int32)
            return int(np.abs(block - cand).sum())

        sad, dx, dy = three_step_search(sad_of, bounds)
        entry = (sad, _tie_key(dx, dy), idx, dx, dy)
        if best is None or entry[:3] < best[:3]:
            best = entry
    _, _, idx, dx, dy = best
    pred = refs[idx].samples[y + dy : y + dy + h, x + dx : x + dx + w].copy()
    return pred, (dx, dy), idx


def hadamard_forward(block: np.ndarray) -> np.ndarray:
    """Orthonormal 4x4-tiled Hadamard transform of an (h, w) residual."""
    tiles = _tile4(block.astype(np.float64))
    return _untile4(_H4 @ tiles @ _H4 / 4.0, block.shape)


def hadamard_inverse(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of `hadamard_forward` (the kernel is involutory)."""
    return hadamard_forward(coeffs)


def _tile4(block: np.ndarray) -> np.ndarray:
    h, w = block.shape[-2], block.shape[-1]
    lead = block.shape[:-2]
    tiled = block.reshape(*lead, h // 4, 4, w // 4, 4)
    return np.moveaxis(tiled, -3, -2).reshape(*lead, (h // 4) * (w // 4), 4, 4)

def _untile4(tiles: np.ndarray, shape) -> np.ndarray:
    h, w = shape[-2], shape[-1]
    lead = tiles.shape[:-3]
    grid = tiles.reshape(*lead, h // 4, w // 4, 4, 4)
    return np.moveaxis(grid, -3, -2).reshape(*lead, h, w)


def golomb_bits(q: np.ndarray) -> np.ndarray:
    """Signed exp-Golomb length per quantized coefficient: 0 for zeros,
    else 2*floor(log2 |q|) + 3."""
    mag = np.abs(q).astype(np.int64)
    # frexp exponent - 1 is an exact floor(log2) for positive integers
    exp = np.frexp(mag.astype(np.float64))[1]
    return np.where(mag == 0, 0, 2 * (exp - 1) + 3).astype(np.int64)


def transform_quant_rate(residual: np.ndarray, qp: int):
    """Transform, quantize, and rate a residual block.

    Returns (quantized coefficients, rate bits, dequantized residual); the
    block dimensions must be multiples of 4.
    """
    h, w = residual.shape
    if h % 4 or w % 4:
        raise ValueError(f"residual dimensions must be multiples of 4, got {w}x{h}")
    qstep = QuantizerParams(qp).qstep
    coeffs = hadamard_forward(residual)
    q = np.rint(coeffs / qstep)
    rate = int(golomb_bits(q).sum())
    deq = hadamard_inverse(q * qstep)
    return q.astype(np.int64), rate, deq


def motion_rate_bits(motion: tuple[int, int], num_refs: int) -> int:
    """One bit per motion component magnitude step, plus a reference-index
    bit when two references are available."""
    dx, dy = motion
    return abs(dx) + abs(dy) + (1 if num_refs == 2 else 0)


def rd_cost_cu(
    cu: CuGeometry,
    original: FrameBuffer,
    refs: list[FrameBuffer],
    qp: int,
    split_mode_signal: SplitMode = SplitMode.NS,
    ref_pocs: list[int] | None = None,
) -> CodedBlock:
    """Code one CU and return its reconstruction and RD cost."""
    params = QuantizerParams(qp)
    x, y, w, h = cu.x, cu.y, cu.w, cu.h
    block = original.samples[y : y + h, x : x + w].astype(np.int32)

    pred, motion, ref_idx = predict(cu, refs, original)
    residual = block - pred.astype(np.int32)
    _, residual_rate, deq = transform_quant_rate(residual, qp)
    recon = np.clip(np.rint(pred.astype(np.float64) + deq), 0, 255).astype(np.uint8)

    distortion = int(((block - recon.astype(np.int32)) ** 2).sum())
    rate = residual_rate + SIGNAL_BITS[split_mode_signal]
    if refs:
        rate += motion_rate_bits(motion, len(refs))
        ref_poc = ref_pocs[ref_idx] if ref_pocs is not None else ref_idx
    else:
        ref_poc = None
    return CodedBlock(
        geometry=cu,
        reconstruction=recon,
        cost=RdCost.of(distortion, rate, params.lam),
        pred_ref_poc=ref_poc,
        motion=motion,
    )

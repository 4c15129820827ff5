"""Spatial and temporal complexity scores for placing sequences on the
texture-energy axes used in the comparison reports.

Spatial energy E: per 32x32 block, a 2D orthonormal DCT-II; the weighted sum
of absolute AC coefficients (weight 2^((u+v)/2)) normalized by the block pixel
count, averaged over blocks and frames.  Temporal score h: mean absolute
change of per-block energies between consecutive frames.  Both are this tool's
own scale, intended for ranking sequences rather than absolute comparison.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn

from .frame_io import FrameBuffer, VideoSequence

BLOCK = 32

_uv = np.arange(BLOCK)
_WEIGHTS = 2.0 ** ((_uv[:, None] + _uv[None, :]) / 2.0)
_WEIGHTS[0, 0] = 0.0  # DC excluded


@dataclass(frozen=True)
class ComplexityScore:
    e_spatial: float
    h_temporal: float


def frame_energy(frame: FrameBuffer) -> tuple[np.ndarray, float]:
    """Per-block texture energies and their frame average.

    Frames whose dimensions are not multiples of 32 have trailing rows and
    columns dropped (with a warning).
    """
    h = (frame.height // BLOCK) * BLOCK
    w = (frame.width // BLOCK) * BLOCK
    if h == 0 or w == 0:
        raise ValueError(f"frame {frame.width}x{frame.height} smaller than a {BLOCK}x{BLOCK} block")
    if h != frame.height or w != frame.width:
        warnings.warn(
            f"dropping {frame.width - w}x{frame.height - h} trailing pixels not "
            f"covering full {BLOCK}x{BLOCK} blocks",
            stacklevel=2,
        )
    plane = frame.samples[:h, :w].astype(np.float64)
    blocks = plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).transpose(0, 2, 1, 3)
    coeffs = dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    energies = (np.abs(coeffs) * _WEIGHTS).sum(axis=(-2, -1)) / (BLOCK * BLOCK)
    return energies, float(energies.mean())


def sequence_complexity(seq: VideoSequence) -> ComplexityScore:
    """Average spatial energy and mean inter-frame energy change."""
    per_frame = [frame_energy(f) for f in seq.frames]
    e_spatial = float(np.mean([avg for _, avg in per_frame]))
    if len(per_frame) < 2:
        return ComplexityScore(e_spatial=e_spatial, h_temporal=0.0)
    diffs = [
        float(np.abs(b[0] - a[0]).mean())
        for a, b in zip(per_frame[:-1], per_frame[1:])
    ]
    return ComplexityScore(e_spatial=e_spatial, h_temporal=float(np.mean(diffs)))

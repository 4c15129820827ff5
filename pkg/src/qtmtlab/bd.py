"""Bjøntegaard delta metrics: BDBR, BDT, and their ratio.

Classic formulation: fit a cubic polynomial log10(cost) = p(quality) to each
curve, integrate both exactly over the overlapping quality interval, and map
the mean log-domain gap back to a percentage.  With the standard four QP
points the cubic is an exact interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_POINTS = 4


@dataclass(frozen=True)
class RdPoint:
    """One point of a rate-quality (or time-quality) curve."""

    rate: float  # bits, or seconds / search nodes on the time axis
    quality: float  # PSNR dB

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class BdResult:
    bdbr_percent: float
    bdt_percent: float
    ratio: float | None  # None when bdt_percent == 0 (undefined)


def _curve(points) -> tuple[np.ndarray, np.ndarray]:
    pts = [p if isinstance(p, RdPoint) else RdPoint(*p) for p in points]
    if len(pts) < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points per curve, got {len(pts)}")
    pts = sorted(pts, key=lambda p: p.quality)
    quality = np.array([p.quality for p in pts], dtype=np.float64)
    if len(set(quality.tolist())) != len(pts):
        raise ValueError("duplicate quality values within a curve")
    log_rate = np.log10([p.rate for p in pts])
    return quality, log_rate


def bd_delta(anchor, test) -> float:
    """Average rate difference of `test` relative to `anchor` at equal
    quality, in percent; positive means the test curve costs more."""
    qa, la = _curve(anchor)
    qt, lt = _curve(test)
    lo = max(qa.min(), qt.min())
    hi = min(qa.max(), qt.max())
    if hi <= lo:
        raise ValueError(f"quality ranges do not overlap: [{qa.min()}, {qa.max()}] vs [{qt.min()}, {qt.max()}]")

    poly_a = np.polynomial.Polynomial.fit(qa, la, 3).convert()
    poly_t = np.polynomial.Polynomial.fit(qt, lt, 3).convert()
    int_a = poly_a.integ()
    int_t = poly_t.integ()
    avg_diff = ((int_t(hi) - int_t(lo)) - (int_a(hi) - int_a(lo))) / (hi - lo)
    return (10.0 ** avg_diff - 1.0) * 100.0


def bd_rate(anchor, test) -> float:
    """BDBR: bd_delta over (bits, PSNR) curves."""
    return bd_delta(anchor, test)


def bd_time(anchor, test) -> float:
    """BDT: time saving at equal quality, in percent.

    Sign flipped relative to bd_delta so that a faster test curve reports a
    positive saving (a test at 0.79x the anchor time gives +21%)."""
    return -bd_delta(anchor, test)


def bd_ratio(bdbr: float, bdt: float) -> float | None:
    """BDBR / BDT; lower is a better efficiency-per-speedup trade.  Returns
    None (undefined) when bdt is zero."""
    if bdt == 0.0 or not math.isfinite(bdt):
        return None
    return bdbr / bdt


def bd_result(bdbr: float, bdt: float) -> BdResult:
    return BdResult(bdbr_percent=bdbr, bdt_percent=bdt, ratio=bd_ratio(bdbr, bdt))

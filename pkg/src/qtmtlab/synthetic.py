"""Deterministic synthetic test sequences: static, panning, and mixed-motion
content with controllable texture sharpness.  All generators wrap around the
frame like a torus so motion never runs out of picture.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .frame_io import FrameBuffer, VideoSequence


def texture_frame(width: int, height: int, sigma: float = 2.0, seed: int = 0,
                  contrast: float = 60.0) -> FrameBuffer:
    """Smooth random texture; lower sigma means sharper detail."""
    rng = np.random.default_rng(seed)
    base = rng.normal(128.0, contrast, size=(height, width))
    img = gaussian_filter(base, sigma, mode="wrap")
    return FrameBuffer(width, height, np.clip(img, 0, 255).astype(np.uint8))


def static_sequence(width: int, height: int, num_frames: int, *, sigma: float = 4.0,
                    seed: int = 0) -> VideoSequence:
    """One gentle texture repeated unchanged."""
    frame = texture_frame(width, height, sigma=sigma, seed=seed)
    return VideoSequence(frames=[frame] * num_frames)


def panning_sequence(width: int, height: int, num_frames: int, *,
                     velocity: tuple[int, int] = (2, 1), sigma: float = 1.5,
                     seed: int = 1) -> VideoSequence:
    """Global translation of one texture, wrapping at the edges."""
    base = texture_frame(width, height, sigma=sigma, seed=seed).samples
    vx, vy = velocity
    frames = [
        FrameBuffer(width, height, np.roll(base, (k * vy, k * vx), axis=(0, 1)).copy())
        for k in range(num_frames)
    ]
    return VideoSequence(frames=frames)


def mixed_motion_sequence(width: int, height: int, num_frames: int, *,
                          background_velocity: tuple[int, int] = (2, 1),
                          num_objects: int = 4, object_size: int = 40,
                          object_speed: int = 2, sigma: float = 2.0,
                          object_sigma: float = 1.5, seed: int = 2) -> VideoSequence:
    """Panning background with rectangular patches moving their own way.

    The spatially varying motion field forces locally different partitioning
    decisions, which is what distinguishes busy content from a plain pan.
    Object speeds stay small by default so that partitions remain correlated
    across nearby frames.
    """
    rng = np.random.default_rng(seed)
    background = texture_frame(width, height, sigma=sigma, seed=seed + 1).samples
    objects = []
    for i in range(num_objects):
        tex = texture_frame(object_size, object_size, sigma=object_sigma,
                            seed=seed + 10 + i, contrast=80.0).samples
        vx = int(rng.integers(-object_speed, object_speed + 1))
        vy = int(rng.integers(-object_speed, object_speed + 1))
        ox = int(rng.integers(0, width))
        oy = int(rng.integers(0, height))
        objects.append((tex, ox, oy, vx, vy))

    bvx, bvy = background_velocity
    frames = []
    for k in range(num_frames):
        canvas = np.roll(background, (k * bvy, k * bvx), axis=(0, 1)).copy()
        for tex, ox, oy, vx, vy in objects:
            ys = (oy + k * vy + np.arange(object_size)) % height
            xs = (ox + k * vx + np.arange(object_size)) % width
            canvas[np.ix_(ys, xs)] = tex
        frames.append(FrameBuffer(width, height, canvas))
    return VideoSequence(frames=frames)

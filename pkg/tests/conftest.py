import numpy as np
import pytest

from qtmtlab.frame_io import FrameBuffer
from qtmtlab.qtmt import CuGeometry, PartitionTree, SplitMode, apply_split, legal_splits


def make_frame(width, height, seed=0, smooth=0):
    """Random uint8 frame, optionally blurred for motion-search-friendly texture."""
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, size=(height, width)).astype(np.float64)
    if smooth:
        from scipy.ndimage import gaussian_filter

        img = gaussian_filter(img, smooth)
    return FrameBuffer(width, height, np.clip(img, 0, 255).astype(np.uint8))


def random_tree(cu: CuGeometry, rng, split_prob=0.6) -> PartitionTree:
    """Sample a random legal partition tree rooted at `cu`."""
    modes = sorted(legal_splits(cu), key=lambda m: m.value)
    splits = [m for m in modes if m != SplitMode.NS]
    if splits and rng.random() < split_prob:
        mode = splits[rng.integers(0, len(splits))]
        children = tuple(
            random_tree(child, rng, split_prob * 0.8) for child in apply_split(cu, mode)
        )
        return PartitionTree(cu, mode, children)
    return PartitionTree(cu, SplitMode.NS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

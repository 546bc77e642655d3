import numpy as np
import pytest

from airseg.volume import BinaryMask, VolumeDims


@pytest.fixture
def rs():
    return np.random.RandomState(20240817)


def mask_from_coords(coords, dims: VolumeDims) -> BinaryMask:
    data = np.zeros(dims.shape(), dtype=bool)
    for c in coords:
        data[tuple(c)] = True
    return BinaryMask(dims, data)


def has_2x2x2_block(v: np.ndarray) -> bool:
    block = v[:-1, :-1, :-1].copy()
    for dx, dy, dz in np.ndindex(2, 2, 2):
        if (dx, dy, dz) != (0, 0, 0):
            block &= v[
                dx : v.shape[0] - 1 + dx,
                dy : v.shape[1] - 1 + dy,
                dz : v.shape[2] - 1 + dz,
            ]
    return bool(block.any())

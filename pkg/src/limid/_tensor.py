"""Broadcast helpers for laying factor tables onto a joint state grid."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def place_table(
    grid_sizes: Sequence[int], positions: Sequence[int], table: np.ndarray
) -> np.ndarray:
    """Reshape ``table`` so it broadcasts over a joint grid.

    ``table`` has one axis per entry of ``positions`` (in that order), giving
    the grid axes the factor touches.  The result has ``len(grid_sizes)``
    axes: the factor's axes moved to their grid positions, size-1 axes
    everywhere else.  Positions need not be sorted.
    """
    positions = list(positions)
    if table.ndim != len(positions):
        raise ValueError("table rank does not match positions")
    perm = sorted(range(len(positions)), key=positions.__getitem__)
    arranged = np.transpose(table, perm)
    sorted_pos = [positions[i] for i in perm]
    shape = [1] * len(grid_sizes)
    for axis, p in enumerate(sorted_pos):
        shape[p] = arranged.shape[axis]
    return arranged.reshape(shape)

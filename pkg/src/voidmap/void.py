"""Void classification: intersected voxels whose whole neighborhood was observed."""
from __future__ import annotations

import numpy as np
from numba import njit

from .grid import (
    KEY_OFFSET,
    ScanScratch,
    VoxelState,
    neighborhood_offsets,
    pack_keys,
)


def classify_voids(scratch: ScanScratch, d_p: int) -> np.ndarray:
    """Keys (M, 3) that are Intersected with no Unknown voxel within Chebyshev ``d_p``.

    Only the given scan's states are consulted.
    """
    if d_p < 0:
        raise ValueError(f"d_p must be >= 0, got {d_p}")
    if scratch.is_dense:
        return _classify_dense(scratch, int(d_p))
    return _classify_sparse(scratch, int(d_p))


def _classify_dense(scratch: ScanScratch, d_p: int) -> np.ndarray:
    grid = scratch.grid
    if grid.size == 0:
        return np.empty((0, 3), dtype=np.int64)
    n = _count_state(grid, VoxelState.INTERSECTED)
    out = np.empty((n, 3), dtype=np.int64)
    m = _dense_voids(grid, d_p, out)
    return out[:m] + scratch.origin


@njit(cache=True)
def _count_state(grid, state):
    n = 0
    for x in range(grid.shape[0]):
        for y in range(grid.shape[1]):
            for z in range(grid.shape[2]):
                if grid[x, y, z] == state:
                    n += 1
    return n


@njit(cache=True)
def _dense_voids(grid, d_p, out):
    # cells outside the block count as Unknown
    nx, ny, nz = grid.shape
    m = 0
    for x in range(nx):
        if x < d_p or x + d_p >= nx:
            continue
        for y in range(d_p, ny - d_p):
            for z in range(d_p, nz - d_p):
                if grid[x, y, z] != 1:
                    continue
                ok = True
                for dx in range(-d_p, d_p + 1):
                    for dy in range(-d_p, d_p + 1):
                        for dz in range(-d_p, d_p + 1):
                            if grid[x + dx, y + dy, z + dz] == 0:
                                ok = False
                                break
                        if not ok:
                            break
                    if not ok:
                        break
                if ok:
                    out[m, 0] = x
                    out[m, 1] = y
                    out[m, 2] = z
                    m += 1
    return m


def _classify_sparse(scratch: ScanScratch, d_p: int) -> np.ndarray:
    cand = scratch.keys_in_state(VoxelState.INTERSECTED)
    if d_p == 0 or not len(cand):
        return cand
    observed = scratch.packed
    ok = np.ones(len(cand), dtype=bool)
    for off in neighborhood_offsets(d_p):
        idx = np.flatnonzero(ok)
        if not idx.size:
            break
        nb = cand[idx] + off
        inside = ((nb >= -KEY_OFFSET) & (nb < KEY_OFFSET)).all(axis=1)
        hit = np.zeros(idx.size, dtype=bool)
        p = pack_keys(nb[inside])
        j = np.minimum(np.searchsorted(observed, p), observed.size - 1)
        hit[inside] = observed[j] == p
        ok[idx[~hit]] = False
    return cand[ok]

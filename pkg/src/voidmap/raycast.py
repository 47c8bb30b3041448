"""Voxel traversal along sensor rays and per-scan scratch construction."""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .grid import (
    KEY_OFFSET,
    InvalidInputError,
    Params,
    ScanScratch,
    VoxelState,
    pack_keys,
    reduce_states,
    voxel_keys,
)

# Largest dense scratch block (voxels, one byte each) before falling back to
# the sorted-key backing.
DENSE_LIMIT = 1 << 28


@njit(cache=True)
def _edge_t(c, st, o, d, v):
    # distance along the ray to the far face of cell c on one axis
    if st == 0:
        return np.inf
    return ((c + (1 if st > 0 else 0)) * v - o) / d


@njit(cache=True)
def _walk(o, e, v, d_s, ext, out_k, out_s):
    """Write the voxels of one ray into ``out_k``/``out_s``; return the count.

    Grid walk stepping one axis at a time (x before y before z on ties) from
    the origin voxel to the endpoint voxel, then ``ext`` further voxels past
    it. A traversed voxel is Hit when its exit distance exceeds
    ``range - d_s``; the endpoint and extension voxels are always Hit.
    """
    cx = math.floor(o[0] / v)
    cy = math.floor(o[1] / v)
    cz = math.floor(o[2] / v)
    ex = math.floor(e[0] / v)
    ey = math.floor(e[1] / v)
    ez = math.floor(e[2] / v)
    if cx == ex and cy == ey and cz == ez:
        out_k[0, 0] = ex
        out_k[0, 1] = ey
        out_k[0, 2] = ez
        out_s[0] = 2
        return 1

    dx = e[0] - o[0]
    dy = e[1] - o[1]
    dz = e[2] - o[2]
    length = math.sqrt(dx * dx + dy * dy + dz * dz)
    dx /= length
    dy /= length
    dz /= length
    sx = 1 if ex > cx else (-1 if ex < cx else (1 if dx > 0.0 else (-1 if dx < 0.0 else 0)))
    sy = 1 if ey > cy else (-1 if ey < cy else (1 if dy > 0.0 else (-1 if dy < 0.0 else 0)))
    sz = 1 if ez > cz else (-1 if ez < cz else (1 if dz > 0.0 else (-1 if dz < 0.0 else 0)))
    rx = abs(ex - cx)
    ry = abs(ey - cy)
    rz = abs(ez - cz)
    tx = _edge_t(cx, sx, o[0], dx, v)
    ty = _edge_t(cy, sy, o[1], dy, v)
    tz = _edge_t(cz, sz, o[2], dz, v)
    margin = length - d_s

    n = 0
    while rx + ry + rz > 0:
        # axes with no steps left never win
        bx = tx if rx > 0 else np.inf
        by = ty if ry > 0 else np.inf
        bz = tz if rz > 0 else np.inf
        out_k[n, 0] = cx
        out_k[n, 1] = cy
        out_k[n, 2] = cz
        if bx <= by and bx <= bz:
            out_s[n] = 2 if bx > margin else 1
            cx += sx
            rx -= 1
            tx = _edge_t(cx, sx, o[0], dx, v)
        elif by <= bz:
            out_s[n] = 2 if by > margin else 1
            cy += sy
            ry -= 1
            ty = _edge_t(cy, sy, o[1], dy, v)
        else:
            out_s[n] = 2 if bz > margin else 1
            cz += sz
            rz -= 1
            tz = _edge_t(cz, sz, o[2], dz, v)
        n += 1

    out_k[n, 0] = cx
    out_k[n, 1] = cy
    out_k[n, 2] = cz
    out_s[n] = 2
    n += 1

    for _ in range(ext):
        if tx <= ty and tx <= tz:
            cx += sx
            tx = _edge_t(cx, sx, o[0], dx, v)
        elif ty <= tz:
            cy += sy
            ty = _edge_t(cy, sy, o[1], dy, v)
        else:
            cz += sz
            tz = _edge_t(cz, sz, o[2], dz, v)
        out_k[n, 0] = cx
        out_k[n, 1] = cy
        out_k[n, 2] = cz
        out_s[n] = 2
        n += 1
    return n


@njit(cache=True)
def _fill_dense(origin, ends, v, d_s, ext, lo, grid, max_len):
    out_k = np.empty((max_len, 3), np.int64)
    out_s = np.empty(max_len, np.uint8)
    for r in range(ends.shape[0]):
        n = _walk(origin, ends[r], v, d_s, ext, out_k, out_s)
        for i in range(n):
            x = out_k[i, 0] - lo[0]
            y = out_k[i, 1] - lo[1]
            z = out_k[i, 2] - lo[2]
            if out_s[i] > grid[x, y, z]:
                grid[x, y, z] = out_s[i]


@njit(cache=True)
def _fill_flat(origin, ends, v, d_s, ext, offsets, keys, states, max_len):
    out_k = np.empty((max_len, 3), np.int64)
    out_s = np.empty(max_len, np.uint8)
    for r in range(ends.shape[0]):
        n = _walk(origin, ends[r], v, d_s, ext, out_k, out_s)
        base = offsets[r]
        for i in range(n):
            for a in range(3):
                keys[base + i, a] = out_k[i, a]
            states[base + i] = out_s[i]
    return offsets[ends.shape[0]] if ends.shape[0] else 0


def _as_point(p, name):
    arr = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"non-finite {name}")
    return arr


def _ray_lengths(origin, ends, v, ext):
    """Exact voxel count written by ``_walk`` for each ray."""
    ko = voxel_keys(origin, v)[0]
    ke = voxel_keys(ends, v)
    counts = np.abs(ke - ko).sum(axis=1) + 1 + ext
    counts[(ke == ko).all(axis=1)] = 1
    return counts


def walk_ray(origin, endpoint, voxel_size: float, d_s: float = 0.0, extension: int = 0):
    """Keys and states for one ray as ``((M, 3) int64, (M,) uint8)``."""
    o = _as_point(origin, "origin")
    e = _as_point(endpoint, "endpoint")
    if not voxel_size > 0:
        raise InvalidInputError(f"voxel size must be > 0, got {voxel_size}")
    m = int(_ray_lengths(o, e[None], voxel_size, extension)[0])
    out_k = np.empty((m, 3), np.int64)
    out_s = np.empty(m, np.uint8)
    n = _walk(o, e, float(voxel_size), float(d_s), int(extension), out_k, out_s)
    return out_k[:n], out_s[:n]


def traverse(origin, endpoint, voxel_size: float) -> list:
    """Voxels crossed by the segment, origin voxel first, endpoint voxel last."""
    keys, _ = walk_ray(origin, endpoint, voxel_size)
    return [(int(k[0]), int(k[1]), int(k[2])) for k in keys]


def integrate_ray(scratch_states: dict, origin, endpoint, params: Params) -> dict:
    """Join one ray's observations into a ``{key: VoxelState}`` mapping.

    Convenience form for small experiments; scans go through :func:`build_scratch`.
    """
    keys, states = walk_ray(origin, endpoint, params.voxel_size, params.d_s, params.extension)
    for k, s in zip(keys, states):
        key = (int(k[0]), int(k[1]), int(k[2]))
        prev = scratch_states.get(key, VoxelState.UNKNOWN)
        scratch_states[key] = VoxelState(max(prev, int(s)))
    return scratch_states


def build_scratch(origin, endpoints, params: Params, dense_limit: int = DENSE_LIMIT) -> ScanScratch:
    """Cast every ray of one scan into a fresh :class:`ScanScratch`.

    ``endpoints`` must already be finite, world-frame and range filtered.
    """
    o = _as_point(origin, "origin")
    ends = np.ascontiguousarray(endpoints, dtype=np.float64).reshape(-1, 3)
    if not len(ends):
        return ScanScratch.empty()
    if not np.isfinite(ends).all():
        raise InvalidInputError("non-finite endpoint")
    v = float(params.voxel_size)
    ext = params.extension
    lengths = _ray_lengths(o, ends, v, ext)
    max_len = int(lengths.max())

    ko = voxel_keys(o, v)[0]
    ke = voxel_keys(ends, v)
    lo = np.minimum(ke.min(axis=0) - ext, ko)
    hi = np.maximum(ke.max(axis=0) + ext, ko)
    if lo.min() < -KEY_OFFSET or hi.max() >= KEY_OFFSET:
        raise InvalidInputError(f"ray reaches outside the addressable grid (|key| >= {KEY_OFFSET})")
    shape = hi - lo + 1
    if int(np.prod(shape)) <= dense_limit:
        grid = np.zeros(tuple(int(s) for s in shape), dtype=np.uint8)
        _fill_dense(o, ends, v, float(params.d_s), ext, lo, grid, max_len)
        return _trim(grid, lo)

    chunks_p, chunks_s = [], []
    chunk = max(1, 8_000_000 // max_len)
    for start in range(0, len(ends), chunk):
        part = ends[start:start + chunk]
        offsets = np.zeros(len(part) + 1, dtype=np.int64)
        np.cumsum(lengths[start:start + chunk], out=offsets[1:])
        keys = np.empty((int(offsets[-1]), 3), np.int64)
        states = np.empty(int(offsets[-1]), np.uint8)
        _fill_flat(o, part, v, float(params.d_s), ext, offsets, keys, states, max_len)
        p, s = reduce_states(pack_keys(keys), states)
        chunks_p.append(p)
        chunks_s.append(s)
    packed, states = reduce_states(np.concatenate(chunks_p), np.concatenate(chunks_s))
    return ScanScratch(packed=packed, states=states)


def _trim(grid: np.ndarray, lo: np.ndarray) -> ScanScratch:
    nz = [np.flatnonzero(grid.any(axis=tuple(b for b in range(3) if b != a))) for a in range(3)]
    if any(len(ix) == 0 for ix in nz):
        return ScanScratch.empty()
    start = np.array([ix[0] for ix in nz])
    stop = np.array([ix[-1] + 1 for ix in nz])
    sub = grid[start[0]:stop[0], start[1]:stop[1], start[2]:stop[2]]
    return ScanScratch(grid=sub, origin=lo + start)

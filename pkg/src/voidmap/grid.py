"""Sparse voxel addressing, per-scan state buffer and the persistent void map."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Tuple

import numpy as np

VoxelKey = Tuple[int, int, int]

# Packed keys use 21 bits per axis (two's complement offset), which spans
# +-1048576 voxels per axis: about +-104 km at 0.1 m.
KEY_BITS = 21
KEY_OFFSET = 1 << (KEY_BITS - 1)
KEY_MASK = (1 << KEY_BITS) - 1


class InvalidInputError(ValueError):
    """Raised for non-finite coordinates, bad voxel sizes and similar input."""


class VoxelState(enum.IntEnum):
    UNKNOWN = 0
    INTERSECTED = 1
    HIT = 2


def merge_state(a: VoxelState, b: VoxelState) -> VoxelState:
    """Lattice join: Unknown < Intersected < Hit."""
    return VoxelState(max(a, b))


@dataclass(frozen=True)
class Params:
    """Method parameters.

    ``voxel_size`` and ``d_s`` are in meters, ``d_p`` in whole voxels.
    ``hit_extension`` defaults to ``d_p`` voxels when left as None.
    """

    voxel_size: float = 0.1
    d_s: float = 0.2
    d_p: int = 1
    max_range: Optional[float] = None
    hit_extension: Optional[int] = None
    online_order: str = "classify_first"

    def __post_init__(self):
        if not np.isfinite(self.voxel_size) or self.voxel_size <= 0:
            raise InvalidInputError(f"voxel_size must be > 0, got {self.voxel_size}")
        if not np.isfinite(self.d_s) or self.d_s < 0:
            raise InvalidInputError(f"d_s must be >= 0, got {self.d_s}")
        if int(self.d_p) != self.d_p or self.d_p < 0:
            raise InvalidInputError(f"d_p must be a non-negative integer, got {self.d_p}")
        if self.max_range is not None and not self.max_range > 0:
            raise InvalidInputError(f"max_range must be > 0, got {self.max_range}")
        if self.hit_extension is not None and (
            int(self.hit_extension) != self.hit_extension or self.hit_extension < 0
        ):
            raise InvalidInputError(f"hit_extension must be >= 0, got {self.hit_extension}")
        if self.online_order not in ("classify_first", "integrate_first"):
            raise InvalidInputError(f"unknown online_order {self.online_order!r}")

    @property
    def extension(self) -> int:
        return int(self.d_p if self.hit_extension is None else self.hit_extension)

    def as_dict(self) -> dict:
        return {
            "voxel_size": self.voxel_size,
            "d_s": self.d_s,
            "d_p": int(self.d_p),
            "max_range": self.max_range,
            "hit_extension": self.extension,
            "online_order": self.online_order,
        }


def voxel_keys(points, voxel_size: float) -> np.ndarray:
    """Vectorized floor division of an (N, 3) array into int64 voxel indices."""
    if not np.isfinite(voxel_size) or voxel_size <= 0:
        raise InvalidInputError(f"voxel size must be > 0, got {voxel_size}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if not np.isfinite(pts).all():
        raise InvalidInputError("non-finite coordinate")
    return np.floor(pts / voxel_size).astype(np.int64)


def voxel_key(point, voxel_size: float) -> VoxelKey:
    ix, iy, iz = voxel_keys(point, voxel_size)[0]
    return int(ix), int(iy), int(iz)


def pack_keys(keys) -> np.ndarray:
    """Pack (N, 3) integer keys into sortable int64 scalars."""
    k = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
    if k.size and (k.min() < -KEY_OFFSET or k.max() >= KEY_OFFSET):
        raise InvalidInputError("voxel index outside the packable range of +-2**20")
    u = k + KEY_OFFSET
    return (u[:, 0] << (2 * KEY_BITS)) | (u[:, 1] << KEY_BITS) | u[:, 2]


def unpack_keys(packed) -> np.ndarray:
    p = np.asarray(packed, dtype=np.int64)
    out = np.empty((p.size, 3), dtype=np.int64)
    out[:, 0] = (p >> (2 * KEY_BITS)) & KEY_MASK
    out[:, 1] = (p >> KEY_BITS) & KEY_MASK
    out[:, 2] = p & KEY_MASK
    return out - KEY_OFFSET


def neighborhood_offsets(d_p: int) -> np.ndarray:
    """All non-zero offsets with Chebyshev norm <= d_p, shape ((2d+1)^3 - 1, 3)."""
    if d_p < 0:
        raise InvalidInputError(f"d_p must be >= 0, got {d_p}")
    r = range(-d_p, d_p + 1)
    offs = [o for o in itertools.product(r, r, r) if o != (0, 0, 0)]
    return np.array(offs, dtype=np.int64).reshape(-1, 3)


def neighborhood(key: VoxelKey, d_p: int) -> list:
    """Keys at Chebyshev distance 1..d_p from ``key``."""
    base = np.asarray(key, dtype=np.int64)
    return [tuple(int(c) for c in base + o) for o in neighborhood_offsets(d_p)]


class ScanScratch:
    """Observation states of the voxels touched by a single scan.

    Two backings share one interface: a dense uint8 block over the bounding
    box of touched keys (``grid`` + ``origin``), or sorted packed keys with a
    parallel state array (``packed`` + ``states``) for scans whose bounding
    box is too large to allocate. Absent keys are Unknown.
    """

    def __init__(self, grid=None, origin=(0, 0, 0), packed=None, states=None) -> None:
        if (grid is None) == (packed is None):
            raise ValueError("give exactly one of grid or packed")
        self.grid = grid
        self.origin = np.asarray(origin, dtype=np.int64).reshape(3)
        self.packed = packed
        self.states = states
        if packed is not None:
            self._keys = unpack_keys(packed)
            if len(self._keys):
                self.origin = self._keys.min(axis=0)
                self._hi = self._keys.max(axis=0)
            else:
                self._hi = self.origin - 1

    @property
    def is_dense(self) -> bool:
        return self.grid is not None

    @classmethod
    def empty(cls) -> "ScanScratch":
        return cls(grid=np.zeros((0, 0, 0), dtype=np.uint8))

    @classmethod
    def from_states(cls, states: dict, dense: bool = True) -> "ScanScratch":
        """Build from a ``{key: VoxelState}`` mapping (Unknown entries ignored)."""
        items = [(k, int(s)) for k, s in states.items() if int(s) != VoxelState.UNKNOWN]
        if not items:
            return cls.empty()
        keys = np.array([k for k, _ in items], dtype=np.int64)
        vals = np.array([s for _, s in items], dtype=np.uint8)
        if dense:
            lo = keys.min(axis=0)
            grid = np.zeros(tuple(keys.max(axis=0) - lo + 1), dtype=np.uint8)
            rel = keys - lo
            np.maximum.at(grid, (rel[:, 0], rel[:, 1], rel[:, 2]), vals)
            return cls(grid=grid, origin=lo)
        packed, states = reduce_states(pack_keys(keys), vals)
        return cls(packed=packed, states=states)

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Inclusive min and max index of the touched box."""
        if self.is_dense:
            return self.origin.copy(), self.origin + np.array(self.grid.shape) - 1
        return self.origin.copy(), self._hi.copy()

    def __len__(self) -> int:
        if self.is_dense:
            return int(np.count_nonzero(self.grid))
        return int(self.packed.size)

    def state(self, key: VoxelKey) -> VoxelState:
        if self.is_dense:
            rel = np.asarray(key, dtype=np.int64) - self.origin
            if (rel < 0).any() or (rel >= np.array(self.grid.shape)).any():
                return VoxelState.UNKNOWN
            return VoxelState(int(self.grid[tuple(rel)]))
        p = pack_keys([key])[0]
        i = np.searchsorted(self.packed, p)
        if i < self.packed.size and self.packed[i] == p:
            return VoxelState(int(self.states[i]))
        return VoxelState.UNKNOWN

    def keys_in_state(self, state: VoxelState) -> np.ndarray:
        if self.is_dense:
            return np.argwhere(self.grid == state).astype(np.int64) + self.origin
        return self._keys[self.states == state]

    def items(self) -> Iterator[Tuple[VoxelKey, VoxelState]]:
        for state in (VoxelState.INTERSECTED, VoxelState.HIT):
            for k in self.keys_in_state(state):
                yield (int(k[0]), int(k[1]), int(k[2])), state

    def to_dict(self) -> dict:
        return dict(self.items())


def reduce_states(packed: np.ndarray, states: np.ndarray):
    """Join duplicate keys: returns sorted unique keys and their max state."""
    if not packed.size:
        return packed.astype(np.int64), states.astype(np.uint8)
    order = np.argsort(packed, kind="stable")
    p = packed[order]
    s = states[order]
    starts = np.flatnonzero(np.r_[True, p[1:] != p[:-1]])
    return p[starts], np.maximum.reduceat(s, starts).astype(np.uint8)


@dataclass
class VoidMap:
    """Monotone set of voxels that were observed empty in at least one scan.

    Keys are held packed (see :func:`pack_keys`) in a sorted array; new
    insertions are buffered and merged on the next query.
    """

    voxel_size: float = 0.1
    d_p: int = 1
    d_s: float = 0.2
    _sorted: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64), repr=False)
    _pending: list = field(default_factory=list, repr=False)

    @classmethod
    def from_params(cls, params: Params) -> "VoidMap":
        return cls(voxel_size=params.voxel_size, d_p=int(params.d_p), d_s=params.d_s)

    def _consolidate(self) -> np.ndarray:
        if self._pending:
            self._sorted = np.unique(np.concatenate([self._sorted, *self._pending]))
            self._pending = []
        return self._sorted

    def mark_void(self, key: VoxelKey) -> "VoidMap":
        self._pending.append(pack_keys([key]))
        return self

    def mark_many(self, keys) -> "VoidMap":
        packed = pack_keys(keys)
        if packed.size:
            self._pending.append(packed)
            if sum(p.size for p in self._pending) > 4_000_000:
                self._consolidate()
        return self

    def update(self, other: "VoidMap") -> "VoidMap":
        """Union with another map of the same voxel size."""
        if other.voxel_size != self.voxel_size:
            raise InvalidInputError("cannot merge void maps with different voxel sizes")
        self._pending.append(other._consolidate().copy())
        return self

    def __len__(self) -> int:
        return int(self._consolidate().size)

    def __contains__(self, key) -> bool:
        packed = pack_keys([key])[0]
        arr = self._consolidate()
        i = np.searchsorted(arr, packed)
        return bool(i < arr.size and arr[i] == packed)

    def __iter__(self) -> Iterator[VoxelKey]:
        for row in unpack_keys(self._consolidate()):
            yield int(row[0]), int(row[1]), int(row[2])

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoidMap):
            return NotImplemented
        return self.voxel_size == other.voxel_size and np.array_equal(
            self._consolidate(), other._consolidate()
        )

    def keys(self) -> np.ndarray:
        return unpack_keys(self._consolidate())

    def key_set(self) -> set:
        return set(iter(self))

    def contains_keys(self, keys) -> np.ndarray:
        """Boolean membership for an (N, 3) array of keys."""
        k = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        arr = self._consolidate()
        out = np.zeros(len(k), dtype=bool)
        if not arr.size or not len(k):
            return out
        inside = ((k >= -KEY_OFFSET) & (k < KEY_OFFSET)).all(axis=1)
        packed = pack_keys(k[inside])
        i = np.minimum(np.searchsorted(arr, packed), arr.size - 1)
        out[inside] = arr[i] == packed
        return out

    def copy(self) -> "VoidMap":
        return VoidMap(self.voxel_size, self.d_p, self.d_s, self._consolidate().copy())


def mark_void(m: VoidMap, key: VoxelKey) -> VoidMap:
    return m.mark_void(key)


def iter_keys(keys: Iterable) -> Iterator[VoxelKey]:
    for k in keys:
        yield int(k[0]), int(k[1]), int(k[2])

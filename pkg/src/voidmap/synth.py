"""Synthetic box scenes with exact ground truth, and a brute-force void oracle.

The oracle shares no code with the production traversal or classification:
it samples every ray densely, fills a dense array per scan and checks
neighborhoods by shifting that array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .grid import Params
from .pipeline import Pose, PosedScan


class SpecError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        self.hi = np.asarray(self.hi, dtype=np.float64).reshape(3)

    def shifted(self, offset) -> "Box":
        return Box(self.lo + offset, self.hi + offset)

    def contains(self, pts, tol: float = 1e-9) -> np.ndarray:
        pts = np.asarray(pts).reshape(-1, 3)
        return ((pts >= self.lo - tol) & (pts <= self.hi + tol)).all(axis=1)

    def on_surface(self, pts, tol: float = 1e-6) -> np.ndarray:
        pts = np.asarray(pts).reshape(-1, 3)
        near_face = (np.abs(pts - self.lo) <= tol) | (np.abs(pts - self.hi) <= tol)
        return self.contains(pts, tol) & near_face.any(axis=1)


@dataclass
class DynamicBox:
    """A box moved by piecewise-linear offsets between ``(scan, offset)`` keyframes.

    Offsets are held constant before the first and after the last keyframe.
    """

    box: Box
    keyframes: List[Tuple[int, np.ndarray]] = field(default_factory=list)

    def offset_at(self, scan: int) -> np.ndarray:
        if not self.keyframes:
            return np.zeros(3)
        kf = sorted(self.keyframes, key=lambda k: k[0])
        ts = np.array([k[0] for k in kf], dtype=np.float64)
        offs = np.array([k[1] for k in kf], dtype=np.float64)
        return np.array([np.interp(scan, ts, offs[:, a]) for a in range(3)])

    def at(self, scan: int) -> Box:
        return self.box.shifted(self.offset_at(scan))


@dataclass
class SceneSpec:
    static_boxes: List[Box] = field(default_factory=list)
    dynamic_boxes: List[DynamicBox] = field(default_factory=list)
    sensor_poses: List[Pose] = field(default_factory=list)
    azimuth_count: int = 360
    elevation_count: int = 32
    azimuth_range: Tuple[float, float] = (-180.0, 180.0)
    elevation_range: Tuple[float, float] = (-30.0, 30.0)
    pose_noise: float = 0.0
    rotation_noise: float = 0.0
    range_noise: float = 0.0
    max_range: Optional[float] = None
    seed: int = 0

    @property
    def rays_per_scan(self) -> int:
        return self.azimuth_count * self.elevation_count

    def validate(self) -> None:
        if not self.static_boxes and not self.dynamic_boxes and self.max_range is None:
            raise SpecError("static_box", "scene has no geometry and no max_range")
        for i, b in enumerate(self.static_boxes + [d.box for d in self.dynamic_boxes]):
            if not (b.hi > b.lo).all():
                raise SpecError("box", f"box {i} is degenerate: min {b.lo} max {b.hi}")
        if not self.sensor_poses:
            raise SpecError("pose", "no sensor poses")
        if self.azimuth_count < 1 or self.elevation_count < 1:
            raise SpecError("azimuth_count", "ray pattern counts must be >= 1")
        for name in ("pose_noise", "rotation_noise", "range_noise"):
            if getattr(self, name) < 0:
                raise SpecError(name, "must be >= 0")
        if self.max_range is not None and self.max_range <= 0:
            raise SpecError("max_range", "must be > 0")

    def directions(self) -> np.ndarray:
        """Unit ray directions of the spherical grid, sensor frame."""
        a0, a1 = self.azimuth_range
        full = math.isclose(a1 - a0, 360.0)
        az = np.radians(np.linspace(a0, a1, self.azimuth_count, endpoint=not full))
        el = np.radians(np.linspace(*self.elevation_range, self.elevation_count))
        A, E = np.meshgrid(az, el, indexing="ij")
        d = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1)
        return d.reshape(-1, 3)


def _ray_box(o, dirs, box: Box, eps: float = 1e-9) -> np.ndarray:
    """Entry distance of each ray into ``box``; inf where missed or starting inside."""
    safe = np.where(np.abs(dirs) < 1e-15, np.copysign(1e-15, dirs + 0.0), dirs)
    t1 = (box.lo - o) / safe
    t2 = (box.hi - o) / safe
    tnear = np.minimum(t1, t2).max(axis=1)
    tfar = np.maximum(t1, t2).min(axis=1)
    hit = (tnear <= tfar) & (tnear > eps)
    return np.where(hit, tnear, np.inf)


def generate(spec: SceneSpec) -> List[PosedScan]:
    """Cast the spec's ray pattern once per sensor pose.

    Each ray is cast from the pose perturbed by the configured noise; the
    scan carries the unperturbed pose. A point is labelled dynamic iff its
    first intersection is a dynamic box. Deterministic for a given seed.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    local = spec.directions()
    scans = []
    for k, reported in enumerate(spec.sensor_poses):
        t_true = reported.translation + rng.normal(0.0, spec.pose_noise, 3) if spec.pose_noise else reported.translation
        rot = Rotation.from_quat(reported.quaternion)
        if spec.rotation_noise:
            rot = Rotation.from_rotvec(rng.normal(0.0, spec.rotation_noise, 3)) * rot
        dirs = local @ rot.as_matrix().T

        best = np.full(len(dirs), np.inf)
        dynamic = np.zeros(len(dirs), dtype=bool)
        for b in spec.static_boxes:
            t = _ray_box(t_true, dirs, b)
            closer = t < best
            best[closer] = t[closer]
            dynamic[closer] = False
        for d in spec.dynamic_boxes:
            t = _ray_box(t_true, dirs, d.at(k))
            closer = t < best
            best[closer] = t[closer]
            dynamic[closer] = True
        keep = np.isfinite(best)
        if spec.max_range is not None:
            keep &= best <= spec.max_range
        rng_m = best[keep]
        if spec.range_noise:
            rng_m = rng_m + rng.normal(0.0, spec.range_noise, rng_m.size)
        pts = local[keep] * rng_m[:, None]
        scans.append(PosedScan(k, reported, pts, dynamic[keep].astype(np.uint8)))
    return scans


def room_boxes(lo, hi, thickness: float = 0.3) -> List[Box]:
    """Six wall slabs enclosing the interior box ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    boxes = []
    for a in range(3):
        for side in (0, 1):
            blo = lo - thickness
            bhi = hi + thickness
            if side == 0:
                bhi = bhi.copy()
                bhi[a] = lo[a]
            else:
                blo = blo.copy()
                blo[a] = hi[a]
            boxes.append(Box(blo, bhi))
    return boxes


def linear_poses(start, end, n: int) -> List[Pose]:
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    if n == 1:
        return [Pose(start)]
    return [Pose(start + (end - start) * i / (n - 1)) for i in range(n)]


def corridor_scene(
    scans: int = 10,
    length: float = 10.0,
    width: float = 3.0,
    height: float = 2.5,
    offset=(0.0137, 0.0291, 0.0063),
    cube: float = 1.0,
    pose_noise: float = 0.0,
    azimuth_count: int = 720,
    elevation_count: int = 64,
    seed: int = 0,
) -> SceneSpec:
    """Corridor along x with a floating cube that sits at one spot during
    the first half of the scans and at another during the second half.

    ``offset`` shifts the geometry off voxel boundaries.
    """
    off = np.asarray(offset, dtype=np.float64)
    lo = off
    hi = off + [length, width, height]
    cy = off[1] + width / 2
    cz = off[2] + 0.6
    cube_box = Box([off[0] + 2.5, cy - cube / 2, cz], [off[0] + 2.5 + cube, cy + cube / 2, cz + cube])
    half = scans // 2
    mover = DynamicBox(cube_box, [(half - 1, np.zeros(3)), (half, np.array([4.0, 0.0, 0.0]))])
    return SceneSpec(
        static_boxes=room_boxes(lo, hi),
        dynamic_boxes=[mover],
        sensor_poses=linear_poses(off + [0.8, width / 2 - 0.7, 1.7], off + [length - 0.8, width / 2 - 0.7, 1.7], scans),
        azimuth_count=azimuth_count,
        elevation_count=elevation_count,
        elevation_range=(-60.0, 60.0),
        pose_noise=pose_noise,
        seed=seed,
    )


def static_room_scene(scans: int = 10, size=(10.0, 10.0, 3.0), offset=(0.021, 0.017, 0.013),
                      pose_noise: float = 0.0, azimuth_count: int = 360, elevation_count: int = 48,
                      seed: int = 0) -> SceneSpec:
    off = np.asarray(offset, dtype=np.float64)
    size = np.asarray(size, dtype=np.float64)
    centre = off + size / 2
    start = centre - [1.5, 1.0, 0.0]
    end = centre + [1.5, 1.0, 0.0]
    return SceneSpec(
        static_boxes=room_boxes(off, off + size),
        sensor_poses=linear_poses(start, end, scans),
        azimuth_count=azimuth_count,
        elevation_count=elevation_count,
        elevation_range=(-70.0, 70.0),
        pose_noise=pose_noise,
        seed=seed,
    )


# ----------------------------------------------------------------------------
# brute-force oracle

def _ray_samples(o, e, v, d_s, ext):
    """(t, state) samples along one ray, extension included; sorted by t."""
    diff = e - o
    length = float(np.sqrt(diff @ diff))
    d = diff / length
    # every plane crossing on the segment and the first ext+1 beyond it
    cuts = [0.0, length]
    beyond = []
    for a in range(3):
        if d[a] == 0.0:
            continue
        span = (ext + 2) * v / abs(d[a])
        lo_c, hi_c = sorted((o[a], o[a] + (length + span) * d[a]))
        ks = np.arange(math.ceil(lo_c / v), math.floor(hi_c / v) + 1)
        ts = (ks * v - o[a]) / d[a]
        ts = ts[ts > 0]
        cuts.extend(ts[ts < length].tolist())
        beyond.extend(ts[ts > length].tolist())
    beyond = sorted(beyond)[: ext + 1]
    if 0 < length - d_s < length:
        cuts.append(length - d_s)
    cuts = np.unique(cuts)
    mids = (cuts[:-1] + cuts[1:]) / 2
    uniform = np.arange(0.0, length, v / 100.0)
    t_in = np.concatenate([mids, uniform])
    s_in = np.where(t_in > length - d_s, 2, 1)
    if ext > 0 and beyond:
        edges = np.array([length] + beyond)
        t_ext = (edges[:-1] + edges[1:]) / 2
        t_ext = t_ext[1:]  # first interval is the endpoint voxel itself
        uni = np.arange(beyond[0], edges[-1], v / 100.0)[1:]
        t_ext = np.concatenate([t_ext, uni])
    else:
        t_ext = np.empty(0)
    t = np.concatenate([t_in, t_ext])
    s = np.concatenate([s_in, np.full(t_ext.size, 2)])
    return o + t[:, None] * d, s


def oracle_scan_states(origin, endpoints, params: Params, bounds) -> np.ndarray:
    """Dense state array (0/1/2) of one scan over the inclusive index box ``bounds``."""
    lo = np.asarray(bounds[0], dtype=np.int64)
    hi = np.asarray(bounds[1], dtype=np.int64)
    shape = tuple(hi - lo + 1)
    if np.prod(shape) > 2 * 10**7:
        raise ValueError(f"oracle bounds of {np.prod(shape)} voxels are too large")
    v = params.voxel_size
    ext = params.extension
    grid = np.zeros(shape, dtype=np.uint8)
    o = np.asarray(origin, dtype=np.float64)

    def put(points, states):
        idx = np.floor(points / v).astype(np.int64) - lo
        if (idx < 0).any() or (idx >= np.array(shape)).any():
            raise ValueError("ray leaves the oracle bounds")
        np.maximum.at(grid, (idx[:, 0], idx[:, 1], idx[:, 2]), states.astype(np.uint8))

    for e in np.asarray(endpoints, dtype=np.float64).reshape(-1, 3):
        if (np.floor(o / v) == np.floor(e / v)).all():
            put(e[None], np.array([2]))
            continue
        pts, states = _ray_samples(o, e, v, params.d_s, ext)
        put(pts, states)
        put(e[None], np.array([2]))
    return grid


def oracle_void_mask(states: np.ndarray, d_p: int) -> np.ndarray:
    """Intersected cells whose every neighbor within Chebyshev ``d_p`` is observed."""
    observed = states > 0
    padded = np.zeros(tuple(s + 2 * d_p for s in states.shape), dtype=bool)
    padded[d_p:d_p + states.shape[0], d_p:d_p + states.shape[1], d_p:d_p + states.shape[2]] = observed
    ok = states == 1
    nx, ny, nz = states.shape
    for dx in range(-d_p, d_p + 1):
        for dy in range(-d_p, d_p + 1):
            for dz in range(-d_p, d_p + 1):
                ok &= padded[d_p + dx:d_p + dx + nx, d_p + dy:d_p + dy + ny, d_p + dz:d_p + dz + nz]
    return ok


def oracle_voids(scans: Sequence[PosedScan], params: Params, bounds) -> set:
    """Union over scans of the per-scan void keys, computed by dense sampling."""
    lo = np.asarray(bounds[0], dtype=np.int64)
    out = set()
    for scan in scans:
        pts = scan.world_points()
        o = scan.pose.translation
        if params.max_range is not None:
            pts = pts[np.linalg.norm(pts - o, axis=1) <= params.max_range]
        states = oracle_scan_states(o, pts, params, bounds)
        for k in np.argwhere(oracle_void_mask(states, int(params.d_p))) + lo:
            out.add((int(k[0]), int(k[1]), int(k[2])))
    return out


def scene_bounds(spec: SceneSpec, params: Params, margin: int = 2):
    """Index box that contains every box of the scene plus extension headroom."""
    boxes = spec.static_boxes + [d.at(k) for d in spec.dynamic_boxes for k in range(len(spec.sensor_poses))]
    lo = np.min([b.lo for b in boxes], axis=0)
    hi = np.max([b.hi for b in boxes], axis=0)
    pad = params.extension + margin
    v = params.voxel_size
    return np.floor(lo / v).astype(np.int64) - pad, np.floor(hi / v).astype(np.int64) + pad


# ----------------------------------------------------------------------------
# text format

def _vec(text, n, name):
    try:
        vals = [float(x) for x in text.split()]
    except ValueError:
        raise SpecError(name, f"expected {n} numbers, got {text!r}") from None
    if len(vals) != n:
        raise SpecError(name, f"expected {n} numbers, got {len(vals)}")
    return np.array(vals)


_SCALARS = {
    "seed": int, "azimuth_count": int, "elevation_count": int,
    "azimuth_min": float, "azimuth_max": float, "elevation_min": float, "elevation_max": float,
    "pose_noise": float, "rotation_noise": float, "range_noise": float, "max_range": float,
    "scans": int,
}


def parse_scene(text: str) -> SceneSpec:
    """Parse the flat ``key = value`` scene format with repeated sections.

    Top-level keys: seed, azimuth_count/min/max, elevation_count/min/max,
    pose_noise, rotation_noise, range_noise, max_range, and optionally scans
    with sensor_start/sensor_end for a straight trajectory. Sections:
    ``[static_box]`` (min, max), ``[dynamic_box]`` (min, max, repeated
    ``keyframe = scan dx dy dz``) and ``[pose]`` (scan, translation,
    optional quaternion x y z w).
    """
    top: dict = {}
    sections: list = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in ("static_box", "dynamic_box", "pose"):
                raise SpecError(name, f"unknown section on line {lineno}")
            current = (name, [])
            sections.append(current)
            continue
        if "=" not in line:
            raise SpecError(line, f"expected key = value on line {lineno}")
        key, value = (x.strip() for x in line.split("=", 1))
        if current is None:
            top[key] = value
        else:
            current[1].append((key, value))

    spec = SceneSpec()
    scalars = {}
    for key, value in top.items():
        if key in _SCALARS:
            try:
                scalars[key] = _SCALARS[key](value)
            except ValueError:
                raise SpecError(key, f"bad value {value!r}") from None
        elif key not in ("sensor_start", "sensor_end"):
            raise SpecError(key, "unknown key")
    spec.seed = scalars.get("seed", 0)
    spec.azimuth_count = scalars.get("azimuth_count", spec.azimuth_count)
    spec.elevation_count = scalars.get("elevation_count", spec.elevation_count)
    spec.azimuth_range = (scalars.get("azimuth_min", -180.0), scalars.get("azimuth_max", 180.0))
    spec.elevation_range = (scalars.get("elevation_min", -30.0), scalars.get("elevation_max", 30.0))
    spec.pose_noise = scalars.get("pose_noise", 0.0)
    spec.rotation_noise = scalars.get("rotation_noise", 0.0)
    spec.range_noise = scalars.get("range_noise", 0.0)
    spec.max_range = scalars.get("max_range")

    poses = {}
    for name, entries in sections:
        kv = {}
        keyframes = []
        for key, value in entries:
            if name == "dynamic_box" and key == "keyframe":
                vals = _vec(value, 4, "keyframe")
                keyframes.append((int(vals[0]), vals[1:]))
            elif key in kv:
                raise SpecError(key, f"repeated in [{name}]")
            else:
                kv[key] = value
        if name in ("static_box", "dynamic_box"):
            for req in ("min", "max"):
                if req not in kv:
                    raise SpecError(req, f"missing in [{name}]")
            box = Box(_vec(kv["min"], 3, "min"), _vec(kv["max"], 3, "max"))
            if name == "static_box":
                spec.static_boxes.append(box)
            else:
                spec.dynamic_boxes.append(DynamicBox(box, keyframes))
        else:
            if "scan" not in kv or "translation" not in kv:
                raise SpecError("pose", "[pose] needs scan and translation")
            q = _vec(kv.get("quaternion", "0 0 0 1"), 4, "quaternion")
            try:
                poses[int(kv["scan"])] = Pose(_vec(kv["translation"], 3, "translation"), q / np.linalg.norm(q))
            except ValueError as exc:
                raise SpecError("pose", str(exc)) from None

    if poses:
        ids = sorted(poses)
        if ids != list(range(len(ids))):
            raise SpecError("pose", "scan indices must run 0..n-1")
        spec.sensor_poses = [poses[i] for i in ids]
    elif "sensor_start" in top:
        n = scalars.get("scans", 1)
        start = _vec(top["sensor_start"], 3, "sensor_start")
        end = _vec(top.get("sensor_end", top["sensor_start"]), 3, "sensor_end")
        spec.sensor_poses = linear_poses(start, end, n)
    spec.validate()
    return spec


def format_scene(spec: SceneSpec) -> str:
    def vec(x):
        return " ".join(repr(float(c)) for c in x)

    lines = [
        f"seed = {spec.seed}",
        f"azimuth_count = {spec.azimuth_count}",
        f"azimuth_min = {spec.azimuth_range[0]!r}",
        f"azimuth_max = {spec.azimuth_range[1]!r}",
        f"elevation_count = {spec.elevation_count}",
        f"elevation_min = {spec.elevation_range[0]!r}",
        f"elevation_max = {spec.elevation_range[1]!r}",
        f"pose_noise = {spec.pose_noise!r}",
        f"rotation_noise = {spec.rotation_noise!r}",
        f"range_noise = {spec.range_noise!r}",
    ]
    if spec.max_range is not None:
        lines.append(f"max_range = {spec.max_range!r}")
    for b in spec.static_boxes:
        lines += ["", "[static_box]", f"min = {vec(b.lo)}", f"max = {vec(b.hi)}"]
    for d in spec.dynamic_boxes:
        lines += ["", "[dynamic_box]", f"min = {vec(d.box.lo)}", f"max = {vec(d.box.hi)}"]
        lines += [f"keyframe = {k} {vec(off)}" for k, off in d.keyframes]
    for i, p in enumerate(spec.sensor_poses):
        lines += ["", "[pose]", f"scan = {i}", f"translation = {vec(p.translation)}", f"quaternion = {vec(p.quaternion)}"]
    return "\n".join(lines) + "\n"


def read_scene(path) -> SceneSpec:
    return parse_scene(Path(path).read_text())

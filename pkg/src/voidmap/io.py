"""PCD v0.7 point clouds, pose tables, config files and dataset directories."""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .grid import InvalidInputError, Params
from .pipeline import Pose, PosedScan


class ParseError(ValueError):
    def __init__(self, message: str, path=None, line: Optional[int] = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.line = line


class UnsupportedFeatureError(ParseError):
    pass


@dataclass
class CloudFile:
    points: np.ndarray
    labels: Optional[np.ndarray] = None
    viewpoint: Optional[Pose] = None


_HEADER_KEYS = ("VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH", "HEIGHT", "VIEWPOINT", "POINTS", "DATA")
_NP_TYPES = {
    ("F", 4): "<f4", ("F", 8): "<f8",
    ("I", 1): "<i1", ("I", 2): "<i2", ("I", 4): "<i4", ("I", 8): "<i8",
    ("U", 1): "<u1", ("U", 2): "<u2", ("U", 4): "<u4", ("U", 8): "<u8",
}


def _parse_header(fh, path):
    header: Dict[str, List[str]] = {}
    lineno = 0
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise ParseError("unexpected end of file in header", path, lineno)
        line = raw.decode("ascii", errors="replace").strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key = parts[0].upper()
        if key not in _HEADER_KEYS:
            raise ParseError(f"unknown header entry {parts[0]!r}", path, lineno)
        header[key] = parts[1:]
        if key == "DATA":
            return header, lineno


def _fields_dtype(header, path, lineno):
    fields = header.get("FIELDS")
    if not fields:
        raise ParseError("missing FIELDS", path, lineno)
    n = len(fields)
    try:
        sizes = [int(x) for x in header.get("SIZE", [])]
        counts = [int(x) for x in header.get("COUNT", ["1"] * n)]
    except ValueError:
        raise ParseError("non-integer SIZE or COUNT", path, lineno) from None
    types = [t.upper() for t in header.get("TYPE", [])]
    if not (len(sizes) == len(types) == len(counts) == n):
        raise ParseError("FIELDS, SIZE, TYPE and COUNT lengths differ", path, lineno)
    for axis in "xyz":
        if axis not in fields:
            raise ParseError(f"missing field {axis!r}", path, lineno)
    descr = []
    for name, size, typ, count in zip(fields, sizes, types, counts):
        if (typ, size) not in _NP_TYPES:
            raise ParseError(f"unsupported type {typ}{size} for field {name!r}", path, lineno)
        if name in ("x", "y", "z") and (typ != "F" or count != 1):
            raise ParseError(f"field {name!r} must be a scalar float", path, lineno)
        name = name if name != "_" else f"_pad{len(descr)}"
        descr.append((name, _NP_TYPES[(typ, size)], (count,)) if count > 1 else (name, _NP_TYPES[(typ, size)]))
    return np.dtype(descr)


def _viewpoint(header, path, lineno) -> Optional[Pose]:
    vp = header.get("VIEWPOINT")
    if vp is None:
        return None
    try:
        tx, ty, tz, qw, qx, qy, qz = (float(x) for x in vp)
    except ValueError:
        raise ParseError("VIEWPOINT needs 7 numbers: tx ty tz qw qx qy qz", path, lineno) from None
    return Pose([tx, ty, tz], _normalized([qx, qy, qz, qw], path, lineno))


def _normalized(q, path=None, lineno=None) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q)
    if not np.isfinite(norm) or abs(norm - 1.0) > 1e-3:
        raise ParseError(f"quaternion norm {norm:.6g} is not within 1e-3 of 1", path, lineno)
    return q / norm


def read_pcd(path) -> CloudFile:
    """Read an ascii or binary PCD file.

    A ``label`` field, if present, must hold 0 (static) or 1 (dynamic).
    """
    path = Path(path)
    with open(path, "rb") as fh:
        header, lineno = _parse_header(fh, path)
        dtype = _fields_dtype(header, path, lineno)
        try:
            n = int(header["POINTS"][0]) if "POINTS" in header else (
                int(header["WIDTH"][0]) * int(header.get("HEIGHT", ["1"])[0])
            )
        except (KeyError, IndexError, ValueError):
            raise ParseError("missing or invalid POINTS/WIDTH", path, lineno) from None
        mode = header["DATA"][0].lower() if header["DATA"] else ""
        if mode == "ascii":
            data = _read_ascii(fh, dtype, n, path, lineno)
        elif mode == "binary":
            buf = fh.read(n * dtype.itemsize)
            if len(buf) < n * dtype.itemsize:
                raise ParseError(f"binary payload truncated: expected {n} points", path, lineno)
            data = np.frombuffer(buf, dtype=dtype, count=n)
        elif mode == "binary_compressed":
            raise UnsupportedFeatureError("DATA binary_compressed is not supported", path, lineno)
        else:
            raise ParseError(f"unknown DATA mode {mode!r}", path, lineno)

    pts = np.stack([data["x"], data["y"], data["z"]], axis=1)
    labels = None
    if "label" in dtype.names:
        raw = np.asarray(data["label"]).reshape(n, -1)[:, 0]
        if raw.dtype.kind == "f":
            raise ParseError("label field must be an integer type", path)
        bad = (raw != 0) & (raw != 1)
        if bad.any():
            raise ParseError(f"label value {raw[bad][0]} is not 0 (static) or 1 (dynamic)", path)
        labels = raw.astype(np.uint8)
    return CloudFile(pts, labels, _viewpoint(header, path, lineno))


def _read_ascii(fh, dtype, n, path, lineno):
    data = np.zeros(n, dtype=dtype)
    flat = [(name, dtype[name]) for name in dtype.names]
    width = sum(int(np.prod(dt.shape)) if dt.shape else 1 for _, dt in flat)
    rows = []
    for i in range(n):
        raw = fh.readline()
        if not raw:
            raise ParseError(f"expected {n} points, found {i}", path, lineno + i + 1)
        parts = raw.split()
        if len(parts) != width:
            raise ParseError(f"expected {width} values, found {len(parts)}", path, lineno + i + 1)
        rows.append(parts)
    if not n:
        return data
    table = np.array(rows, dtype=object)
    col = 0
    for name, dt in flat:
        k = int(np.prod(dt.shape)) if dt.shape else 1
        base = dt.base if dt.shape else dt
        try:
            vals = np.array(table[:, col:col + k].astype(str), dtype=np.float64 if base.kind == "f" else np.int64)
        except ValueError as exc:
            raise ParseError(f"bad value in field {name!r}: {exc}", path) from None
        data[name] = vals.reshape(data[name].shape).astype(base)
        col += k
    return data


def write_pcd(path, cloud: CloudFile, mode: str = "binary") -> None:
    """Write ``x y z`` (float32) plus an int32 ``label`` field when labels are set."""
    if mode not in ("ascii", "binary"):
        raise ValueError(f"mode must be 'ascii' or 'binary', got {mode!r}")
    pts = np.asarray(cloud.points, dtype=np.float32).reshape(-1, 3)
    n = len(pts)
    names = ["x", "y", "z"]
    descr = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if cloud.labels is not None:
        if len(cloud.labels) != n:
            raise InvalidInputError(f"{len(cloud.labels)} labels for {n} points")
        names.append("label")
        descr.append(("label", "<i4"))
    rec = np.empty(n, dtype=descr)
    rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
    if cloud.labels is not None:
        rec["label"] = np.asarray(cloud.labels, dtype=np.int32)
    vp = cloud.viewpoint or Pose.identity()
    qx, qy, qz, qw = vp.quaternion
    has_label = cloud.labels is not None
    header = (
        "# .PCD v0.7 - Point Cloud Data file format\n"
        "VERSION 0.7\n"
        f"FIELDS {' '.join(names)}\n"
        f"SIZE {' '.join(['4'] * len(names))}\n"
        f"TYPE F F F{' I' if has_label else ''}\n"
        f"COUNT {' '.join(['1'] * len(names))}\n"
        f"WIDTH {n}\n"
        "HEIGHT 1\n"
        "VIEWPOINT " + " ".join(repr(float(x)) for x in (*vp.translation, qw, qx, qy, qz)) + "\n"
        f"POINTS {n}\n"
        f"DATA {mode}\n"
    )
    try:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            if mode == "binary":
                fh.write(rec.tobytes())
            else:
                for r in rec:
                    vals = [np.format_float_positional(r[a], unique=True, trim="-") for a in "xyz"]
                    if has_label:
                        vals.append(str(int(r["label"])))
                    fh.write((" ".join(vals) + "\n").encode("ascii"))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_poses(path) -> Dict[int, Pose]:
    """Lines of ``scan_id tx ty tz qx qy qz qw``; ``#`` starts a comment line."""
    table: Dict[int, Pose] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise ParseError(f"expected 8 columns, found {len(parts)}", path, lineno)
            try:
                sid = int(parts[0])
                vals = [float(x) for x in parts[1:]]
            except ValueError:
                raise ParseError("non-numeric value", path, lineno) from None
            if sid < 0:
                raise ParseError(f"negative scan_id {sid}", path, lineno)
            if sid in table:
                raise ParseError(f"duplicate scan_id {sid}", path, lineno)
            if not np.isfinite(vals).all():
                raise ParseError("non-finite value", path, lineno)
            table[sid] = Pose(vals[:3], _normalized(vals[3:], path, lineno))
    return table


def write_poses(path, poses: Dict[int, Pose]) -> None:
    with open(path, "w") as fh:
        fh.write("# scan_id tx ty tz qx qy qz qw\n")
        for sid in sorted(poses):
            p = poses[sid]
            vals = [*p.translation, *p.quaternion]
            fh.write(f"{sid} " + " ".join(repr(float(x)) for x in vals) + "\n")


_STEM = re.compile(r"^(\d+)\.pcd$")


def list_scans(directory) -> List[Path]:
    """PCD files with numeric stems, ordered by their number."""
    directory = Path(directory)
    files = [(int(m.group(1)), directory / name) for name in os.listdir(directory) if (m := _STEM.match(name))]
    if not files:
        raise InvalidInputError(f"no numbered .pcd files in {directory}")
    ids = [i for i, _ in files]
    if len(set(ids)) != len(ids):
        raise InvalidInputError(f"duplicate scan numbers in {directory}")
    return [p for _, p in sorted(files)]


def load_sequence(directory, pose_source: str = "file", pose_file=None, world_frame: bool = False) -> List[PosedScan]:
    """Load every ``NNNNNN.pcd`` in ``directory`` in numeric order.

    ``pose_source`` is ``"file"`` (``pose_file``, default ``poses.txt`` in the
    directory) or ``"viewpoint"`` (each PCD's VIEWPOINT). With ``world_frame``
    the stored points are taken as world coordinates and moved into the
    sensor frame.
    """
    if pose_source not in ("file", "viewpoint"):
        raise ValueError(f"pose_source must be 'file' or 'viewpoint', got {pose_source!r}")
    directory = Path(directory)
    files = list_scans(directory)
    poses = None
    if pose_source == "file":
        pose_file = Path(pose_file) if pose_file is not None else directory / "poses.txt"
        if not pose_file.exists():
            raise FileNotFoundError(f"pose file not found: {pose_file}")
        poses = read_poses(pose_file)
    scans = []
    for f in files:
        sid = int(_STEM.match(f.name).group(1))
        cloud = read_pcd(f)
        if poses is not None:
            if sid not in poses:
                raise InvalidInputError(f"no pose for scan {sid} ({f.name})")
            pose = poses[sid]
        else:
            if cloud.viewpoint is None:
                raise InvalidInputError(f"scan {sid} ({f.name}) has no VIEWPOINT")
            pose = cloud.viewpoint
        pts = cloud.points.astype(np.float64)
        if world_frame:
            pts = pose.inverse_apply(pts)
        scans.append(PosedScan(sid, pose, pts, cloud.labels))
    return scans


def save_sequence(directory, scans, mode: str = "binary", viewpoint: bool = True) -> None:
    """Write scans as ``NNNNNN.pcd`` plus ``poses.txt``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in scans:
        write_pcd(directory / f"{s.scan_id:06d}.pcd", CloudFile(s.points, s.labels, s.pose if viewpoint else None), mode)
    write_poses(directory / "poses.txt", {s.scan_id: s.pose for s in scans})


_CONFIG_TYPES = {
    "voxel_size": float,
    "d_s": float,
    "d_p": int,
    "max_range": float,
    "mode": str,
    "hit_extension": int,
    "online_order": str,
}


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` comments and blank lines ignored."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("expected key=value", path, lineno)
            key, value = (x.strip() for x in line.split("=", 1))
            if key not in _CONFIG_TYPES:
                raise ParseError(f"unknown key {key!r}", path, lineno)
            try:
                out[key] = _CONFIG_TYPES[key](value)
            except ValueError:
                raise ParseError(f"bad value for {key}: {value!r}", path, lineno) from None
    if out.get("mode", "offline") not in ("offline", "online"):
        raise ParseError(f"mode must be offline or online, got {out['mode']!r}", path)
    return out


def params_from_config(cfg: dict) -> Params:
    keys = ("voxel_size", "d_s", "d_p", "max_range", "hit_extension", "online_order")
    return Params(**{k: cfg[k] for k in keys if k in cfg})

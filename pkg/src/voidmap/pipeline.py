"""Offline and online static/dynamic point classification."""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .grid import InvalidInputError, Params, VoidMap, voxel_keys
from .raycast import build_scratch
from .void import classify_voids

log = logging.getLogger(__name__)


class PointLabel(enum.IntEnum):
    STATIC = 0
    DYNAMIC = 1


@dataclass(frozen=True)
class Pose:
    """Sensor-to-world rigid transform; quaternion stored x, y, z, w."""

    translation: np.ndarray
    quaternion: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        q = np.asarray(self.quaternion, dtype=np.float64).reshape(4)
        if not (np.isfinite(t).all() and np.isfinite(q).all()):
            raise InvalidInputError("non-finite pose")
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise InvalidInputError(f"quaternion not normalized: |q| = {np.linalg.norm(q)}")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", q)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, 3], Rotation.from_matrix(T[:3, :3]).as_quat())

    @property
    def rotation(self) -> np.ndarray:
        return Rotation.from_quat(self.quaternion).as_matrix()

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return pts @ self.rotation.T + self.translation

    def inverse_apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return (pts - self.translation) @ self.rotation


@dataclass
class PosedScan:
    """Sensor-frame points with the pose that produced them.

    ``labels`` optionally carries ground truth aligned with ``points``.
    """

    scan_id: int
    pose: Pose
    points: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
            if len(self.labels) != len(self.points):
                raise InvalidInputError(
                    f"scan {self.scan_id}: {len(self.labels)} labels for {len(self.points)} points"
                )

    @property
    def retained(self) -> np.ndarray:
        """Raw indices of points with finite coordinates."""
        return np.flatnonzero(np.isfinite(self.points).all(axis=1))

    def world_points(self) -> np.ndarray:
        """World-frame coordinates of the retained points."""
        return self.pose.apply(self.points[self.retained])


@dataclass
class ScanLabels:
    scan_id: int
    indices: np.ndarray
    labels: np.ndarray

    @property
    def dynamic(self) -> np.ndarray:
        return self.labels == PointLabel.DYNAMIC


@dataclass
class LabeledSequence:
    """Per-scan labels; ``indices`` map each label back to its raw point."""

    scans: List[ScanLabels] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.scans)

    def __iter__(self):
        return iter(self.scans)

    def __getitem__(self, i) -> ScanLabels:
        return self.scans[i]

    def counts(self) -> dict:
        total = sum(len(s.labels) for s in self.scans)
        dyn = sum(int(s.dynamic.sum()) for s in self.scans)
        return {"retained": total, "static": total - dyn, "dynamic": dyn}

    def raw_labels(self, scan: "PosedScan", i: int, fill: int = -1) -> np.ndarray:
        """Labels for every raw point of ``scan``; dropped points get ``fill``."""
        out = np.full(len(scan.points), fill, dtype=np.int64)
        out[self.scans[i].indices] = self.scans[i].labels
        return out


def ground_truth(scans: Sequence[PosedScan]) -> LabeledSequence:
    """Ground-truth labels of the retained points, aligned like the pipeline output."""
    out = []
    for s in scans:
        if s.labels is None:
            raise InvalidInputError(f"scan {s.scan_id} has no ground-truth labels")
        idx = s.retained
        out.append(ScanLabels(s.scan_id, idx, s.labels[idx].astype(np.uint8)))
    return LabeledSequence(out)


def scan_voids(scan: PosedScan, params: Params) -> np.ndarray:
    """Void keys produced by a single scan on its own."""
    pts = scan.world_points()
    origin = scan.pose.translation
    if params.max_range is not None and len(pts):
        pts = pts[np.linalg.norm(pts - origin, axis=1) <= params.max_range]
    scratch = build_scratch(origin, pts, params)
    return classify_voids(scratch, int(params.d_p))


def integrate_scan(void_map: VoidMap, scan: PosedScan, params: Params) -> VoidMap:
    """Cast one scan, classify its voids and mark them in ``void_map``."""
    try:
        keys = scan_voids(scan, params)
    except InvalidInputError as exc:
        raise InvalidInputError(f"scan {scan.scan_id}: {exc}") from exc
    return void_map.mark_many(keys)


def classify_point(void_map: VoidMap, point) -> PointLabel:
    key = voxel_keys(point, void_map.voxel_size)
    return PointLabel(int(void_map.contains_keys(key)[0]))


def classify_points(void_map: VoidMap, world_points) -> np.ndarray:
    """uint8 labels (1 = dynamic) for an (N, 3) array of world points."""
    keys = voxel_keys(world_points, void_map.voxel_size)
    return void_map.contains_keys(keys).astype(np.uint8)


def classify_scan(void_map: VoidMap, scan: PosedScan) -> ScanLabels:
    idx = scan.retained
    return ScanLabels(scan.scan_id, idx, classify_points(void_map, scan.pose.apply(scan.points[idx])))


def _check(scans) -> list:
    scans = list(scans)
    if not scans:
        raise InvalidInputError("at least one scan is required")
    return scans


def run_offline(scans: Iterable[PosedScan], params: Params = Params(), timings: Optional[list] = None):
    """Integrate every scan, then label all points against the final map."""
    scans = _check(scans)
    void_map = VoidMap.from_params(params)
    for scan in scans:
        t0 = time.perf_counter()
        integrate_scan(void_map, scan, params)
        if timings is not None:
            timings.append(time.perf_counter() - t0)
        log.debug("scan %d integrated", scan.scan_id)
    return void_map, LabeledSequence([classify_scan(void_map, s) for s in scans])


def run_online(scans: Iterable[PosedScan], params: Params = Params(), timings: Optional[list] = None):
    """Label each scan against the map built so far.

    With ``online_order="classify_first"`` scan k sees the voids of scans
    0..k-1 only; ``"integrate_first"`` integrates scan k before labelling it.
    """
    scans = _check(scans)
    void_map = VoidMap.from_params(params)
    labels = []
    for scan in scans:
        t0 = time.perf_counter()
        if params.online_order == "integrate_first":
            integrate_scan(void_map, scan, params)
            labels.append(classify_scan(void_map, scan))
        else:
            labels.append(classify_scan(void_map, scan))
            integrate_scan(void_map, scan, params)
        if timings is not None:
            timings.append(time.perf_counter() - t0)
    return void_map, LabeledSequence(labels)


def export_cleaned(scans: Sequence[PosedScan], labels: LabeledSequence):
    """Split all retained world points into (static, dynamic) arrays."""
    scans = list(scans)
    if len(scans) != len(labels):
        raise InvalidInputError(f"{len(labels)} label sets for {len(scans)} scans")
    static, dynamic = [], []
    for scan, lab in zip(scans, labels):
        if lab.scan_id != scan.scan_id or len(lab.labels) != len(lab.indices):
            raise InvalidInputError(f"labels misaligned for scan {scan.scan_id}")
        if lab.indices.size and lab.indices.max() >= len(scan.points):
            raise InvalidInputError(f"label index out of range for scan {scan.scan_id}")
        pts = scan.pose.apply(scan.points[lab.indices])
        static.append(pts[~lab.dynamic])
        dynamic.append(pts[lab.dynamic])
    return (
        np.concatenate(static) if static else np.empty((0, 3)),
        np.concatenate(dynamic) if dynamic else np.empty((0, 3)),
    )

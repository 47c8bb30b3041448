"""Static/dynamic point classification from single-scan void regions."""
from .grid import (
    InvalidInputError,
    Params,
    ScanScratch,
    VoidMap,
    VoxelState,
    mark_void,
    merge_state,
    neighborhood,
    voxel_key,
    voxel_keys,
)
from .metrics import Confusion, Metrics, compute_metrics, confusion
from .pipeline import (
    LabeledSequence,
    PointLabel,
    Pose,
    PosedScan,
    classify_point,
    export_cleaned,
    ground_truth,
    integrate_scan,
    run_offline,
    run_online,
)
from .raycast import build_scratch, integrate_ray, traverse
from .synth import SceneSpec, corridor_scene, generate, oracle_voids, static_room_scene
from .void import classify_voids

__version__ = "0.1.0"

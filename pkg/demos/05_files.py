"""
Datasets on disk
================

A sequence is a folder of numbered PCD files plus a pose table. The same
layout is what the ``voidmap`` command reads.
"""
import tempfile
from pathlib import Path

import numpy as np
from voidmap import corridor_scene, generate
from voidmap.io import load_sequence, read_pcd, read_poses, save_sequence

scans = generate(corridor_scene(scans=3, azimuth_count=90, elevation_count=16))
folder = Path(tempfile.mkdtemp())
save_sequence(folder, scans)
print(sorted(p.name for p in folder.iterdir()))
print((folder / "poses.txt").read_text())

head = (folder / "000000.pcd").read_bytes().split(b"DATA binary")[0].decode()
print(head)

cloud = read_pcd(folder / "000001.pcd")
print(cloud.points.dtype, cloud.points.shape, np.bincount(cloud.labels))

# poses from the table and from each file's VIEWPOINT agree
table = read_poses(folder / "poses.txt")
for s in load_sequence(folder, pose_source="viewpoint"):
    print(s.scan_id, np.allclose(s.pose.matrix(), table[s.scan_id].matrix()))

"""
A cube that jumps down a corridor
=================================

The cube sits in one place for the first half of the sequence and somewhere
else for the second half. Offline, both copies get removed. Online, a copy
can only be removed once the sensor has seen its spot empty.
"""
import numpy as np
from voidmap import compute_metrics, confusion, corridor_scene, generate, ground_truth, run_offline, run_online

spec = corridor_scene(scans=10)
scans = generate(spec)
gt = ground_truth(scans)
print("cube points per scan:", [int(s.labels.sum()) for s in scans])

_, offline = run_offline(scans)
print(compute_metrics(confusion(offline, gt)).row("offline"))

_, online = run_online(scans)
print(compute_metrics(confusion(online, gt)).row("online"))

# the first half is never caught online: nothing had seen those voxels empty yet
for s, lab in zip(scans, online):
    cube = s.labels == 1
    print(s.scan_id, f"{lab.dynamic[cube].mean():.2f}")

# every online detection is also an offline detection
print(all(not (a.dynamic & ~b.dynamic).any() for a, b in zip(online, offline)))

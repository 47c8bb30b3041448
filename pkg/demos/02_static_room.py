"""
An empty room stays static
==========================

Nothing moves, so nothing should be removed. We also look at what happens
when the poses are off by a couple of voxels and the neighbourhood check is
switched off.
"""
from voidmap import Params, generate, run_offline, static_room_scene

spec = static_room_scene(scans=4, size=(6.0, 5.0, 2.5), azimuth_count=240, elevation_count=32)
scans = generate(spec)
print(len(scans), "scans of", spec.rays_per_scan, "rays")

void_map, labels = run_offline(scans)
print("void voxels:", len(void_map))
print(labels.counts())

# pose error of 0.2 m, no neighbourhood check: walls start to look empty
noisy = generate(static_room_scene(scans=4, size=(6.0, 5.0, 2.5), azimuth_count=240,
                                   elevation_count=32, pose_noise=0.2, seed=1))
for p in (Params(d_p=0), Params(d_p=1), Params(d_p=2)):
    _, lab = run_offline(noisy, p)
    print(f"d_p={p.d_p}: {lab.counts()['dynamic']} points called dynamic")

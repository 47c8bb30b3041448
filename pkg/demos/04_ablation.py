"""
What the two margins buy under pose noise
=========================================

"""
from voidmap import Params, compute_metrics, confusion, corridor_scene, generate, ground_truth, run_offline

scans = generate(corridor_scene(scans=10, pose_noise=0.05, azimuth_count=360, elevation_count=48))
gt = ground_truth(scans)

rows = [
    ("no margins", Params(d_s=0.0, d_p=0)),
    ("range margin only", Params(d_s=0.2, d_p=0)),
    ("neighbourhood only", Params(d_s=0.0, d_p=1)),
    ("both, v=0.2", Params(voxel_size=0.2, d_s=0.2, d_p=1)),
    ("both", Params(d_s=0.2, d_p=1)),
]
print(f"{'':<28s} {'SA':>6s} {'DA':>6s} {'AA':>6s}")
for name, p in rows:
    _, labels = run_offline(scans, p)
    print(compute_metrics(confusion(labels, gt)).row(name))

"""
Walking a single ray through the grid
=====================================

"""
import numpy as np
from voidmap import Params, VoxelState, integrate_ray, traverse

# A ray along x, one metre long, starting in the middle of voxel 0.
origin = (0.05, 0.05, 0.05)
endpoint = (1.05, 0.05, 0.05)
print(traverse(origin, endpoint, 0.1))

# With the default margins the last 0.2 m before the return count as a hit,
# and one extra voxel past the return is marked too.
states = integrate_ray({}, origin, endpoint, Params())
for key, state in sorted(states.items()):
    print(key[0], VoxelState(state).name)

# Turning the margins off leaves a plain "free until the endpoint" ray
plain = integrate_ray({}, origin, endpoint, Params(d_s=0.0, d_p=0))
print(sum(s == VoxelState.INTERSECTED for s in plain.values()), "intersected")

# an oblique ray steps one axis at a time
keys = np.array(traverse((0.05, 0.05, 0.05), (0.43, 0.27, 0.12), 0.1))
print(keys)
print(np.abs(np.diff(keys, axis=0)).sum(axis=1))

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voidmap.grid import ScanScratch, VoxelState
from voidmap.void import classify_voids

I, H = VoxelState.INTERSECTED, VoxelState.HIT


def brute_force(states: dict, d_p: int) -> set:
    out = set()
    for k, s in states.items():
        if s != I:
            continue
        ok = True
        for off in itertools.product(range(-d_p, d_p + 1), repeat=3):
            nb = (k[0] + off[0], k[1] + off[1], k[2] + off[2])
            if states.get(nb, VoxelState.UNKNOWN) == VoxelState.UNKNOWN:
                ok = False
                break
        if ok:
            out.add(k)
    return out


def voids(states, d_p, dense=True):
    got = classify_voids(ScanScratch.from_states(states, dense=dense), d_p)
    return {tuple(int(c) for c in k) for k in got}


def random_states(rng, n=20, p_unknown=0.1, p_hit=0.2):
    out = {}
    draw = rng.random((n, n, n))
    for idx in np.argwhere(draw >= p_unknown):
        r = draw[tuple(idx)]
        out[tuple(int(c) for c in idx)] = H if r < p_unknown + p_hit else I
    return out


def test_single_intersected_voxel():
    assert voids({(0, 0, 0): I}, 1) == set()


def test_block_center_only():
    block = {k: I for k in itertools.product(range(3), repeat=3)}
    assert voids(block, 1) == {(1, 1, 1)}
    assert voids(block, 1, dense=False) == {(1, 1, 1)}
    assert voids(block, 2) == set()


def test_planar_slice_like_figure():
    # a 7x7 slab of three layers: interior intersected cells with hits on the
    # far column; only cells whose 26 neighbours are all observed qualify
    states = {}
    for x, y, z in itertools.product(range(7), range(7), range(3)):
        states[(x, y, z)] = H if x == 6 else I
    got = voids(states, 1)
    expected = {(x, y, 1) for x in range(1, 6) for y in range(1, 6)}
    assert got == expected


def test_d_p_zero_returns_all_intersected():
    states = {(0, 0, 0): I, (5, 5, 5): I, (1, 0, 0): H}
    assert voids(states, 0) == {(0, 0, 0), (5, 5, 5)}


@pytest.mark.parametrize("d_p", [1, 2])
@pytest.mark.parametrize("dense", [True, False])
def test_random_grid_matches_brute_force(rng, d_p, dense):
    for p_unknown in (0.02, 0.1):
        states = random_states(rng, 20, p_unknown=p_unknown)
        assert voids(states, d_p, dense) == brute_force(states, d_p)


def test_anti_monotone_and_hits_excluded(rng):
    states = random_states(rng, 20, p_unknown=0.01)
    prev = None
    for d_p in range(4):
        got = voids(states, d_p)
        assert not any(states[k] == H for k in got)
        if prev is not None:
            assert got <= prev
        prev = got


coords = st.tuples(*[st.integers(0, 6)] * 3)
state_maps = st.dictionaries(coords, st.sampled_from([I, H]), max_size=150)


@settings(max_examples=60, deadline=None)
@given(state_maps, state_maps, st.integers(0, 2))
def test_more_observation_never_shrinks(base, extra, d_p):
    grown = dict(base)
    for k, s in extra.items():
        if k not in grown:
            grown[k] = s
    assert voids(base, d_p) <= voids(grown, d_p)
    assert voids(base, d_p) == brute_force(base, d_p)


def test_empty():
    assert len(classify_voids(ScanScratch.empty(), 1)) == 0

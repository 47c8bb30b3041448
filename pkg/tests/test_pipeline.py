import numpy as np
import pytest

from voidmap.grid import InvalidInputError, Params, VoidMap, voxel_keys
from voidmap.pipeline import (
    LabeledSequence,
    PointLabel,
    Pose,
    PosedScan,
    ScanLabels,
    classify_point,
    export_cleaned,
    ground_truth,
    integrate_scan,
    run_offline,
    run_online,
    scan_voids,
)
from voidmap.synth import generate, static_room_scene


def test_classify_point_examples():
    assert classify_point(VoidMap(), (1.0, 2.0, 3.0)) == PointLabel.STATIC
    m = VoidMap(voxel_size=0.1).mark_void((2, -1, 3))
    assert classify_point(m, (0.25, -0.05, 0.31)) == PointLabel.DYNAMIC
    assert classify_point(m, (0.25, -0.05, 0.41)) == PointLabel.STATIC
    with pytest.raises(InvalidInputError):
        classify_point(m, (np.nan, 0, 0))


def test_classify_many_against_set(rng):
    v = 0.1
    voids = rng.integers(-30, 30, size=(20_000, 3))
    m = VoidMap(voxel_size=v).mark_many(voids)
    oracle = {tuple(k) for k in voids.tolist()}
    pts = rng.uniform(-3, 3, size=(100_000, 3))
    from voidmap.pipeline import classify_points

    got = classify_points(m, pts)
    expected = [tuple(k) in oracle for k in voxel_keys(pts, v).tolist()]
    assert got.astype(bool).tolist() == expected
    assert (classify_points(m, pts) == got).all()


class TestPose:
    def test_identity(self):
        p = Pose.identity()
        pts = np.arange(9.0).reshape(3, 3)
        assert np.allclose(p.apply(pts), pts)

    def test_matrix_round_trip(self, rng):
        from scipy.spatial.transform import Rotation

        q = Rotation.random(random_state=3).as_quat()
        p = Pose([1, 2, 3], q)
        pts = rng.normal(size=(10, 3))
        assert np.allclose(Pose.from_matrix(p.matrix()).apply(pts), p.apply(pts))
        assert np.allclose(p.inverse_apply(p.apply(pts)), pts)

    def test_unnormalized_rejected(self):
        with pytest.raises(InvalidInputError):
            Pose([0, 0, 0], [0, 0, 0, 1.01])
        with pytest.raises(InvalidInputError):
            Pose([0, np.nan, 0])


class TestIntegrateScan:
    def test_single_point_no_voids(self):
        scan = PosedScan(0, Pose.identity(), [[3.0, 0.4, 0.2]])
        m = integrate_scan(VoidMap(), scan, Params())
        assert len(m) == 0

    def test_empty_scan_is_noop(self):
        m = VoidMap().mark_void((1, 1, 1))
        integrate_scan(m, PosedScan(0, Pose.identity(), np.empty((0, 3))), Params())
        assert m.key_set() == {(1, 1, 1)}

    def test_idempotent(self, small_room):
        _, scans = small_room
        p = Params()
        m = integrate_scan(VoidMap.from_params(p), scans[0], p)
        first = m.copy()
        integrate_scan(m, scans[0], p)
        assert m == first
        assert len(first) > 0

    def test_room_interior_void_walls_not(self, small_room):
        spec, scans = small_room
        p = Params()
        keys = scan_voids(scans[0], p)
        assert len(keys)
        # every void voxel keeps a distance of more than d_s from each wall
        interior_lo = spec.static_boxes[0].hi[0]
        centres = (keys + 0.5) * p.voxel_size
        assert (centres[:, 0] - interior_lo > p.d_s - p.voxel_size).all()
        walls_hit = voxel_keys(scans[0].world_points(), p.voxel_size)
        void_set = {tuple(k) for k in keys.tolist()}
        assert not any(tuple(k) in void_set for k in walls_hit.tolist())

    def test_non_finite_points_dropped(self):
        pts = np.array([[1.0, 0.0, 0.0], [np.nan, 0.0, 0.0], [0.0, 2.0, 0.0]])
        scan = PosedScan(4, Pose.identity(), pts)
        _, labels = run_offline([scan])
        assert labels[0].indices.tolist() == [0, 2]
        raw = labels.raw_labels(scan, 0)
        assert raw.tolist() == [0, -1, 0]

    def test_max_range_limits_casting(self, small_room):
        _, scans = small_room
        near = Params(max_range=1.0)
        keys = scan_voids(scans[0], near)
        centres = (keys + 0.5) * 0.1
        assert (np.linalg.norm(centres - scans[0].pose.translation, axis=1) < 1.2).all()


class TestOffline:
    def test_static_room_has_no_dynamic(self, small_room):
        _, scans = small_room
        _, labels = run_offline(scans, Params())
        assert labels.counts()["dynamic"] == 0
        assert len(labels) == len(scans)
        for scan, lab in zip(scans, labels):
            assert len(lab.labels) == len(scan.points)

    def test_single_scan_all_static(self, small_room):
        _, scans = small_room
        _, labels = run_offline(scans[:1])
        assert labels.counts()["dynamic"] == 0

    def test_moving_cube_detected(self, corridor):
        _, scans = corridor
        _, labels = run_offline(scans, Params())
        for scan, lab in zip(scans[:5], labels):
            cube = scan.labels == 1
            assert cube.any()
            assert lab.dynamic[cube].all()

    def test_permutation_invariant(self, small_room, rng):
        _, scans = small_room
        p = Params()
        ref, ref_labels = run_offline(scans, p)
        for _ in range(3):
            order = rng.permutation(len(scans))
            m, labels = run_offline([scans[i] for i in order], p)
            assert m == ref
            for j, i in enumerate(order):
                assert (labels[j].labels == ref_labels[i].labels).all()

    def test_no_scans(self):
        with pytest.raises(InvalidInputError):
            run_offline([])

    def test_error_names_scan(self):
        bad = PosedScan(17, Pose.identity(), [[1e9, 0, 0]])
        with pytest.raises(InvalidInputError, match="scan 17"):
            run_offline([bad])

    def test_pose_noise_appears_more_dynamic(self):
        p = Params(d_p=0)
        counts = []
        for noise in (0.0, 2 * p.voxel_size):
            spec = static_room_scene(scans=4, size=(5.0, 4.0, 2.5), azimuth_count=180,
                                     elevation_count=32, pose_noise=noise, seed=5)
            _, labels = run_offline(generate(spec), p)
            counts.append(labels.counts()["dynamic"])
        assert counts[1] > counts[0]


class TestOnline:
    def test_first_scan_static(self, corridor):
        _, scans = corridor
        _, labels = run_online(scans)
        assert labels[0].dynamic.sum() == 0

    def test_causal_void_sets(self, corridor):
        _, scans = corridor
        p = Params()
        _, labels = run_online(scans, p)
        seen = VoidMap.from_params(p)
        for scan, lab in zip(scans, labels):
            expected = seen.contains_keys(voxel_keys(scan.world_points(), p.voxel_size))
            assert (lab.dynamic == expected).all()
            seen.mark_many(scan_voids(scan, p))

    def test_cube_only_after_region_seen_empty(self, corridor):
        _, scans = corridor
        _, labels = run_online(scans)
        for scan, lab in zip(scans, labels):
            cube = scan.labels == 1
            if scan.scan_id < 5:
                assert not lab.dynamic[cube].any()
            else:
                assert lab.dynamic[cube].mean() >= 0.99

    def test_online_subset_of_offline(self, corridor):
        _, scans = corridor
        _, off = run_offline(scans)
        for order in ("classify_first", "integrate_first"):
            _, on = run_online(scans, Params(online_order=order))
            for a, b in zip(on, off):
                assert not (a.dynamic & ~b.dynamic).any()

    def test_integrate_first_sees_current_scan(self, corridor):
        _, scans = corridor
        final, on = run_online(scans, Params(online_order="integrate_first"))
        off_map, _ = run_offline(scans)
        assert final == off_map
        assert on.counts()["retained"] == sum(len(s.points) for s in scans)


class TestExport:
    def test_all_static(self, small_room):
        _, scans = small_room
        _, labels = run_offline(scans)
        static, dynamic = export_cleaned(scans, labels)
        assert len(dynamic) == 0
        assert len(static) == sum(len(s.points) for s in scans)

    def test_partition(self, corridor):
        _, scans = corridor
        _, labels = run_offline(scans)
        static, dynamic = export_cleaned(scans, labels)
        assert len(static) + len(dynamic) == labels.counts()["retained"]
        assert len(dynamic) == labels.counts()["dynamic"] > 0

    def test_dynamic_set_covers_cube(self, corridor):
        _, scans = corridor
        _, labels = run_offline(scans)
        gt = ground_truth(scans)
        hit = sum(int((l.dynamic & g.dynamic).sum()) for l, g in zip(labels, gt))
        total = sum(int(g.dynamic.sum()) for g in gt)
        assert hit / total >= 0.99

    def test_misaligned(self, small_room):
        _, scans = small_room
        _, labels = run_offline(scans)
        with pytest.raises(InvalidInputError):
            export_cleaned(scans[:2], labels)
        bad = LabeledSequence([ScanLabels(99, l.indices, l.labels) for l in labels])
        with pytest.raises(InvalidInputError):
            export_cleaned(scans, bad)

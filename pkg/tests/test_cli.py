import json
import subprocess
import sys

import numpy as np
import pytest

from voidmap.cli import main
from voidmap.io import read_pcd, save_sequence
from voidmap.synth import corridor_scene, format_scene, generate, static_room_scene


@pytest.fixture(scope="module")
def room_dir(tmp_path_factory, small_room):
    d = tmp_path_factory.mktemp("room")
    save_sequence(d, small_room[1])
    return d


@pytest.fixture(scope="module")
def corridor_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corridor")
    save_sequence(d, generate(corridor_scene(scans=6, azimuth_count=360, elevation_count=48)))
    return d


def report(out):
    return json.loads((out / "report.json").read_text())


def test_clean_static_room(room_dir, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["clean", "--input", str(room_dir), "--out", str(out), "--gt"]) == 0
    assert "POINTS 0" in (out / "dynamic_points.pcd").read_bytes()[:400].decode(errors="replace")
    assert len(read_pcd(out / "static_map.pcd").points) > 0
    r = report(out)
    assert r["params"]["voxel_size"] == 0.1 and r["params"]["d_s"] == 0.2 and r["params"]["d_p"] == 1
    assert r["totals"]["dynamic"] == 0
    assert r["metrics"]["SA"] == 100.0 and r["metrics"]["DA"] is None
    assert len(r["integrate_time_s"]["per_scan"]) == 4
    assert "100.00" in capsys.readouterr().out


def test_missing_pose_file(tmp_path, small_room, capsys):
    save_sequence(tmp_path / "in", small_room[1][:1])
    (tmp_path / "in" / "poses.txt").unlink()
    assert main(["clean", "--input", str(tmp_path / "in"), "--out", str(tmp_path / "o")]) != 0
    assert "poses.txt" in capsys.readouterr().err


def test_viewpoint_source(room_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["clean", "--input", str(room_dir), "--out", str(a)])
    main(["clean", "--input", str(room_dir), "--viewpoint", "--out", str(b)])
    assert report(a)["void_voxels"] == report(b)["void_voxels"]


def test_online_and_eval(corridor_dir, tmp_path, capsys):
    on, off = tmp_path / "on", tmp_path / "off"
    assert main(["online", "--input", str(corridor_dir), "--out", str(on)]) == 0
    assert main(["clean", "--input", str(corridor_dir), "--out", str(off)]) == 0
    r = report(on)
    assert r["mode"] == "online" and len(r["latency_s"]["per_scan"]) == 6
    first = np.loadtxt(on / "labels" / "000000.txt")
    assert (first == 0).all()
    for i in range(6):
        a = np.loadtxt(on / "labels" / f"{i:06d}.txt")
        b = np.loadtxt(off / "labels" / f"{i:06d}.txt")
        assert not ((a == 1) & (b != 1)).any()

    capsys.readouterr()
    assert main(["eval", "--input", str(corridor_dir), "--pred", str(off / "labels"), "--out", str(tmp_path)]) == 0
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["DA"] > 0 and m["SA"] > 90
    assert "SA" in capsys.readouterr().out


def test_clean_mode_online_flag(corridor_dir, tmp_path):
    out = tmp_path / "o"
    main(["clean", "--mode", "online", "--input", str(corridor_dir), "--out", str(out)])
    assert report(out)["mode"] == "online"


def write_pred(directory, scans, fn):
    directory.mkdir()
    for s in scans:
        np.savetxt(directory / f"{s.scan_id:06d}.txt", fn(s), fmt="%d")


def test_eval_perfect_and_all_static(tmp_path):
    spec = corridor_scene(scans=2, azimuth_count=90, elevation_count=12)
    scans = generate(spec)
    save_sequence(tmp_path / "in", scans)
    write_pred(tmp_path / "perfect", scans, lambda s: s.labels)
    write_pred(tmp_path / "flat", scans, lambda s: np.zeros(len(s.points), dtype=int))
    main(["eval", "--input", str(tmp_path / "in"), "--pred", str(tmp_path / "perfect"), "--out", str(tmp_path / "a")])
    main(["eval", "--input", str(tmp_path / "in"), "--pred", str(tmp_path / "flat"), "--out", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "metrics.json").read_text())
    b = json.loads((tmp_path / "b" / "metrics.json").read_text())
    assert (a["SA"], a["DA"], a["AA"]) == (100.0, 100.0, 100.0)
    assert b["SA"] == 100.0 and b["DA"] == 0.0 and b["AA"] == 0.0


def test_eval_label_count_mismatch(tmp_path, capsys):
    scans = generate(corridor_scene(scans=1, azimuth_count=30, elevation_count=4))
    save_sequence(tmp_path / "in", scans)
    write_pred(tmp_path / "p", scans, lambda s: np.zeros(3, dtype=int))
    assert main(["eval", "--input", str(tmp_path / "in"), "--pred", str(tmp_path / "p")]) == 1
    assert "scan 0" in capsys.readouterr().err


def test_synth_reproducible(tmp_path):
    spec = tmp_path / "scene.txt"
    spec.write_text(format_scene(corridor_scene(scans=3, azimuth_count=40, elevation_count=6)))
    for name in ("a", "b"):
        assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / name)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == ["000000.pcd", "000001.pcd", "000002.pcd", "poses.txt"]
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    out = tmp_path / "clean"
    assert main(["clean", "--input", str(tmp_path / "a"), "--out", str(out), "--gt"]) == 0
    assert "metrics" in report(out)


def test_synth_no_geometry(tmp_path, capsys):
    spec = tmp_path / "scene.txt"
    spec.write_text("[pose]\nscan = 0\ntranslation = 0 0 0\n")
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "x")]) == 1
    assert "static_box" in capsys.readouterr().err


def test_ablate_custom_grid(corridor_dir, tmp_path, capsys):
    out = tmp_path / "abl"
    grid = "0,0,0.1;0.2,0,0.1;0,1,0.1;0.2,1,0.1"
    assert main(["ablate", "--input", str(corridor_dir), "--grid", grid, "--out", str(out)]) == 0
    rows = json.loads((out / "ablation.json").read_text())
    assert len(rows) == 4
    assert len(capsys.readouterr().out.strip().splitlines()) == 5


def test_ablate_default_grid_and_direction(tmp_path):
    scans = generate(corridor_scene(scans=6, azimuth_count=360, elevation_count=48, pose_noise=0.05, seed=2))
    save_sequence(tmp_path / "in", scans)
    out = tmp_path / "abl"
    assert main(["ablate", "--input", str(tmp_path / "in"), "--out", str(out)]) == 0
    rows = json.loads((out / "ablation.json").read_text())
    assert len(rows) == 5
    assert any(r["params"]["voxel_size"] == 0.2 for r in rows)
    by = {(r["params"]["d_s"], r["params"]["d_p"], r["params"]["voxel_size"]): r for r in rows}
    assert by[(0.2, 1, 0.1)]["SA"] > by[(0.0, 0, 0.1)]["SA"]


def test_config_file_overridden_by_flags(room_dir, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("voxel_size = 0.2\nd_p = 2\n")
    out = tmp_path / "o"
    main(["clean", "--input", str(room_dir), "--config", str(cfg), "--dp", "1", "--out", str(out)])
    p = report(out)["params"]
    assert p["voxel_size"] == 0.2 and p["d_p"] == 1


def test_bad_grid_entry(room_dir, tmp_path):
    assert main(["ablate", "--input", str(room_dir), "--grid", "0.2,1", "--out", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    spec = tmp_path / "scene.txt"
    spec.write_text(format_scene(static_room_scene(scans=1, azimuth_count=20, elevation_count=4)))
    done = subprocess.run([sys.executable, "-m", "voidmap", "synth", "--spec", str(spec), "--out", str(tmp_path / "d")],
                          capture_output=True, text=True)
    assert done.returncode == 0, done.stderr
    assert (tmp_path / "d" / "000000.pcd").exists()

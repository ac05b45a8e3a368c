"""End-to-end command-line tests driving main() with real files."""

import json

import numpy as np
import pytest

from splinecast import cli
from splinecast.partition import LODManifest
from splinecast.render import Frame, select_visible
from splinecast.runtime import load_trajectory, orbit_trajectory, save_trajectory
from splinecast.volume import ScalarVolume, read_raw, write_raw


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A generated volume plus mfa and ds stores encoded from it."""
    ws = tmp_path_factory.mktemp("cli")
    raw = ws / "ml.raw"
    assert cli.main(["gen-ml", "--dims", "33", "--out", str(raw)]) == 0
    mfa = ws / "mfa-store"
    code = cli.main([
        "encode", "--input", str(raw), "--store", str(mfa),
        "--levels", "2", "--micro", "9", "--error-bound", "0.05",
    ])
    assert code == 0
    ds = ws / "ds-store"
    code = cli.main([
        "encode", "--input", str(raw), "--store", str(ds),
        "--levels", "2", "--micro", "9", "--backend", "ds",
    ])
    assert code == 0
    traj = ws / "orbit.jsonl"
    save_trajectory(traj, orbit_trajectory(3, radius=3.0))
    return ws, raw, mfa, ds, traj


class TestGenMl:
    def test_writes_raw_with_sidecar(self, tmp_path, capsys):
        out = tmp_path / "vol.raw"
        assert cli.main(["gen-ml", "--dims", "5", "--out", str(out)]) == 0
        vol = read_raw(out)
        assert vol.samples.shape == (5, 5, 5)
        np.testing.assert_allclose(vol.bounds, [[0.0, 7.0]] * 3)
        info = json.loads(capsys.readouterr().out)
        assert info["dims"] == [5, 5, 5]

    def test_default_field_parameters(self):
        parser = cli.build_parser()
        args = parser.parse_args(["gen-ml", "--out", "x.raw"])
        assert args.fm == 6.0
        assert args.alpha == 0.05
        assert args.bounds == [0.0, 7.0]

    def test_anisotropic_dims(self, tmp_path):
        out = tmp_path / "v.raw"
        assert cli.main(["gen-ml", "--dims", "4", "5", "6", "--out", str(out)]) == 0
        assert read_raw(out).samples.shape == (4, 5, 6)


class TestEncode:
    def test_mfa_store_summary(self, workspace, capsys):
        ws, raw, _, _, _ = workspace
        out = ws / "mfa2"
        code = cli.main([
            "encode", "--input", str(raw), "--store", str(out),
            "--levels", "2", "--micro", "9", "--error-bound", "0.05",
        ])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["backend"] == "mfa"
        assert summary["blocks"] == 8 + 64
        assert summary["compression_ratio"] > 0
        assert (out / "manifest.json").exists()

    def test_ds_store_files(self, workspace):
        _, _, _, ds, _ = workspace
        assert (ds / "manifest.json").exists()
        assert any(ds.glob("level-*/*.dsb"))

    def test_incompatible_dims_exit_data(self, workspace, capsys):
        _, raw, _, _, _ = workspace
        code = cli.main(["encode", "--input", str(raw), "--store", "/tmp/nope"])
        assert code == cli.EXIT_DATA
        assert "error:" in capsys.readouterr().err

    def test_bad_mode_is_usage_error(self, workspace):
        _, raw, _, _, _ = workspace
        with pytest.raises(SystemExit) as exc:
            cli.main(["encode", "--input", str(raw), "--store", "/tmp/x",
                      "--mode", "sometimes"])
        assert exc.value.code == 2

    def test_config_file_supplies_flags(self, workspace, tmp_path, capsys):
        ws, raw, _, _, _ = workspace
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"levels": 2, "micro": 9, "error_bound": 0.05}))
        out = tmp_path / "store"
        code = cli.main([
            "encode", "--input", str(raw), "--store", str(out), "--config", str(cfg),
        ])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["blocks"] == 72

    def test_bad_config_exit_data(self, workspace, tmp_path):
        _, raw, _, _, _ = workspace
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1, 2]")
        code = cli.main(["encode", "--input", str(raw), "--store", "/tmp/x",
                         "--config", str(cfg)])
        assert code == cli.EXIT_DATA


class TestRender:
    def test_renders_png(self, workspace, tmp_path):
        _, _, mfa, _, _ = workspace
        out = tmp_path / "frame.png"
        code = cli.main([
            "render", "--store", str(mfa), "--out", str(out),
            "--size", "32x32", "--sample-distance", "0.02",
        ])
        assert code == 0
        frame = Frame.load_png(out)
        assert (frame.width, frame.height) == (32, 32)
        assert frame.rgba[..., 3].max() > 0

    def test_ds_store_renders_too(self, workspace, tmp_path):
        _, _, _, ds, _ = workspace
        out = tmp_path / "ds.png"
        code = cli.main([
            "render", "--store", str(ds), "--out", str(out),
            "--size", "16x16", "--sample-distance", "0.05",
        ])
        assert code == 0
        assert out.exists()

    def test_store_from_environment(self, workspace, tmp_path, monkeypatch):
        _, _, mfa, _, _ = workspace
        monkeypatch.setenv(cli.STORE_ENV, str(mfa))
        out = tmp_path / "env.png"
        code = cli.main(["render", "--out", str(out),
                         "--size", "8x8", "--sample-distance", "0.1"])
        assert code == 0

    def test_no_store_anywhere_exit_data(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv(cli.STORE_ENV, raising=False)
        code = cli.main(["render", "--out", str(tmp_path / "x.png")])
        assert code == cli.EXIT_DATA
        assert "--store" in capsys.readouterr().err

    def test_missing_store_exit_data(self, tmp_path):
        code = cli.main(["render", "--store", str(tmp_path / "ghost"),
                         "--out", str(tmp_path / "x.png")])
        assert code == cli.EXIT_DATA

    def test_bad_size_usage_error(self, workspace, tmp_path):
        _, _, mfa, _, _ = workspace
        with pytest.raises(SystemExit) as exc:
            cli.main(["render", "--store", str(mfa), "--out", str(tmp_path / "x.png"),
                      "--size", "huge"])
        assert exc.value.code == 2


class TestReplay:
    def test_stats_and_frames(self, workspace, tmp_path, capsys):
        _, _, mfa, _, traj = workspace
        stats_json = tmp_path / "stats.json"
        stats_csv = tmp_path / "stats.csv"
        frames = tmp_path / "frames"
        code = cli.main([
            "replay", "--store", str(mfa), "--trajectory", str(traj),
            "--prefetch", "linear", "--size", "16x16", "--sample-distance", "0.05",
            "--stats-json", str(stats_json), "--stats-csv", str(stats_csv),
            "--frames-dir", str(frames),
        ])
        assert code == 0
        rows = json.loads(stats_json.read_text())
        assert len(rows) == 3
        assert {"caching_ms", "rendering_ms", "input_latency_ms"} <= set(rows[0])
        manifest = LODManifest.load(mfa)
        for row, pov in zip(rows, load_trajectory(traj)):
            assert row["visible"] == [a.key for a in select_visible(pov, manifest)]
        assert len(stats_csv.read_text().strip().splitlines()) == 4
        assert sorted(p.name for p in frames.glob("*.png")) == [
            "frame-0000.png", "frame-0001.png", "frame-0002.png",
        ]
        out = json.loads(capsys.readouterr().out)
        assert out["aggregate"]["frames"] == 3

    def test_tiny_cache_exit_capacity(self, workspace, tmp_path):
        _, _, mfa, _, traj = workspace
        code = cli.main([
            "replay", "--store", str(mfa), "--trajectory", str(traj),
            "--cache-capacity", "1", "--size", "8x8", "--sample-distance", "0.1",
        ])
        assert code == cli.EXIT_CAPACITY


class TestCompare:
    def test_both_backends_reported(self, workspace, tmp_path, capsys):
        ws, _, mfa, ds, _ = workspace
        traj = tmp_path / "one.jsonl"
        save_trajectory(traj, orbit_trajectory(1, radius=3.0))
        report = tmp_path / "report.json"
        code = cli.main([
            "compare", "--mfa-store", str(mfa), "--ds-store", str(ds),
            "--trajectory", str(traj), "--sample-distances", "0.02",
            "--size", "16x16", "--out", str(report),
        ])
        assert code == 0
        rows = json.loads(report.read_text())
        assert {r["backend"] for r in rows} == {"mfa", "ds"}
        assert len(rows) == 2
        summary = json.loads(capsys.readouterr().out)
        assert "mfa" in summary and "ds" in summary

    def test_needs_some_store(self, workspace, tmp_path):
        _, _, _, _, traj = workspace
        code = cli.main(["compare", "--trajectory", str(traj)])
        assert code == cli.EXIT_DATA


class TestUsage:
    def test_no_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main([])
        assert exc.value.code == 2

    def test_unknown_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2


class TestEndToEnd:
    def test_constant_volume_single_vs_multi_block(self, tmp_path):
        # A constant field encodes exactly at every level, so a two-level
        # store and a single-block store must render identical frames.
        raw = tmp_path / "const.raw"
        vol = ScalarVolume(
            np.full((9, 9, 9), 0.5, dtype=np.float32), np.array([[0.0, 1.0]] * 3)
        )
        write_raw(raw, vol)
        multi, single = tmp_path / "multi", tmp_path / "single"
        assert cli.main([
            "encode", "--input", str(raw), "--store", str(multi),
            "--levels", "2", "--micro", "5", "--coarsest", "1",
        ]) == 0
        assert cli.main([
            "encode", "--input", str(raw), "--store", str(single),
            "--levels", "1", "--micro", "9", "--coarsest", "1",
        ]) == 0
        frames = []
        for store_dir in (multi, single):
            out = tmp_path / f"{store_dir.name}.png"
            assert cli.main([
                "render", "--store", str(store_dir), "--out", str(out),
                "--size", "24x24", "--sample-distance", "0.02",
            ]) == 0
            frames.append(Frame.load_png(out).rgba)
        np.testing.assert_array_equal(frames[0], frames[1])

"""Metric tests: closed forms plus a library oracle for SSIM."""

import json

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from splinecast.metrics import frame_report, image_mse, psnr, ssim, write_report
from splinecast.render import Frame


def frame_of(rgb, alpha=255):
    rgb = np.asarray(rgb, dtype=np.uint8)
    rgba = np.concatenate(
        [rgb, np.full(rgb.shape[:2] + (1,), alpha, dtype=np.uint8)], axis=-1
    )
    return Frame(width=rgb.shape[1], height=rgb.shape[0], rgba=rgba)


def random_frame(rng, h=32, w=32):
    return frame_of(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


class TestMse:
    def test_identical_is_zero(self):
        rng = np.random.default_rng(0)
        f = random_frame(rng)
        assert image_mse(f, f) == 0.0

    def test_known_offset(self):
        # All channels differ by exactly 51/255 = 0.2.
        a = frame_of(np.full((16, 16, 3), 100, dtype=np.uint8))
        b = frame_of(np.full((16, 16, 3), 151, dtype=np.uint8))
        assert image_mse(a, b) == pytest.approx((51 / 255) ** 2, rel=1e-12)

    def test_alpha_excluded(self):
        a = frame_of(np.full((16, 16, 3), 30, dtype=np.uint8), alpha=255)
        b = frame_of(np.full((16, 16, 3), 30, dtype=np.uint8), alpha=0)
        assert image_mse(a, b) == 0.0

    def test_size_mismatch_rejected(self):
        rng = np.random.default_rng(1)
        with pytest.raises(ValueError, match="sizes differ"):
            image_mse(random_frame(rng, 16, 16), random_frame(rng, 16, 32))


class TestPsnr:
    def test_identical_is_infinite(self):
        rng = np.random.default_rng(2)
        f = random_frame(rng)
        assert psnr(f, f) == float("inf")

    def test_closed_form(self):
        a = frame_of(np.full((16, 16, 3), 100, dtype=np.uint8))
        b = frame_of(np.full((16, 16, 3), 151, dtype=np.uint8))
        assert psnr(a, b) == pytest.approx(10 * np.log10(1.0 / (51 / 255) ** 2))

    def test_orders_by_distortion(self):
        rng = np.random.default_rng(3)
        base = rng.integers(40, 200, size=(32, 32, 3))
        small = frame_of(np.clip(base + rng.integers(-4, 5, base.shape), 0, 255))
        large = frame_of(np.clip(base + rng.integers(-40, 41, base.shape), 0, 255))
        ref = frame_of(base)
        assert psnr(small, ref) > psnr(large, ref)


class TestSsim:
    def test_identical_is_one(self):
        rng = np.random.default_rng(4)
        f = random_frame(rng)
        assert ssim(f, f) == pytest.approx(1.0, abs=1e-12)

    def test_matches_library_oracle(self):
        rng = np.random.default_rng(5)
        ref = rng.integers(0, 256, size=(48, 40, 3), dtype=np.uint8)
        noisy = np.clip(
            ref.astype(int) + rng.integers(-25, 26, ref.shape), 0, 255
        ).astype(np.uint8)
        got = ssim(frame_of(noisy), frame_of(ref))
        want = np.mean(
            [
                structural_similarity(
                    noisy[..., c] / 255.0,
                    ref[..., c] / 255.0,
                    win_size=11,
                    gaussian_weights=True,
                    sigma=1.5,
                    use_sample_covariance=False,
                    data_range=1.0,
                )
                for c in range(3)
            ]
        )
        assert got == pytest.approx(want, abs=1e-9)

    def test_orders_by_structure_loss(self):
        rng = np.random.default_rng(6)
        base = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        mild = np.clip(base.astype(int) + rng.integers(-8, 9, base.shape), 0, 255)
        heavy = rng.integers(0, 256, size=base.shape)
        assert ssim(frame_of(mild), frame_of(base)) > ssim(frame_of(heavy), frame_of(base))

    def test_too_small_rejected(self):
        a = frame_of(np.zeros((8, 8, 3), dtype=np.uint8))
        with pytest.raises(ValueError, match="at least"):
            ssim(a, a)


class TestReports:
    def test_frame_report_fields(self):
        rng = np.random.default_rng(7)
        f = random_frame(rng)
        row = frame_report("lod1", f, f, nbytes=1234)
        assert row["name"] == "lod1"
        assert row["mse"] == 0.0
        assert row["psnr_db"] == float("inf")
        assert row["ssim"] == pytest.approx(1.0)
        assert row["bytes"] == 1234

    def test_write_json(self, tmp_path):
        rows = [{"name": "a", "mse": 0.5, "psnr_db": 3.0, "ssim": 0.9}]
        path = tmp_path / "r.json"
        write_report(rows, path)
        assert json.loads(path.read_text()) == rows

    def test_write_csv(self, tmp_path):
        rows = [{"name": "a", "mse": 0.5}, {"name": "b", "mse": 0.25}]
        path = tmp_path / "r.csv"
        write_report(rows, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "name,mse"
        assert lines[1] == "a,0.5"
        assert len(lines) == 3

    def test_bad_suffix_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="suffix"):
            write_report([], tmp_path / "r.txt")

"""Frame comparison metrics and report writers.

Frames are compared as composites over a black background: the RGB channels
are already premultiplied by alpha, so the alpha channel itself is excluded
from every metric.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .render import Frame

__all__ = ["image_mse", "psnr", "ssim", "frame_report", "write_report"]

# Windowed SSIM constants for unit dynamic range.
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03


def _rgb(frame: Frame) -> np.ndarray:
    return frame.rgba[..., :3].astype(np.float64) / 255.0


def _check_shapes(a: Frame, b: Frame) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"frame sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def image_mse(a: Frame, b: Frame) -> float:
    """Mean squared error over the RGB channels in [0,1] units."""
    _check_shapes(a, b)
    return float(np.mean((_rgb(a) - _rgb(b)) ** 2))


def psnr(a: Frame, b: Frame) -> float:
    """Peak signal-to-noise ratio in dB; identical frames give +inf."""
    mse = image_mse(a, b)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_kernel() -> np.ndarray:
    half = (_SSIM_WINDOW - 1) / 2.0
    x = np.arange(_SSIM_WINDOW) - half
    g = np.exp(-(x**2) / (2.0 * _SSIM_SIGMA**2))
    return g / g.sum()


def _filter2(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode windowed mean along both image axes."""
    out = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="valid"), 1, img)
    return np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="valid"), 0, out)


def ssim(a: Frame, b: Frame) -> float:
    """Mean structural similarity over RGB with a Gaussian window.

    Uses an 11x11 Gaussian (sigma 1.5), k1=0.01, k2=0.03, dynamic range 1,
    averaged over the three channels.
    """
    _check_shapes(a, b)
    x, y = _rgb(a), _rgb(b)
    if min(a.width, a.height) < _SSIM_WINDOW:
        raise ValueError(f"frames must be at least {_SSIM_WINDOW} pixels per side")
    kernel = _gaussian_kernel()
    c1 = _K1**2
    c2 = _K2**2
    scores = []
    for ch in range(3):
        xc, yc = x[..., ch], y[..., ch]
        mu_x = _filter2(xc, kernel)
        mu_y = _filter2(yc, kernel)
        xx = _filter2(xc * xc, kernel) - mu_x**2
        yy = _filter2(yc * yc, kernel) - mu_y**2
        xy = _filter2(xc * yc, kernel) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def frame_report(name: str, rendered: Frame, reference: Frame, nbytes: int | None = None) -> dict:
    """One comparison row: quality of rendered against reference."""
    row = {
        "name": name,
        "mse": image_mse(rendered, reference),
        "psnr_db": psnr(rendered, reference),
        "ssim": ssim(rendered, reference),
    }
    if nbytes is not None:
        row["bytes"] = int(nbytes)
    return row


def write_report(rows: list[dict], path) -> None:
    """Write comparison rows as JSON or CSV depending on the suffix."""
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(rows, indent=2))
    elif path.suffix == ".csv":
        keys = list(rows[0].keys()) if rows else []
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(rows)
    else:
        raise ValueError(f"unsupported report suffix {path.suffix!r} (use .json or .csv)")

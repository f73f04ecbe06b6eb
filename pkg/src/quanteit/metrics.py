"""Image quality metrics: CC, PSNR, ERR and MSSIM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

from .errors import MetricError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

CSV_HEADER = "method,seed,snr_db,cc,psnr,err,mssim,normalized"


@dataclass(frozen=True)
class MetricsReport:
    cc: float
    psnr: float
    err: float
    mssim: float
    normalized: bool
    peak: float

    def csv_row(self, method, seed, snr_db=None) -> str:
        snr = "" if snr_db is None else repr(float(snr_db))
        vals = ",".join(repr(float(v)) for v in (self.cc, self.psnr, self.err, self.mssim))
        return f"{method},{seed},{snr},{vals},{str(self.normalized).lower()}"


def cc(x, y) -> float:
    """Pearson correlation of the flattened arrays."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    xc = x - x.mean()
    yc = y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        raise MetricError("correlation undefined for a constant input")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def psnr(x, truth, peak=1.0) -> float:
    mse = float(np.mean((np.asarray(x, float) - np.asarray(truth, float)) ** 2))
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(peak**2 / mse)))


def err(x, truth) -> float:
    """Relative l2 error ``||x - truth|| / ||truth||``."""
    x = np.asarray(x, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    nt = np.linalg.norm(truth)
    if nt == 0:
        raise MetricError("relative error undefined for an all-zero reference")
    return float(np.linalg.norm(x - truth) / nt)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_map(x, y, data_range):
    w = gaussian_window()
    half = SSIM_WINDOW // 2
    # 'valid' positions only: the full window must fit inside the image
    crop = (slice(half, x.shape[0] - half), slice(half, x.shape[1] - half))

    def filt(a):
        return correlate(a, w, mode="constant")[crop]

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx**2
    syy = filt(y * y) - my**2
    sxy = filt(x * y) - mx * my
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    return ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx**2 + my**2 + c1) * (sxx + syy + c2))


def mssim(x, truth, data_range=1.0) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5).

    3-D volumes, shaped ``(depth, height, width)``, are scored slice by slice
    along depth and averaged.
    """
    x = np.asarray(x, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if x.shape != truth.shape:
        raise MetricError(f"shape mismatch {x.shape} vs {truth.shape}")
    if x.ndim == 3:
        return float(np.mean([mssim(a, b, data_range) for a, b in zip(x, truth)]))
    if x.ndim != 2:
        raise MetricError("MSSIM needs a 2-D image or 3-D volume")
    if min(x.shape) < SSIM_WINDOW:
        raise MetricError(f"image {x.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    return float(_ssim_map(x, truth, data_range).mean())


def evaluate(x, truth, geometry, normalized=True) -> MetricsReport:
    """Score a reconstruction against the ground truth.

    With ``normalized`` both images are divided by their own max-abs value
    and PSNR/MSSIM use a peak of 1. Otherwise the raw values are compared
    and the peak is the dynamic range of the truth.
    """
    x = np.asarray(x, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if normalized:
        from .recon import max_normalize

        x = max_normalize(x)
        truth = max_normalize(truth)
        peak = 1.0
    else:
        peak = float(truth.max() - truth.min())
        if peak == 0:
            raise MetricError("truth has zero dynamic range")
    return MetricsReport(
        cc=cc(x, truth),
        psnr=psnr(x, truth, peak),
        err=err(x, truth),
        mssim=mssim(geometry.reshape(x), geometry.reshape(truth), peak),
        normalized=normalized,
        peak=peak,
    )

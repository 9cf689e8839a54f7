"""Reference quality metrics (PSNR, SSIM, zero-frequency PSNR) and the
band-limited spectral regularization terms plus reconstruction/total
losses, evaluated offline on supplied image triples."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DimensionMismatchError, ImageTooSmallError
from .imgio import PlanarImage
from .spectral import BandMask, dct2, high_mask, low_mask, zero_mask

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricsRecord:
    """One evaluated image pair; the CSV row of the evaluate command."""

    path: str
    psnr: float
    ssim: float
    zf_psnr: float
    l_zf: float
    l_lf: float
    l_hf: float
    k: int


def _check_same_shape(a: PlanarImage, b: PlanarImage) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionMismatchError(
            f"images differ: {a.data.shape} vs {b.data.shape}")


def psnr(a: PlanarImage, b: PlanarImage) -> float:
    """10*log10(1/MSE) for [0,1] images; identical inputs give inf."""
    _check_same_shape(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(width: int, sigma: float) -> np.ndarray:
    x = np.arange(width) - (width - 1) / 2.0
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _local_mean(plane: np.ndarray, kern: np.ndarray) -> np.ndarray:
    # Separable filtering; the border is cropped afterwards so the
    # boundary mode never reaches the retained (valid) region.
    out = correlate1d(plane, kern, axis=0, mode="nearest")
    return correlate1d(out, kern, axis=1, mode="nearest")


def ssim(a: PlanarImage, b: PlanarImage) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01,
    K2=0.03, dynamic range 1.0. RGB inputs are scored per channel and
    averaged."""
    _check_same_shape(a, b)
    if a.height < SSIM_WINDOW or a.width < SSIM_WINDOW:
        raise ImageTooSmallError(
            f"{a.height}x{a.width} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    kern = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    crop = SSIM_WINDOW // 2
    scores = []
    for c in range(a.channels):
        x, y = a.data[c], b.data[c]
        mu_x = _local_mean(x, kern)
        mu_y = _local_mean(y, kern)
        var_x = _local_mean(x * x, kern) - mu_x ** 2
        var_y = _local_mean(y * y, kern) - mu_y ** 2
        cov = _local_mean(x * y, kern) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
        smap = (num / den)[crop:-crop, crop:-crop]
        scores.append(float(smap.mean()))
    return float(np.mean(scores))


def zf_psnr(a: PlanarImage, b: PlanarImage) -> float:
    """PSNR of the DC reconstructions, i.e. of per-channel means."""
    _check_same_shape(a, b)
    da = a.data.mean(axis=(1, 2))
    db = b.data.mean(axis=(1, 2))
    mse = float(np.mean((da - db) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


# ---------------------------------------------------------------------------
# Band-limited spectral losses
# ---------------------------------------------------------------------------

def band_l1(a: PlanarImage, b: PlanarImage, mask: BandMask) -> float:
    """Sum over masked spectral indices of |D(a) - D(b)|, all channels."""
    _check_same_shape(a, b)
    if (mask.height, mask.width) != (a.height, a.width):
        raise DimensionMismatchError("mask dimensions do not match the images")
    diff = np.abs(dct2(a).coeffs - dct2(b).coeffs)
    return float(diff[:, mask.to_mask()].sum())


def l_zf(a: PlanarImage, b: PlanarImage) -> float:
    """Zero-frequency regularization: |DC(a) - DC(b)| summed over channels."""
    return band_l1(a, b, zero_mask(a.height, a.width))


def l_lf(a: PlanarImage, b: PlanarImage, k: int) -> float:
    """Low-band regularization over [0,k]^2 excluding the DC term."""
    return band_l1(a, b, low_mask(k, a.height, a.width))


def l_hf(a: PlanarImage, b: PlanarImage, k: int) -> float:
    """High-band regularization over {i >= k or j >= k}."""
    return band_l1(a, b, high_mask(k, a.height, a.width))


# ---------------------------------------------------------------------------
# Reconstruction / total loss
# ---------------------------------------------------------------------------

def _l1(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.abs(a - b)))


def rec_loss(stage_outputs, gt: PlanarImage) -> float:
    """Sum over stages of L1 plus (1 - SSIM) against the ground truth."""
    total = 0.0
    for out in stage_outputs:
        _check_same_shape(out, gt)
        total += _l1(out.data, gt.data) + (1.0 - ssim(out, gt))
    return total


def total_loss(stage_outputs, gt: PlanarImage, prior_pred: PlanarImage,
               k: int, channel_proj: np.ndarray | None = None) -> float:
    """Reconstruction loss plus the global-prior term and the three
    band regularizers, one per stage output.

    ``prior_pred`` is compared against the ground truth pooled to the
    prior's grid; ``channel_proj`` maps prior channels onto ground-truth
    channels (identity when the counts already match).
    """
    from .neuralkernels import aap  # local import to avoid a cycle

    if len(stage_outputs) != 3:
        raise DimensionMismatchError("expected exactly 3 stage outputs")
    o1, o2, o3 = stage_outputs
    pooled = aap(gt.data, grid=(prior_pred.height, prior_pred.width))
    pred = prior_pred.data
    if channel_proj is not None:
        pred = np.einsum("oc,chw->ohw", np.asarray(channel_proj, dtype=np.float64), pred)
    if pred.shape != pooled.shape:
        raise DimensionMismatchError(
            f"projected prior {pred.shape} vs pooled ground truth {pooled.shape}")
    l_g = _l1(pred, pooled)
    return (rec_loss(stage_outputs, gt) + l_g
            + l_zf(o1, gt) + l_lf(o2, gt, k) + l_hf(o3, gt, k))


# ---------------------------------------------------------------------------
# Record assembly and serialization
# ---------------------------------------------------------------------------

def compute_record(restored: PlanarImage, gt: PlanarImage, k: int,
                   path: str = "") -> MetricsRecord:
    return MetricsRecord(
        path=path,
        psnr=psnr(restored, gt),
        ssim=ssim(restored, gt),
        zf_psnr=zf_psnr(restored, gt),
        l_zf=l_zf(restored, gt),
        l_lf=l_lf(restored, gt, k),
        l_hf=l_hf(restored, gt, k),
        k=k,
    )


def format_value(x) -> str:
    """Render a metric value for CSV/JSON; infinities become "inf",
    never a capped number."""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.6f}"
    return str(x)


def jsonable(value):
    """Recursively replace non-finite floats so json.dumps stays strict."""
    if isinstance(value, float):
        return format_value(value) if math.isinf(value) or math.isnan(value) else value
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    return value

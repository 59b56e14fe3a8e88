"""PSNR and SSIM between 8-bit rasters, with optional region restriction.

PSNR uses the RGB mean squared error of the selected pixels and caps at 99 dB
for identical content.  SSIM is the standard windowed form (11x11 Gaussian,
sigma 1.5, K1=0.01, K2=0.03, L=255) on unrounded ITU-R 601 grayscale with
reflect borders; the score is the mean over windows whose centers fall in the
region.
"""

import numpy as np
from scipy.ndimage import correlate

PSNR_CAP = 99.0


class MetricError(ValueError):
    pass


def gray601(img):
    """ITU-R 601 luma as float64, no rounding."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _check(a, b, region):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch {a.shape} vs {b.shape}")
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if region.shape != a.shape[:2]:
            raise MetricError(
                f"region {region.shape} does not match image {a.shape[:2]}")
        if not region.any():
            raise MetricError("empty evaluation region")
    return a, b, region


def psnr(a, b, region=None):
    """10*log10(255^2 / MSE) over RGB of the selected pixels, capped at 99."""
    a, b, region = _check(a, b, region)
    diff = a.astype(np.float64) - b.astype(np.float64)
    if region is not None:
        diff = diff[region]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(255.0 ** 2 / mse))


def _ssim_window(sigma=1.5, size=11):
    r = size // 2
    g = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(g * g) / (2.0 * sigma * sigma))
    k /= k.sum()
    return np.outer(k, k)


def ssim(a, b, region=None, sigma=1.5, size=11, k1=0.01, k2=0.03, data_range=255.0):
    """Mean SSIM over window centers in ``region`` (default: whole image)."""
    a, b, region = _check(a, b, region)
    x = gray601(a)
    y = gray601(b)
    win = _ssim_window(sigma, size)

    def f(img):
        return correlate(img, win, mode="reflect")

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_x = f(x)
    mu_y = f(y)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    # biased (Wang-style) second moments
    var_x = f(x * x) - mu_xx
    var_y = f(y * y) - mu_yy
    cov = f(x * y) - mu_xy

    smap = (((2.0 * mu_xy + c1) * (2.0 * cov + c2))
            / ((mu_xx + mu_yy + c1) * (var_x + var_y + c2)))
    if region is not None:
        return float(smap[region].mean())
    return float(smap.mean())

"""Shared oracle helpers and test scenes.

Oracles here are deliberately written as plain loops against the documented
formulas, independent of the package's vectorized implementations.
"""

import numpy as np

from freqedit import (Blob, FieldScene, Image, LowpassConfig,
                      gaussian_lowpass, orbit_cameras)


def smooth_image(rng, height, width, channels=1, sigma=1.0, lo=0.15, hi=0.85):
    """Random smooth image stretched into [lo, hi]."""
    cfg = LowpassConfig(sigma=sigma, downscale=1)
    arr = gaussian_lowpass(Image(rng.uniform(0.0, 1.0, (height, width, channels))),
                           cfg).data.copy()
    amin, amax = arr.min(), arr.max()
    if amax > amin:
        arr = lo + (hi - lo) * (arr - amin) / (amax - amin)
    return Image(arr)


def smooth_pair(rng, height, width, channels=1, sigma=1.0, delta_scale=0.15):
    """Color-consistent smooth pair: per-channel difference sums to zero."""
    base = smooth_image(rng, height, width, channels, sigma)
    cfg = LowpassConfig(sigma=sigma, downscale=1)
    delta = gaussian_lowpass(Image(rng.uniform(-1.0, 1.0, (height, width, channels))),
                             cfg).data.copy()
    peak = np.abs(delta).max()
    if peak > 0:
        delta *= delta_scale / peak
    delta -= delta.mean(axis=(0, 1), keepdims=True)
    return base, Image(base.data + delta)


def dense_smoothing_matrix(height, width, kernel, circular=True):
    """(HW x HW) matrix of separable 2-D convolution, built by explicit loops."""
    n = height * width
    radius = len(kernel) // 2
    s = np.zeros((n, n))
    for py in range(height):
        for px in range(width):
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    qy, qx = py + dy, px + dx
                    if circular:
                        qy %= height
                        qx %= width
                    else:
                        qy = _reflect(qy, height)
                        qx = _reflect(qx, width)
                    s[py * width + px, qy * width + qx] += kernel[dy + radius] * kernel[dx + radius]
    return s


def _reflect(i, n):
    if n == 1:
        return 0
    period = 2 * (n - 1)
    k = i % period
    return min(k, period - k)


def dense_flow_system(prob):
    """Loop-assembled gradient matrix A (2n x n) and M = mu A A^T + L (x) I2."""
    h, w = prob.b.shape
    n = h * w
    a = np.zeros((2 * n, n))
    for p in range(n):
        a[2 * p, p] = prob.a_x.ravel()[p]
        a[2 * p + 1, p] = prob.a_y.ravel()[p]
    lap = prob.laplacian.matrix.toarray()
    kron = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            kron[2 * i, 2 * j] = lap[i, j]
            kron[2 * i + 1, 2 * j + 1] = lap[i, j]
    return a, prob.mu * (a @ a.T) + kron


def gentle_orbit_scene():
    """Soft blobs: well-behaved depth for view-consistency bounds."""
    return FieldScene(blobs=(
        Blob(center=np.array([0.0, 0.0, 0.0]), radius=0.45, peak_density=30.0,
             color=np.array([0.9, 0.35, 0.15]), feature=np.arange(8.0) / 8),
        Blob(center=np.array([0.55, 0.45, 0.3]), radius=0.3, peak_density=30.0,
             color=np.array([0.15, 0.5, 0.9]), feature=np.ones(8) * 0.5),
        Blob(center=np.array([-0.55, 0.35, -0.35]), radius=0.35, peak_density=30.0,
             color=np.array([0.3, 0.85, 0.3]), feature=np.linspace(1, 0, 8)),
        Blob(center=np.array([0.1, -0.55, 0.15]), radius=0.25, peak_density=30.0,
             color=np.array([0.95, 0.85, 0.2]), feature=np.linspace(0, 1, 8)),
    ), background_color=np.array([0.06, 0.07, 0.1]))


def sharp_orbit_scene():
    """Dense blobs: crisp silhouettes carrying real high-frequency content."""
    return FieldScene(blobs=(
        Blob(center=np.array([0.0, 0.0, 0.0]), radius=0.315, peak_density=180.0,
             color=np.array([0.9, 0.35, 0.15]), feature=np.arange(8.0) / 8),
        Blob(center=np.array([0.55, 0.45, 0.3]), radius=0.21, peak_density=180.0,
             color=np.array([0.15, 0.5, 0.9]), feature=np.ones(8) * 0.5),
        Blob(center=np.array([-0.55, 0.35, -0.35]), radius=0.245, peak_density=180.0,
             color=np.array([0.3, 0.85, 0.3]), feature=np.linspace(1, 0, 8)),
        Blob(center=np.array([0.1, -0.55, 0.15]), radius=0.175, peak_density=180.0,
             color=np.array([0.95, 0.85, 0.2]), feature=np.linspace(0, 1, 8)),
    ), background_color=np.array([0.06, 0.07, 0.1]))


def orbit_rig(count=12, size=48, focal=96.0, height=0.7):
    return orbit_cameras(count=count, radius=3.0, height=height, focal=focal,
                         width=size, image_height=size, near=1.0, far=6.0)

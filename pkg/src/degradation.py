"""
Synthetic blur degradation for building paired (blurry, clean) training samples,
plus the synthetic flat-texture and vignette corpora used by the smoke runs.
"""

import logging
import math
from typing import List, Optional

import cv2
import numpy as np

from config import BlurSpec
from exceptions import ConfigError
from imaging import ImageTensor

logger = logging.getLogger(__name__)


def _odd_at_least(value: float) -> int:
    size = int(math.ceil(value))
    return size if size % 2 == 1 else size + 1


def gaussian_kernel(sigma: float, size: int) -> np.ndarray:
    """Isotropic normalized Gaussian; sigma == 0 gives the delta kernel."""
    if size < 1 or size % 2 == 0:
        raise ConfigError(f"kernel size must be odd and positive, got {size}")
    half = size // 2
    kernel = np.zeros((size, size), dtype=np.float64)
    if sigma <= 0:
        kernel[half, half] = 1.0
        return kernel
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-coords ** 2 / (2.0 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def motion_kernel(length: float, angle: float, size: Optional[int] = None) -> np.ndarray:
    """Anti-aliased straight-line kernel through the center, bilinear splatting."""
    if size is None:
        size = _odd_at_least(length + 2)
    half = size // 2
    kernel = np.zeros((size, size), dtype=np.float64)
    steps = max(int(math.ceil(length * 4)), 1)
    dx, dy = math.cos(angle), math.sin(angle)
    for t in np.linspace(-length / 2.0, length / 2.0, steps + 1):
        x = half + t * dx
        y = half - t * dy
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        for yy, xx, wgt in ((y0, x0, (1 - fx) * (1 - fy)), (y0, x0 + 1, fx * (1 - fy)),
                            (y0 + 1, x0, (1 - fx) * fy), (y0 + 1, x0 + 1, fx * fy)):
            if 0 <= yy < size and 0 <= xx < size:
                kernel[yy, xx] += wgt
    total = kernel.sum()
    if total <= 0:
        kernel[half, half] = 1.0
        return kernel
    return kernel / total


def sample_blur(spec: BlurSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one normalized, nonnegative blur kernel."""
    kind = spec.kernel_kind
    if kind == "mixed":
        kind = "gaussian" if rng.random() < 0.5 else "motion"

    k_lo, k_hi = spec.kernel_size_range
    if kind == "gaussian":
        sigma = float(rng.uniform(*spec.sigma_range))
        size = min(max(_odd_at_least(6.0 * sigma + 1.0), k_lo), k_hi)
        return gaussian_kernel(sigma, size)
    if kind == "motion":
        length = float(rng.uniform(*spec.motion_len_range))
        angle = float(rng.uniform(0.0, math.pi))
        size = min(max(_odd_at_least(length + 2.0), k_lo), k_hi)
        return motion_kernel(min(length, size - 1.0), angle, size)
    raise ConfigError(f"unknown kernel kind '{spec.kernel_kind}'", key="blur.kernel_kind")


def degrade(img: ImageTensor, kernel: np.ndarray) -> ImageTensor:
    """Reflection-padded 2D convolution of every channel with the kernel."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ConfigError(f"kernel must be a 2D array with odd sides, got {kernel.shape}")
    if kernel.min() < 0 or abs(kernel.sum() - 1.0) > 1e-6:
        raise ConfigError("kernel must be nonnegative and sum to 1")
    if kernel.shape[0] > img.height or kernel.shape[1] > img.width:
        raise ConfigError(
            f"kernel {kernel.shape[0]}x{kernel.shape[1]} larger than image {img.height}x{img.width}"
        )

    data = img.data.astype(np.float64)
    # filter2D correlates; flipping the kernel turns it into convolution
    flipped = cv2.flip(kernel, -1)
    out = cv2.filter2D(data, cv2.CV_64F, flipped, borderType=cv2.BORDER_REFLECT_101)
    if out.ndim == 2:
        out = out[:, :, None]
    return ImageTensor(np.clip(out, 0.0, 1.0).astype(img.data.dtype), img.range_tag)


def make_texture_corpus(count: int, size: int, seed: int = 0) -> List[ImageTensor]:
    """Flat-texture color images: smoothed noise around a mid-gray base."""
    rng = np.random.default_rng(seed)
    images = []
    for _ in range(count):
        base = rng.uniform(0.45, 0.75, size=3)
        noise = rng.normal(0.0, 1.0, size=(size, size, 3))
        texture = cv2.GaussianBlur(noise, (0, 0), sigmaX=1.5)
        texture = texture / (np.abs(texture).max() + 1e-8)
        img = np.clip(base[None, None, :] + 0.15 * texture, 0.0, 1.0)
        images.append(ImageTensor(img.astype(np.float32), "unit"))
    return images


def radial_falloff(height: int, width: int, edge: float = 0.3) -> np.ndarray:
    """Illumination 1.0 at the center falling linearly to `edge` at the corners."""
    ys = (np.arange(height) + 0.5) / height - 0.5
    xs = (np.arange(width) + 0.5) / width - 0.5
    radius = np.sqrt(ys[:, None] ** 2 + xs[None, :] ** 2) / math.sqrt(0.5)
    return 1.0 - (1.0 - edge) * np.clip(radius, 0.0, 1.0)


def apply_vignette(img: ImageTensor, edge: float = 0.3) -> ImageTensor:
    falloff = radial_falloff(img.height, img.width, edge)[:, :, None]
    return ImageTensor((img.data * falloff).astype(np.float32), img.range_tag)

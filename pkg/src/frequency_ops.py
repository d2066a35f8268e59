"""
Frequency decomposition primitives.

Average-pooling separation (APS) splits a feature map into a low band
(average pool, then bilinear upsampling) and the high residual. The Haar
pair below uses the four 2x2 filters
    LL = [[1, 1], [1, 1]]    LH = [[-1, -1], [1, 1]]
    HL = [[-1, 1], [-1, 1]]  HH = [[1, -1], [-1, 1]]
scaled by 1/2 so the transform is orthonormal: the inverse is exact and
sub-band energy equals input energy.

All functions take (batch, channels, height, width) tensors.
"""

from typing import NamedTuple, Tuple

import torch
import torch.nn.functional as F

from exceptions import ShapeError


class FrequencyPair(NamedTuple):
    """low + high reconstructs the source."""

    low: torch.Tensor
    high: torch.Tensor


class WaveletBands(NamedTuple):
    """The four Haar sub-bands, each (B, C, H/2, W/2)."""

    ll: torch.Tensor
    lh: torch.Tensor
    hl: torch.Tensor
    hh: torch.Tensor


def _check_4d(x: torch.Tensor, name: str = "input"):
    if x.dim() != 4:
        raise ShapeError(f"{name} must be (B, C, H, W), got shape {tuple(x.shape)}")


def bilinear_resize(x: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """Half-pixel-center bilinear resize."""
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def downsample2(x: torch.Tensor) -> torch.Tensor:
    """Bilinear x0.5 downsampling.

    At an exact factor of 2 with half-pixel centers every sample falls in the
    middle of a 2x2 block, so this equals 2x2 average pooling.
    """
    if x.shape[-2] % 2 or x.shape[-1] % 2:
        raise ShapeError(f"cannot halve odd spatial size {tuple(x.shape[-2:])}")
    return F.avg_pool2d(x, kernel_size=2, stride=2)


def aps_decompose(x: torch.Tensor, pool: int = 2) -> FrequencyPair:
    """Split x into (low, high) with high = x - low."""
    _check_4d(x)
    if pool < 1:
        raise ShapeError(f"pool size must be >= 1, got {pool}")
    h, w = x.shape[-2:]
    if h % pool or w % pool:
        raise ShapeError(f"spatial size {h}x{w} not divisible by pool {pool}; pad first")
    if pool == 1:
        return FrequencyPair(x, x - x)
    pooled = F.avg_pool2d(x, kernel_size=pool, stride=pool)
    low = bilinear_resize(pooled, (h, w))
    return FrequencyPair(low, x - low)


def dwt_forward(x: torch.Tensor) -> WaveletBands:
    """Orthonormal single-level 2D Haar transform."""
    _check_4d(x)
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ShapeError(f"Haar transform needs even spatial size, got {h}x{w}")
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) * 0.5
    lh = (c + d - a - b) * 0.5
    hl = (b + d - a - c) * 0.5
    hh = (a + d - b - c) * 0.5
    return WaveletBands(ll, lh, hl, hh)


def dwt_inverse(bands: WaveletBands) -> torch.Tensor:
    """Exact inverse of dwt_forward."""
    ll, lh, hl, hh = bands
    for name, band in zip(("ll", "lh", "hl", "hh"), bands):
        _check_4d(band, name)
    if not (ll.shape == lh.shape == hl.shape == hh.shape):
        raise ShapeError(
            "sub-band shapes differ: "
            + ", ".join(str(tuple(b.shape)) for b in bands)
        )
    a = (ll - lh - hl + hh) * 0.5
    b = (ll - lh + hl - hh) * 0.5
    c = (ll + lh - hl - hh) * 0.5
    d = (ll + lh + hl + hh) * 0.5

    n, ch, h, w = ll.shape
    out = ll.new_empty((n, ch, h * 2, w * 2))
    out[..., 0::2, 0::2] = a
    out[..., 0::2, 1::2] = b
    out[..., 1::2, 0::2] = c
    out[..., 1::2, 1::2] = d
    return out

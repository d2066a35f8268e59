"""
Retinex-guided illumination compensation.

With the target illumination taken as uniform full light, the
compensation ratio r equals the estimated illumination L, and the
enhanced image is I / r. The estimator is a small convolutional network
built from color preservation units (CPU): residual blocks that process
the four Haar sub-bands of a feature map with parallel 5x5 and 1x1
branches before transforming back.
"""

import logging
from typing import Dict, Tuple

import torch
import torch.nn as nn

from config import CpuConfig, RiceConfig
from exceptions import ContractViolation, ShapeError
from fred_net import check_finite_parameters, conv3x3
from frequency_ops import WaveletBands, dwt_forward, dwt_inverse
from imaging import ImageTensor, from_tensor, to_tensor

logger = logging.getLogger(__name__)

BAND_NAMES = ("ll", "lh", "hl", "hh")


class BandBranches(nn.Module):
    """H5^2(x) + H1^2(x) for one sub-band."""

    def __init__(self, channels: int):
        super().__init__()
        self.wide = nn.Sequential(
            nn.Conv2d(channels, channels, 5, padding=2),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 5, padding=2),
        )
        self.point = nn.Sequential(
            nn.Conv2d(channels, channels, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.wide(x) + self.point(x)


class CpuBlock(nn.Module):
    """F_wt = W^-1(processed sub-bands of W(F)) + F."""

    def __init__(self, cfg: CpuConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.per_band_params:
            self.branches = nn.ModuleList([BandBranches(cfg.channels) for _ in BAND_NAMES])
        else:
            self.branches = BandBranches(cfg.channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.cfg.channels:
            raise ShapeError(f"CPU expects {self.cfg.channels} channels, got {x.shape[1]}")
        bands = dwt_forward(x)
        if self.cfg.per_band_params:
            processed = [branch(band) for branch, band in zip(self.branches, bands)]
        else:
            # Shared branches: run all four bands as one batch
            n = x.shape[0]
            stacked = self.branches(torch.cat(tuple(bands), dim=0))
            processed = list(torch.split(stacked, n, dim=0))
        return dwt_inverse(WaveletBands(*processed)) + x


class PlainBlock(nn.Module):
    """Spatial-only replacement for the CPU used by the no-CPU ablation."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            conv3x3(channels, channels),
            nn.ReLU(inplace=True),
            conv3x3(channels, channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


def cpu_block(features: torch.Tensor, cfg: CpuConfig,
              params: Dict[str, torch.Tensor]) -> torch.Tensor:
    """Functional form of one CPU block with the given parameters."""
    block = CpuBlock(cfg).to(features.device, features.dtype)
    block.load_state_dict(params)
    return block(features)


def apply_retinex(image: torch.Tensor, ratio: torch.Tensor, epsilon_r: float = 0.0) -> torch.Tensor:
    """I / r clamped to [0, 1]."""
    if image.shape != ratio.shape:
        raise ShapeError(f"image {tuple(image.shape)} and ratio {tuple(ratio.shape)} differ")
    if epsilon_r > 0 and bool((ratio < epsilon_r).any()):
        raise ContractViolation(f"ratio below floor {epsilon_r}")
    if bool((ratio <= 0).any()):
        raise ContractViolation("ratio must be strictly positive")
    return (image / ratio).clamp(0.0, 1.0)


class RiceNet(nn.Module):
    """Illumination estimator; forward returns (ratio, enhanced, raw illumination)."""

    def __init__(self, cfg: RiceConfig):
        super().__init__()
        self.cfg = cfg
        self.head = conv3x3(3, cfg.channels)
        if cfg.use_cpu:
            blocks = [CpuBlock(cfg.cpu) for _ in range(cfg.cpu_blocks)]
        else:
            blocks = [PlainBlock(cfg.channels) for _ in range(cfg.cpu_blocks)]
        self.blocks = nn.Sequential(*blocks)
        self.tail = conv3x3(cfg.channels, 3)

    def check_input(self, x: torch.Tensor):
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"RICE expects (B, 3, H, W), got {tuple(x.shape)}")
        h, w = x.shape[-2:]
        if h % 2 or w % 2:
            raise ShapeError(f"RICE input {h}x{w} must have even dimensions; pad first")
        if bool((x < 0).any()) or bool((x > 1).any()):
            raise ContractViolation("RICE input must lie in [0, 1]")

    def estimate_illumination(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.tail(self.blocks(self.head(x))))

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        self.check_input(x)
        illum = self.estimate_illumination(x)
        ratio = illum.clamp(self.cfg.epsilon_r, 1.0)
        enhanced = (x / ratio).clamp(0.0, 1.0)
        return ratio, enhanced, illum


def rice_forward(deblurred: ImageTensor, cfg: RiceConfig,
                 params: Dict[str, torch.Tensor]) -> Tuple[ImageTensor, ImageTensor, ImageTensor]:
    """Run RICE on one image: (ratio, enhanced, raw illumination)."""
    deblurred.check_image()
    model = RiceNet(cfg)
    model.load_state_dict(params)
    model.eval()
    check_finite_parameters(model, "RICE")
    with torch.no_grad():
        ratio, enhanced, illum = model(to_tensor(deblurred))
    return from_tensor(ratio), from_tensor(enhanced), from_tensor(illum, "signed")

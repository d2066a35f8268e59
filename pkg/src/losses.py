"""
Training losses for both stages.

Deblurring (paired):       L_cont + beta * L_MSFR + gamma * L_per
Illumination (no targets): alpha * L_f + L_s + L_exp

Every function takes (B, C, H, W) tensors and returns a 0-dim tensor.
"""

import logging
from typing import Dict, List, Protocol, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from config import DeblurLossWeights, IllumLossWeights
from exceptions import ShapeError
from fred_net import build_pyramid

logger = logging.getLogger(__name__)


class FeatureExtractor(Protocol):
    """Maps an image batch to a list of feature maps, deterministically."""

    def __call__(self, x: torch.Tensor) -> List[torch.Tensor]:
        ...


def _check_same(a: torch.Tensor, b: torch.Tensor, what: str):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


def _check_scales(preds: Sequence[torch.Tensor], targets: Sequence[torch.Tensor], what: str):
    if len(preds) != len(targets):
        raise ShapeError(f"{what}: {len(preds)} predictions vs {len(targets)} targets")
    for p, t in zip(preds, targets):
        _check_same(p, t, what)


def multiscale_targets(clean: torch.Tensor, levels: int) -> List[torch.Tensor]:
    """Ground truth at every supervision scale, coarsest first."""
    return list(reversed(build_pyramid(clean, levels)))


def loss_content(preds: Sequence[torch.Tensor], targets: Sequence[torch.Tensor]) -> torch.Tensor:
    """Sum over scales of the mean absolute error."""
    _check_scales(preds, targets, "content loss")
    return sum(F.l1_loss(p, t) for p, t in zip(preds, targets))


def loss_msfr(preds: Sequence[torch.Tensor], targets: Sequence[torch.Tensor]) -> torch.Tensor:
    """Sum over scales of the L1 distance between unnormalized 2D spectra."""
    _check_scales(preds, targets, "frequency reconstruction loss")
    total = 0.0
    for p, t in zip(preds, targets):
        diff = torch.fft.fft2(p, norm="backward") - torch.fft.fft2(t, norm="backward")
        total = total + (diff.real.abs().sum() + diff.imag.abs().sum()) / p.numel()
    return total


def loss_perceptual(pred: torch.Tensor, target: torch.Tensor,
                    extractor: FeatureExtractor) -> torch.Tensor:
    """Sum over extractor layers of mean squared feature difference."""
    _check_same(pred, target, "perceptual loss")
    pred_feats = extractor(pred)
    target_feats = extractor(target)
    return sum(F.mse_loss(p, t) for p, t in zip(pred_feats, target_feats))


def loss_fidelity(illum: torch.Tensor, input_img: torch.Tensor) -> torch.Tensor:
    """Illumination estimate should track the observed image."""
    _check_same(illum, input_img, "fidelity loss")
    return F.mse_loss(illum, input_img)


def edge_weights(guide: torch.Tensor, sigma_w: float):
    """exp(-sum_c dguide^2 / (2 sigma^2)) for horizontal and vertical neighbor pairs."""
    dh = guide[..., :, 1:] - guide[..., :, :-1]
    dv = guide[..., 1:, :] - guide[..., :-1, :]
    denom = 2.0 * sigma_w ** 2
    w_h = torch.exp(-dh.pow(2).sum(dim=1, keepdim=True) / denom)
    w_v = torch.exp(-dv.pow(2).sum(dim=1, keepdim=True) / denom)
    return w_h, w_v


def loss_smooth(illum: torch.Tensor, guide: torch.Tensor, sigma_w: float = 0.1) -> torch.Tensor:
    """Edge-aware total variation of the illumination, weighted by input-image edges."""
    if illum.shape[0] != guide.shape[0] or illum.shape[-2:] != guide.shape[-2:]:
        raise ShapeError(
            f"smoothness loss: illumination {tuple(illum.shape)} vs guide {tuple(guide.shape)}"
        )
    w_h, w_v = edge_weights(guide.detach(), sigma_w)
    zero = illum.new_zeros(())
    term_h = (w_h * (illum[..., :, 1:] - illum[..., :, :-1]).abs()).mean() if illum.shape[-1] > 1 else zero
    term_v = (w_v * (illum[..., 1:, :] - illum[..., :-1, :]).abs()).mean() if illum.shape[-2] > 1 else zero
    return term_h + term_v


def loss_exposure(enhanced: torch.Tensor, level: float = 0.6, patch: int = 16) -> torch.Tensor:
    """Mean absolute deviation of patch gray levels from the well-exposed level."""
    h, w = enhanced.shape[-2:]
    if h % patch or w % patch:
        raise ShapeError(f"exposure loss: {h}x{w} not divisible by patch {patch}; pad first")
    gray = enhanced.mean(dim=1, keepdim=True)
    means = F.avg_pool2d(gray, kernel_size=patch, stride=patch)
    return (means - level).abs().mean()


def deblur_loss_terms(preds: Sequence[torch.Tensor], targets: Sequence[torch.Tensor],
                      weights: DeblurLossWeights, extractor: FeatureExtractor) -> Dict[str, torch.Tensor]:
    cont = loss_content(preds, targets)
    msfr = loss_msfr(preds, targets) if weights.beta > 0 else cont.new_zeros(())
    if weights.gamma > 0:
        per = loss_perceptual(preds[-1], targets[-1], extractor)
    else:
        per = cont.new_zeros(())
    total = cont + weights.beta * msfr + weights.gamma * per
    return {"content": cont, "msfr": msfr, "perceptual": per, "total": total}


def loss_deblur_total(preds: Sequence[torch.Tensor], targets: Sequence[torch.Tensor],
                      weights: DeblurLossWeights, extractor: FeatureExtractor) -> torch.Tensor:
    """Content + beta * MSFR + gamma * perceptual (finest scale only)."""
    return deblur_loss_terms(preds, targets, weights, extractor)["total"]


def illum_loss_terms(illum: torch.Tensor, enhanced: torch.Tensor, input_img: torch.Tensor,
                     weights: IllumLossWeights) -> Dict[str, torch.Tensor]:
    fid = loss_fidelity(illum, input_img)
    smooth = loss_smooth(illum, input_img, weights.sigma_w)
    exposure = loss_exposure(enhanced, weights.exposure_target, weights.patch)
    total = weights.alpha * fid + smooth + exposure
    return {"fidelity": fid, "smooth": smooth, "exposure": exposure, "total": total}


def loss_illum_total(illum: torch.Tensor, enhanced: torch.Tensor, input_img: torch.Tensor,
                     weights: IllumLossWeights) -> torch.Tensor:
    """alpha * fidelity + smoothness + exposure."""
    return illum_loss_terms(illum, enhanced, input_img, weights)["total"]


class RandomConvExtractor(nn.Module):
    """Frozen, seeded three-layer conv stack used as a lightweight perceptual extractor."""

    def __init__(self, seed: int = 0, widths: Sequence[int] = (16, 32, 32)):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        in_channels = 3
        for i, width in enumerate(widths):
            fan_in = in_channels * 9
            weight = torch.randn(width, in_channels, 3, 3, generator=generator) * (2.0 / fan_in) ** 0.5
            self.register_buffer(f"weight{i}", weight)
            self.register_buffer(f"bias{i}", torch.zeros(width))
            in_channels = width
        self.depth = len(widths)

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        feats = []
        for i in range(self.depth):
            weight = getattr(self, f"weight{i}").to(x.dtype)
            bias = getattr(self, f"bias{i}").to(x.dtype)
            x = F.relu(F.conv2d(x, weight, bias, stride=1 if i == 0 else 2, padding=1))
            feats.append(x)
        return feats


class VggFeatureExtractor(nn.Module):
    """VGG16 activations at relu1_2, relu2_2 and relu3_3 (frozen)."""

    LAYER_ENDS = (4, 9, 16)

    def __init__(self, pretrained: bool = True):
        super().__init__()
        from torchvision.models import VGG16_Weights, vgg16

        weights = VGG16_Weights.IMAGENET1K_V1 if pretrained else None
        features = vgg16(weights=weights).features[: self.LAYER_ENDS[-1]]
        starts = (0,) + self.LAYER_ENDS[:-1]
        self.slices = nn.ModuleList([features[s:e] for s, e in zip(starts, self.LAYER_ENDS)])
        for param in self.parameters():
            param.requires_grad_(False)
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))
        self.eval()

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        feats = []
        for block in self.slices:
            x = block(x)
            feats.append(x)
        return feats


def build_extractor(name: str, seed: int = 0) -> nn.Module:
    if name == "vgg16":
        logger.info("Using VGG16 perceptual features")
        return VggFeatureExtractor(pretrained=True)
    return RandomConvExtractor(seed=seed)

"""
Frequency-decoupled deblurring network.

The blurry input is split once at full resolution into low and high
frequency components by average-pooling separation. Each component feeds
its own encoder-decoder stream; skip connections inside a stream are
asymmetric channel integration (ACI) units that fuse every encoder level.
At each decoder level a frequency fusion module (FFM) merges the two
streams and predicts a residual added to the input image at that scale.
"""

import logging
from typing import Dict, List, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from config import AciConfig, FredConfig
from exceptions import ConfigError, NumericError, ShapeError
from frequency_ops import aps_decompose, bilinear_resize, downsample2
from imaging import ImageTensor, from_tensor, to_tensor

logger = logging.getLogger(__name__)


def conv3x3(in_channels: int, out_channels: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1)


def conv1x1(in_channels: int, out_channels: int) -> nn.Conv2d:
    return nn.Conv2d(in_channels, out_channels, 1)


class ResBlock(nn.Module):
    """conv3x3 -> ReLU -> conv3x3, plus identity."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            conv3x3(channels, channels),
            nn.ReLU(inplace=True),
            conv3x3(channels, channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class ChannelAttention(nn.Module):
    """Sigmoid gate from a shared MLP over average- and max-pooled descriptors."""

    def __init__(self, channels: int, reduction: int = 8):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.mlp = nn.Sequential(
            nn.Conv2d(channels, hidden, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channels, 1),
        )

    def weights(self, x: torch.Tensor) -> torch.Tensor:
        avg = self.mlp(F.adaptive_avg_pool2d(x, 1))
        mx = self.mlp(F.adaptive_max_pool2d(x, 1))
        return torch.sigmoid(avg + mx)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.weights(x)


def rescale_to(x: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """Bilinear upsampling, or a chain of stride-2 average pools for downsampling."""
    h, w = x.shape[-2:]
    th, tw = size
    if (h, w) == (th, tw):
        return x
    if h >= th and w >= tw:
        while x.shape[-2] > th or x.shape[-1] > tw:
            if x.shape[-2] // 2 < th or x.shape[-1] // 2 < tw:
                raise ShapeError(f"cannot pool {h}x{w} down to {th}x{tw} by factors of 2")
            x = downsample2(x)
        if tuple(x.shape[-2:]) != (th, tw):
            raise ShapeError(f"cannot pool {h}x{w} down to {th}x{tw} by factors of 2")
        return x
    return bilinear_resize(x, size)


class AciUnit(nn.Module):
    """Asymmetric channel integration: global channel gate plus local pointwise branch."""

    def __init__(self, cfg: AciConfig):
        super().__init__()
        self.cfg = cfg
        fused = sum(cfg.in_channels_per_source)
        self.fused_channels = fused
        self.attention = ChannelAttention(fused, cfg.mlp_reduction)
        self.global_proj = conv1x1(fused, fused)
        self.local_branch = nn.Sequential(
            conv1x1(fused, fused),
            nn.ReLU(inplace=True),
            conv1x1(fused, fused),
        )
        self.out_proj = conv1x1(fused, cfg.out_channels)

    def concat_sources(self, sources: Sequence[torch.Tensor], size: Tuple[int, int]) -> torch.Tensor:
        if not sources:
            raise ConfigError("ACI needs at least one source")
        got = [int(s.shape[1]) for s in sources]
        if got != list(self.cfg.in_channels_per_source):
            raise ConfigError(
                f"ACI source channels {got} do not match config "
                f"{list(self.cfg.in_channels_per_source)}"
            )
        return torch.cat([rescale_to(s, size) for s in sources], dim=1)

    def forward(self, sources: Sequence[torch.Tensor], size: Tuple[int, int]) -> torch.Tensor:
        f_s = self.concat_sources(sources, size)
        f_g = self.global_proj(self.attention(f_s))
        f_l = self.local_branch(f_s)
        return self.out_proj(f_g + f_l)


def aci_fuse(sources: Sequence[torch.Tensor], target_shape: Tuple[int, int],
             unit: AciUnit) -> torch.Tensor:
    """Fuse feature maps of any scale into one map of target_shape."""
    return unit(sources, tuple(target_shape))


class FrequencyFusion(nn.Module):
    """Merges high and low stream features and predicts a 3-channel residual."""

    def __init__(self, channels: int, reduction: int = 8):
        super().__init__()
        self.body = nn.Sequential(
            conv3x3(channels * 2, channels),
            nn.ReLU(inplace=True),
            conv3x3(channels, channels),
            nn.ReLU(inplace=True),
        )
        self.attention = ChannelAttention(channels, reduction)
        self.head = conv3x3(channels, 3)

    def forward(self, high: torch.Tensor, low: torch.Tensor) -> torch.Tensor:
        x = self.body(torch.cat([high, low], dim=1))
        return self.head(self.attention(x))


class FrequencyStream(nn.Module):
    """Encoder-decoder for one frequency component."""

    def __init__(self, cfg: FredConfig):
        super().__init__()
        self.cfg = cfg
        chans = cfg.level_channels
        levels = cfg.levels

        self.head = conv3x3(3, chans[0])
        self.down = nn.ModuleList()
        self.inject = nn.ModuleList()
        self.merge = nn.ModuleList()
        self.encoders = nn.ModuleList()
        for k in range(levels):
            if k > 0:
                self.down.append(conv3x3(chans[k - 1], chans[k], stride=2))
                self.inject.append(nn.Sequential(conv3x3(3, chans[k]), nn.ReLU(inplace=True)))
                self.merge.append(conv1x1(chans[k] * 2, chans[k]))
            self.encoders.append(nn.Sequential(ResBlock(chans[k]), ResBlock(chans[k])))

        self.up = nn.ModuleList([conv1x1(chans[k + 1], chans[k]) for k in range(levels - 1)])
        if cfg.use_aci:
            self.skips = nn.ModuleList([
                AciUnit(AciConfig(
                    in_channels_per_source=chans,
                    out_channels=chans[k],
                    mlp_reduction=cfg.mlp_reduction,
                ))
                for k in range(levels)
            ])
        else:
            self.skips = None
        self.fuse = nn.ModuleList([conv1x1(chans[k] * 2, chans[k]) for k in range(levels)])
        self.decoders = nn.ModuleList([
            nn.Sequential(ResBlock(chans[k]), ResBlock(chans[k])) for k in range(levels)
        ])

    def encode(self, pyramid: List[torch.Tensor]) -> List[torch.Tensor]:
        feats = []
        x = self.head(pyramid[0])
        for k in range(self.cfg.levels):
            if k > 0:
                x = self.down[k - 1](x)
                x = self.merge[k - 1](torch.cat([x, self.inject[k - 1](pyramid[k])], dim=1))
            x = self.encoders[k](x)
            feats.append(x)
        return feats

    def decode(self, feats: List[torch.Tensor]) -> List[torch.Tensor]:
        """Decoder features indexed by level, finest first."""
        levels = self.cfg.levels
        decoded: List[torch.Tensor] = [None] * levels
        x = feats[-1]
        for k in reversed(range(levels)):
            size = tuple(feats[k].shape[-2:])
            if k < levels - 1:
                x = self.up[k](bilinear_resize(decoded[k + 1], size))
            if self.skips is not None:
                skip = aci_fuse(feats, size, self.skips[k])
            else:
                skip = feats[k]
            x = self.fuse[k](torch.cat([x, skip], dim=1))
            decoded[k] = self.decoders[k](x)
        return decoded

    def forward(self, pyramid: List[torch.Tensor]) -> List[torch.Tensor]:
        return self.decode(self.encode(pyramid))


def build_pyramid(x: torch.Tensor, levels: int) -> List[torch.Tensor]:
    """[x, x/2, x/4, ...] with bilinear (2x2 average) downsampling, finest first."""
    pyramid = [x]
    for _ in range(levels - 1):
        pyramid.append(downsample2(pyramid[-1]))
    return pyramid


class FredNet(nn.Module):
    """Dual-stream deblurring network with deep supervision outputs."""

    def __init__(self, cfg: FredConfig):
        super().__init__()
        self.cfg = cfg
        self.high_stream = FrequencyStream(cfg)
        self.low_stream = FrequencyStream(cfg)
        self.fusions = nn.ModuleList([
            FrequencyFusion(c, cfg.mlp_reduction) for c in cfg.level_channels
        ])
        if cfg.zero_init_heads:
            self.zero_output_heads()

    def zero_output_heads(self):
        """Residual identity: every scale output equals the downsampled input."""
        for fusion in self.fusions:
            nn.init.zeros_(fusion.head.weight)
            nn.init.zeros_(fusion.head.bias)

    def check_input(self, x: torch.Tensor):
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"FRED expects (B, 3, H, W), got {tuple(x.shape)}")
        multiple = self.cfg.size_multiple
        h, w = x.shape[-2:]
        if h % multiple or w % multiple:
            raise ShapeError(f"FRED input {h}x{w} must be divisible by {multiple}; pad first")

    def forward_with_diagnostics(self, x: torch.Tensor) -> Tuple[List[torch.Tensor], Dict[str, torch.Tensor]]:
        self.check_input(x)
        levels = self.cfg.levels
        pair = aps_decompose(x, self.cfg.aps_pool)
        image_pyramid = build_pyramid(x, levels)
        high_feats = self.high_stream(build_pyramid(pair.high, levels))
        low_feats = self.low_stream(build_pyramid(pair.low, levels))

        outputs = []
        for k in reversed(range(levels)):
            residual = self.fusions[k](high_feats[k], low_feats[k])
            outputs.append(image_pyramid[k] + residual)

        diagnostics = {
            "aps_low": pair.low.detach(),
            "aps_high": pair.high.detach(),
        }
        return outputs, diagnostics

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        """Per-scale predictions, coarsest first; the last one is the deblurred image."""
        outputs, _ = self.forward_with_diagnostics(x)
        return outputs


def check_finite_parameters(model: nn.Module, name: str = "model"):
    for param_name, param in model.named_parameters():
        if not torch.isfinite(param).all():
            raise NumericError(f"non-finite values in {name} parameter '{param_name}'")


def fred_forward(blurry: ImageTensor, cfg: FredConfig,
                 params: Dict[str, torch.Tensor]) -> Tuple[List[ImageTensor], Dict[str, float]]:
    """Run FRED on one image; outputs are clamped to [0, 1], coarsest first."""
    blurry.check_image()
    model = FredNet(cfg)
    model.load_state_dict(params)
    model.eval()
    check_finite_parameters(model, "FRED")

    with torch.no_grad():
        outputs, diag = model.forward_with_diagnostics(to_tensor(blurry))

    images = [from_tensor(o.clamp(0.0, 1.0)) for o in outputs]
    diagnostics = {
        "high_band_energy": float(diag["aps_high"].pow(2).mean()),
        "low_band_mean": float(diag["aps_low"].mean()),
        "residual_abs_mean": float((outputs[-1] - to_tensor(blurry)).abs().mean()),
    }
    return images, diagnostics

#!/usr/bin/env python3
"""
Tests for the illumination estimator, CPU blocks and the Retinex ratio.
"""

import os
import sys

import numpy as np
import pytest
import torch

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from config import CpuConfig, RiceConfig
from exceptions import ContractViolation, ShapeError
from imaging import ImageTensor
from rice_net import CpuBlock, PlainBlock, RiceNet, apply_retinex, cpu_block, rice_forward


def _rice(**overrides) -> RiceNet:
    torch.manual_seed(0)
    return RiceNet(RiceConfig(**{"channels": 8, "cpu_blocks": 2, **overrides})).eval()


def test_cpu_block_with_zero_weights_is_identity():
    cfg = CpuConfig(channels=8)
    params = {k: torch.zeros_like(v) for k, v in CpuBlock(cfg).state_dict().items()}
    features = torch.randn(2, 8, 6, 10)
    assert torch.equal(cpu_block(features, cfg, params), features)


def test_cpu_block_shape_and_finiteness():
    torch.manual_seed(1)
    block = CpuBlock(CpuConfig(channels=4))
    with torch.no_grad():
        out = block(torch.randn(1, 4, 8, 8))
    assert out.shape == (1, 4, 8, 8)
    assert torch.isfinite(out).all()


def test_cpu_block_per_band_parameters():
    block = CpuBlock(CpuConfig(channels=4, per_band_params=True))
    assert len(block.branches) == 4
    with torch.no_grad():
        assert block(torch.randn(2, 4, 8, 6)).shape == (2, 4, 8, 6)


def test_cpu_block_shape_errors():
    block = CpuBlock(CpuConfig(channels=4))
    with pytest.raises(ShapeError):
        block(torch.randn(1, 4, 7, 8))
    with pytest.raises(ShapeError):
        block(torch.randn(1, 3, 8, 8))


def test_retinex_examples():
    image = torch.tensor([0.3, 0.9, 0.0, 0.4]).view(1, 1, 2, 2)
    ratio = torch.tensor([0.5, 0.5, 0.2, 1.0]).view(1, 1, 2, 2)
    out = apply_retinex(image, ratio, epsilon_r=0.05).flatten().tolist()
    assert out == pytest.approx([0.6, 1.0, 0.0, 0.4])


def test_retinex_unit_ratio_is_identity():
    image = torch.rand(1, 3, 4, 4)
    assert torch.equal(apply_retinex(image, torch.ones_like(image)), image)


def test_retinex_monotone_in_ratio():
    gen = torch.Generator().manual_seed(2)
    image = torch.rand(1, 3, 8, 8, generator=gen)
    r1 = 0.05 + 0.95 * torch.rand(1, 3, 8, 8, generator=gen)
    r2 = 0.05 + (r1 - 0.05) * torch.rand(1, 3, 8, 8, generator=gen)
    assert bool((apply_retinex(image, r2, 0.05) >= apply_retinex(image, r1, 0.05)).all())


def test_retinex_rejects_ratio_below_floor():
    image = torch.rand(1, 3, 2, 2)
    ratio = torch.full_like(image, 0.5)
    ratio[0, 0, 0, 0] = 0.01
    with pytest.raises(ContractViolation):
        apply_retinex(image, ratio, epsilon_r=0.05)
    with pytest.raises(ShapeError):
        apply_retinex(image, torch.ones(1, 3, 2, 3))


def test_rice_ratio_bounds_and_brightening():
    model = _rice()
    x = torch.rand(2, 3, 16, 16)
    with torch.no_grad():
        ratio, enhanced, illum = model(x)
    assert ratio.shape == enhanced.shape == illum.shape == x.shape
    assert bool((ratio >= 0.05).all()) and bool((ratio <= 1.0).all())
    assert bool((enhanced >= x).all())
    assert bool((enhanced <= 1.0).all())


@pytest.mark.parametrize("fill", [0.0, 1.0])
def test_rice_extreme_inputs_stay_finite(fill):
    model = _rice()
    with torch.no_grad():
        outputs = model(torch.full((1, 3, 8, 8), fill))
    assert all(torch.isfinite(t).all() for t in outputs)


def test_rice_without_cpu_uses_plain_blocks():
    model = _rice(use_cpu=False)
    assert all(isinstance(b, PlainBlock) for b in model.blocks)
    with torch.no_grad():
        ratio, _, _ = model(torch.rand(1, 3, 8, 8))
    assert ratio.shape == (1, 3, 8, 8)


def test_rice_input_contract():
    model = _rice()
    with pytest.raises(ContractViolation):
        model(torch.full((1, 3, 8, 8), 1.5))
    with pytest.raises(ShapeError):
        model(torch.rand(1, 3, 7, 8))


def test_rice_forward_with_parameter_map():
    cfg = RiceConfig(channels=8, cpu_blocks=1)
    params = RiceNet(cfg).state_dict()
    image = ImageTensor(np.random.default_rng(0).random((8, 10, 3)).astype(np.float32))

    ratio, enhanced, illum = rice_forward(image, cfg, params)
    assert ratio.shape == enhanced.shape == illum.shape == (8, 10, 3)
    assert ratio.data.min() >= 0.05
    assert np.all(enhanced.data >= image.data)

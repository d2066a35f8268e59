#!/usr/bin/env python3
"""
Tests for average-pooling separation and the Haar transform pair.
"""

import os
import sys

import pytest
import torch
import torch.nn.functional as F

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from exceptions import ShapeError
from frequency_ops import WaveletBands, aps_decompose, downsample2, dwt_forward, dwt_inverse


def _random_even_tensor(gen: torch.Generator) -> torch.Tensor:
    h = 2 * int(torch.randint(1, 33, (1,), generator=gen))
    w = 2 * int(torch.randint(1, 33, (1,), generator=gen))
    c = int(torch.randint(1, 9, (1,), generator=gen))
    return torch.randn(1, c, h, w, generator=gen)


def test_dwt_perfect_reconstruction_and_energy():
    gen = torch.Generator().manual_seed(0)
    for _ in range(200):
        x = _random_even_tensor(gen)
        bands = dwt_forward(x)
        assert bands.ll.shape == (1, x.shape[1], x.shape[2] // 2, x.shape[3] // 2)

        recon = dwt_inverse(bands)
        assert (recon - x).abs().max() <= 1e-5

        energy_in = x.double().pow(2).sum()
        energy_out = sum(b.double().pow(2).sum() for b in bands)
        assert abs(energy_out - energy_in) <= 1e-4 * energy_in


def test_dwt_constant_block():
    x = torch.full((1, 2, 4, 6), 0.3)
    ll, lh, hl, hh = dwt_forward(x)
    assert torch.allclose(ll, torch.full_like(ll, 0.6))
    for band in (lh, hl, hh):
        assert band.abs().max() <= 1e-7


def test_dwt_single_pixel_block():
    x = torch.tensor([[[[1.0, 0.0], [0.0, 0.0]]]])
    ll, lh, hl, hh = dwt_forward(x)
    assert [ll.item(), lh.item(), hl.item(), hh.item()] == [0.5, -0.5, -0.5, 0.5]


def test_dwt_inverse_examples():
    bands = WaveletBands(*(torch.tensor([[[[v]]]]) for v in (0.5, -0.5, -0.5, 0.5)))
    assert dwt_inverse(bands).flatten().tolist() == [1.0, 0.0, 0.0, 0.0]

    c = 0.7
    ll = torch.full((1, 3, 2, 2), 2 * c)
    zeros = torch.zeros_like(ll)
    assert torch.allclose(dwt_inverse(WaveletBands(ll, zeros, zeros, zeros)), torch.full((1, 3, 4, 4), c))


def test_dwt_vertical_variation_only():
    rows = torch.linspace(0, 1, 8).view(1, 1, 8, 1)
    x = rows.expand(1, 2, 8, 6).contiguous()
    _, lh, hl, hh = dwt_forward(x)
    assert hl.abs().max() <= 1e-7
    assert hh.abs().max() <= 1e-7
    assert lh.abs().max() > 0


def test_dwt_shape_errors():
    with pytest.raises(ShapeError):
        dwt_forward(torch.zeros(1, 1, 3, 4))
    with pytest.raises(ShapeError):
        dwt_inverse(WaveletBands(torch.zeros(1, 1, 2, 2), torch.zeros(1, 1, 2, 2),
                                 torch.zeros(1, 1, 2, 3), torch.zeros(1, 1, 2, 2)))


def test_dwt_is_differentiable():
    x = torch.randn(1, 2, 4, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda t: dwt_inverse(dwt_forward(t) ) * 2.0, (x,))


def test_aps_sum_invariant_random():
    gen = torch.Generator().manual_seed(1)
    for _ in range(100):
        x = torch.rand(1, 3, 16, 24, generator=gen)
        pool = int(torch.randint(1, 5, (1,), generator=gen))
        pool = pool if 16 % pool == 0 and 24 % pool == 0 else 2
        low, high = aps_decompose(x, pool)
        assert low.shape == x.shape == high.shape
        assert (low + high - x).abs().max() <= 1e-6


def test_aps_constant_input_has_no_high_band():
    for pool in (1, 2, 4):
        low, high = aps_decompose(torch.full((1, 3, 8, 8), 0.42), pool)
        assert torch.allclose(low, torch.full_like(low, 0.42), atol=1e-6)
        assert high.abs().max() <= 1e-6


def test_aps_pool_one_is_identity():
    x = torch.rand(2, 3, 5, 7)
    low, high = aps_decompose(x, 1)
    assert torch.equal(low, x)
    assert torch.count_nonzero(high) == 0


def test_aps_two_by_two_example():
    x = torch.tensor([[[[0.0, 0.0], [4.0, 4.0]]]])
    low, high = aps_decompose(x, 2)
    assert torch.equal(low, torch.full_like(x, 2.0))
    assert high.flatten().tolist() == [-2.0, -2.0, 2.0, 2.0]


def test_aps_low_band_idempotent_when_pool_grid_is_flat():
    # Zero-mean pattern inside every 2x2 pool block: pooled grid is constant
    pattern = torch.tensor([[1.0, -1.0], [-1.0, 1.0]]).repeat(4, 4)
    x = 0.5 + 0.1 * pattern.view(1, 1, 8, 8)
    low, _ = aps_decompose(x, 2)
    assert aps_decompose(low, 2).high.abs().max() <= 1e-5


def test_aps_rejects_indivisible_dims():
    with pytest.raises(ShapeError):
        aps_decompose(torch.zeros(1, 1, 6, 5), 2)


def test_downsample2_matches_half_pixel_bilinear():
    x = torch.rand(1, 3, 16, 12)
    bilinear = F.interpolate(x, scale_factor=0.5, mode="bilinear", align_corners=False)
    assert torch.allclose(downsample2(x), bilinear, atol=1e-6)

#!/usr/bin/env python3
"""
Tests for image loading, saving, quantization and padding.
"""

import os
import sys

import cv2
import numpy as np
import pytest

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from exceptions import ContractViolation, ImageFormatError, ImageIOError, ShapeError
from imaging import (ImageTensor, PaddingRecord, crop_back, from_tensor, list_images,
                     load_image, pad_to_multiple, quantize, save_image, to_tensor)


def test_load_8bit_extremes(tmp_path):
    raw = np.zeros((4, 4, 3), dtype=np.uint8)
    raw[0, 0] = 255
    cv2.imwrite(str(tmp_path / "a.png"), raw)

    img = load_image(tmp_path / "a.png")
    assert img.shape == (4, 4, 3)
    assert img.data[0, 0, 0] == 1.0
    assert img.data[1, 1, 0] == 0.0
    assert img.range_tag == "unit"


def test_load_16bit_scaling(tmp_path):
    raw = np.full((2, 2, 3), 32768, dtype=np.uint16)
    cv2.imwrite(str(tmp_path / "b.png"), raw)

    img = load_image(tmp_path / "b.png")
    assert img.data[0, 0, 0] == pytest.approx(32768 / 65535, abs=1e-7)
    assert img.data[0, 0, 0] == pytest.approx(0.50000763, abs=1e-7)


def test_grayscale_replicated_to_three_channels(tmp_path):
    raw = np.arange(16, dtype=np.uint8).reshape(4, 4) * 10
    cv2.imwrite(str(tmp_path / "gray.png"), raw)

    img = load_image(tmp_path / "gray.png")
    assert img.channels == 3
    assert np.array_equal(img.data[:, :, 0], img.data[:, :, 2])
    assert img.data[0, 1, 1] == pytest.approx(10 / 255)


def test_load_keeps_rgb_order(tmp_path):
    raw = np.zeros((2, 2, 3), dtype=np.uint8)
    raw[:, :, 2] = 255  # red in BGR storage
    cv2.imwrite(str(tmp_path / "red.png"), raw)

    img = load_image(tmp_path / "red.png")
    assert img.data[0, 0].tolist() == [1.0, 0.0, 0.0]


def test_load_errors(tmp_path):
    with pytest.raises(ImageIOError) as exc_info:
        load_image(tmp_path / "missing.png")
    assert "missing.png" in str(exc_info.value)

    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(ImageIOError):
        load_image(tmp_path / "junk.png")

    cv2.imwrite(str(tmp_path / "float.tif"), np.zeros((4, 4), dtype=np.float32))
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "float.tif")


def test_save_quantization_rounds_half_away_from_zero(tmp_path):
    data = np.array([[[0.5, 1.0, 0.0]]], dtype=np.float32)
    save_image(ImageTensor(data), tmp_path / "q.png")

    stored = cv2.imread(str(tmp_path / "q.png"), cv2.IMREAD_UNCHANGED)
    r, g, b = stored[0, 0, 2], stored[0, 0, 1], stored[0, 0, 0]
    assert (r, g, b) == (128, 255, 0)
    assert quantize(np.array([0.5]), 8)[0] == 128


@pytest.mark.parametrize("bit_depth,suffix", [(8, ".png"), (16, ".png"), (16, ".tif")])
def test_round_trip_error_bound(tmp_path, bit_depth, suffix):
    rng = np.random.default_rng(3)
    original = ImageTensor(rng.random((9, 13, 3)).astype(np.float32))
    path = tmp_path / f"rt{suffix}"

    save_image(original, path, bit_depth=bit_depth)
    first = load_image(path)
    bound = 1.0 / (2 * (2 ** bit_depth - 1)) + 1e-6
    assert np.abs(first.data - original.data).max() <= bound

    save_image(first, path, bit_depth=bit_depth)
    second = load_image(path)
    assert np.array_equal(first.data, second.data)


def test_save_rejects_out_of_range_and_jpeg(tmp_path):
    with pytest.raises(ContractViolation):
        save_image(ImageTensor(np.full((2, 2, 3), 1.5, dtype=np.float32)), tmp_path / "x.png")
    with pytest.raises(ImageFormatError):
        save_image(ImageTensor(np.zeros((2, 2, 3), dtype=np.float32)), tmp_path / "x.jpg")


@pytest.mark.parametrize("shape,m,expected,record", [
    ((250, 250), 8, (256, 256), (6, 6)),
    ((256, 256), 8, (256, 256), (0, 0)),
    ((1, 1), 4, (4, 4), (3, 3)),
])
def test_pad_to_multiple_examples(shape, m, expected, record):
    img = ImageTensor(np.random.default_rng(0).random((*shape, 3)).astype(np.float32))
    padded, rec = pad_to_multiple(img, m)
    assert (padded.height, padded.width) == expected
    assert rec == PaddingRecord(*record)


def test_pad_uses_reflection():
    data = np.arange(3, dtype=np.float32).reshape(1, 3, 1) / 10
    padded, _ = pad_to_multiple(ImageTensor(data, "signed"), 5)
    # [0, .1, .2] reflected without repeating the edge: [.., .1, 0]
    assert padded.data[0, :, 0].tolist() == pytest.approx([0.0, 0.1, 0.2, 0.1, 0.0])


def test_pad_crop_back_identity_random_shapes():
    rng = np.random.default_rng(11)
    for _ in range(50):
        h, w = rng.integers(1, 65, size=2)
        m = int(rng.integers(1, 17))
        img = ImageTensor(rng.random((h, w, 3)).astype(np.float32))
        padded, record = pad_to_multiple(img, m)
        assert padded.height % m == 0 and padded.width % m == 0
        assert np.array_equal(crop_back(padded, record).data, img.data)


def test_pad_rejects_zero_multiple():
    with pytest.raises(ShapeError):
        pad_to_multiple(ImageTensor(np.zeros((2, 2, 3), dtype=np.float32)), 0)


def test_tensor_conversion_round_trip():
    img = ImageTensor(np.random.default_rng(1).random((5, 7, 3)).astype(np.float32))
    tensor = to_tensor(img)
    assert tuple(tensor.shape) == (1, 3, 5, 7)
    assert np.array_equal(from_tensor(tensor).data, img.data)


def test_check_image_contract():
    with pytest.raises(ShapeError):
        ImageTensor(np.zeros((2, 2, 2), dtype=np.float32)).check_image()
    with pytest.raises(ContractViolation):
        ImageTensor(np.full((2, 2, 3), -0.5, dtype=np.float32)).check_image()
    signed = ImageTensor(np.full((2, 2, 3), -0.5, dtype=np.float32), "signed")
    assert signed.check_image() is signed


def test_list_images_filters_extensions(tmp_path):
    for name in ("b.png", "a.jpg", "notes.txt", "c.tiff"):
        (tmp_path / name).write_bytes(b"")
    assert [p.name for p in list_images(tmp_path)] == ["a.jpg", "b.png", "c.tiff"]
    assert list_images(tmp_path / "nope") == []

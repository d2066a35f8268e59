#!/usr/bin/env python3
"""
Tests for the no-reference proxy metrics, quality reports and the metric cache.
"""

import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from cache import MetricCache
from degradation import apply_vignette, degrade, gaussian_kernel, make_texture_corpus
from evaluation import (MEAN_ROW, METRICS, STD_ROW, apply_clahe, block_means, compute_metrics,
                        evaluate, gray_entropy, illumination_uniformity, plot_histograms, tenengrad)
from exceptions import ConfigError
from imaging import ImageTensor, load_image, save_image


def _write_corpus(directory, images):
    directory.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images):
        save_image(img, directory / f"img_{i:02d}.png")
    return directory


def test_constant_image_metrics():
    metrics = compute_metrics(ImageTensor(np.full((32, 32, 3), 0.5, dtype=np.float32)))
    assert metrics["sharpness"] == 0.0
    assert metrics["illum_uniformity"] == 0.0
    assert metrics["entropy"] == 0.0


def test_two_level_entropy_is_one_bit():
    board = np.indices((16, 16)).sum(axis=0) % 2
    assert gray_entropy(board.astype(np.float64)) == pytest.approx(1.0)


def test_blur_lowers_sharpness():
    img = make_texture_corpus(1, 64, seed=2)[0]
    blurred = degrade(img, gaussian_kernel(2.0, 13))
    assert tenengrad(blurred.data.mean(axis=2)) < tenengrad(img.data.mean(axis=2))


def test_vignetting_raises_uniformity_score():
    flat = ImageTensor(np.full((64, 64, 3), 0.7, dtype=np.float32))
    vignetted = apply_vignette(flat)
    assert compute_metrics(vignetted)["illum_uniformity"] > compute_metrics(flat)["illum_uniformity"]


def test_metrics_ignore_channel_order():
    img = make_texture_corpus(1, 32, seed=3)[0]
    permuted = ImageTensor(img.data[:, :, [2, 0, 1]].copy())
    first, second = compute_metrics(img), compute_metrics(permuted)
    for name in METRICS:
        assert first[name] == pytest.approx(second[name], rel=1e-5, abs=1e-9)


def test_block_means_small_image():
    gray = np.arange(64, dtype=np.float64).reshape(8, 8)
    assert block_means(gray).tolist() == [gray.mean()]
    assert illumination_uniformity(gray) == 0.0


def test_evaluate_report_and_csv(tmp_path):
    directory = _write_corpus(tmp_path / "enhanced", make_texture_corpus(3, 32, seed=0))
    report = evaluate(directory)
    assert list(report.records.columns) == ["path", *METRICS]
    assert len(report.records) == 3

    csv_path = report.write_csv(tmp_path / "report.csv")
    frame = pd.read_csv(csv_path)
    assert frame["path"].tolist()[-2:] == [MEAN_ROW, STD_ROW]
    mean_row = frame[frame["path"] == MEAN_ROW].iloc[0]
    assert mean_row["entropy"] == pytest.approx(report.records["entropy"].mean())


def test_evaluate_with_baseline_deltas(tmp_path):
    flat = [ImageTensor(np.full((64, 64, 3), 0.7, dtype=np.float32)) for _ in range(2)]
    baseline = _write_corpus(tmp_path / "flat", flat)
    vignetted = _write_corpus(tmp_path / "vignetted", [apply_vignette(img) for img in flat])

    report = evaluate(vignetted, baseline)
    for name in METRICS:
        assert f"{name}_baseline" in report.records
        assert f"{name}_delta" in report.records
    assert (report.records["illum_uniformity_delta"] > 0).all()


def test_evaluate_empty_directory(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(ConfigError):
        evaluate(tmp_path / "empty")


def test_metric_cache_reuses_records(tmp_path):
    directory = _write_corpus(tmp_path / "imgs", make_texture_corpus(2, 32, seed=5))
    cache = MetricCache(tmp_path / "cache", use_diskcache=False)
    first = evaluate(directory, cache=cache, jobs=2).records
    assert cache.get_cache_stats()["file_cache_entries"] == 2

    second = evaluate(directory, cache=cache).records
    pd.testing.assert_frame_equal(first, second)

    path = directory / "img_00.png"
    assert cache.get_metrics(path) == pytest.approx(compute_metrics(load_image(path)))
    assert cache.clear_all()
    assert cache.get_metrics(path) is None
    cache.close()


def test_plot_histograms_writes_png(tmp_path):
    directory = _write_corpus(tmp_path / "imgs", make_texture_corpus(2, 32, seed=6))
    out = plot_histograms(evaluate(directory, directory), tmp_path / "plots" / "hist.png")
    assert out.is_file() and out.stat().st_size > 0


def test_clahe_baseline_shape_and_range():
    img = apply_vignette(make_texture_corpus(1, 64, seed=4)[0])
    out = apply_clahe(img, clip_limit=2.0, grid=4)
    assert out.shape == img.shape
    assert 0.0 <= out.data.min() and out.data.max() <= 1.0

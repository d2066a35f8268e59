"""
No-reference proxy quality metrics and corpus reports.

sharpness         Tenengrad: mean Sobel gradient energy of the gray image
illum_uniformity  std of the 16x16 block means of the gray image
entropy           Shannon entropy (bits) of the 256-bin gray histogram

Gray is the channel mean, so every metric ignores channel order.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import cv2
import numpy as np
import pandas as pd

from cache import MetricCache
from exceptions import ConfigError
from imaging import ImageTensor, list_images, load_image, to_gray
from logging_config import PerformanceLogger

logger = logging.getLogger(__name__)

METRICS = ("sharpness", "illum_uniformity", "entropy")
UNIFORMITY_BLOCK = 16
MEAN_ROW = "__mean__"
STD_ROW = "__std__"


def tenengrad(gray: np.ndarray) -> float:
    gray = gray.astype(np.float64)
    gx = cv2.Sobel(gray, cv2.CV_64F, 1, 0, ksize=3)
    gy = cv2.Sobel(gray, cv2.CV_64F, 0, 1, ksize=3)
    return float(np.mean(gx ** 2 + gy ** 2))


def block_means(gray: np.ndarray, block: int = UNIFORMITY_BLOCK) -> np.ndarray:
    """Means of non-overlapping block x block tiles; partial edge tiles are dropped."""
    h, w = gray.shape
    bh, bw = h // block, w // block
    if bh == 0 or bw == 0:
        return np.array([gray.mean()])
    trimmed = gray[:bh * block, :bw * block].astype(np.float64)
    return trimmed.reshape(bh, block, bw, block).mean(axis=(1, 3)).ravel()


def illumination_uniformity(gray: np.ndarray, block: int = UNIFORMITY_BLOCK) -> float:
    return float(np.std(block_means(gray, block)))


def gray_entropy(gray: np.ndarray, bins: int = 256) -> float:
    hist, _ = np.histogram(np.clip(gray, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    p = hist[hist > 0].astype(np.float64) / hist.sum()
    return float(-(p * np.log2(p)).sum())


def compute_metrics(img: ImageTensor) -> Dict[str, float]:
    gray = to_gray(img.data)
    return {
        "sharpness": tenengrad(gray),
        "illum_uniformity": illumination_uniformity(gray),
        "entropy": gray_entropy(gray),
    }


@dataclass
class QualityReport:
    """Per-image metric records plus corpus mean/std."""

    records: pd.DataFrame

    @property
    def aggregates(self) -> pd.DataFrame:
        numeric = self.records.drop(columns=["path"])
        return pd.DataFrame({"mean": numeric.mean(), "std": numeric.std(ddof=0)})

    def to_frame(self) -> pd.DataFrame:
        """Records followed by the aggregate rows, as written to CSV."""
        agg = self.aggregates
        summary = pd.DataFrame([
            {"path": MEAN_ROW, **agg["mean"].to_dict()},
            {"path": STD_ROW, **agg["std"].to_dict()},
        ])
        return pd.concat([self.records, summary], ignore_index=True)

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, encoding="utf-8")
        logger.info(f"Wrote quality report for {len(self.records)} images to {path}")
        return path


def _metrics_for(path: Path, cache: Optional[MetricCache]) -> Dict[str, float]:
    if cache is not None:
        cached = cache.get_metrics(path)
        if cached is not None:
            return cached
    metrics = compute_metrics(load_image(path))
    if cache is not None:
        cache.set_metrics(path, metrics)
    return metrics


def measure_directory(directory: Union[str, Path], jobs: int = 1,
                      cache: Optional[MetricCache] = None) -> pd.DataFrame:
    paths = list_images(directory)
    if not paths:
        raise ConfigError(f"no images found in {directory}")
    with ThreadPoolExecutor(max_workers=max(jobs, 1)) as pool:
        results = list(pool.map(lambda p: _metrics_for(p, cache), paths))
    rows = [{"path": p.name, **m} for p, m in zip(paths, results)]
    return pd.DataFrame(rows, columns=["path", *METRICS])


def evaluate(directory: Union[str, Path], baseline: Optional[Union[str, Path]] = None,
             jobs: int = 1, cache: Optional[MetricCache] = None) -> QualityReport:
    """Metrics for every image in directory; with a baseline, per-metric deltas by file name."""
    with PerformanceLogger(f"Evaluating {directory}", logger):
        records = measure_directory(directory, jobs, cache)
        if baseline is not None:
            base = measure_directory(baseline, jobs, cache)
            base = base.rename(columns={m: f"{m}_baseline" for m in METRICS})
            records = records.merge(base, on="path", how="left")
            missing = int(records[f"{METRICS[0]}_baseline"].isna().sum())
            if missing:
                logger.warning(f"{missing} images have no same-named baseline image")
            for metric in METRICS:
                records[f"{metric}_delta"] = records[metric] - records[f"{metric}_baseline"]
    return QualityReport(records)


def plot_histograms(report: QualityReport, path: Union[str, Path],
                    baseline_label: str = "baseline", label: str = "enhanced") -> Path:
    """One histogram panel per metric; baseline overlaid when present."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = report.records
    fig, axes = plt.subplots(1, len(METRICS), figsize=(5 * len(METRICS), 4))
    for ax, metric in zip(np.atleast_1d(axes), METRICS):
        ax.hist(records[metric].dropna(), bins=20, alpha=0.6, label=label)
        base_col = f"{metric}_baseline"
        if base_col in records:
            ax.hist(records[base_col].dropna(), bins=20, alpha=0.6, label=baseline_label)
        ax.set_title(metric)
        ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    logger.info(f"Wrote metric histograms to {path}")
    return path


def apply_clahe(img: ImageTensor, clip_limit: float = 2.0, grid: int = 8) -> ImageTensor:
    """Contrast-limited adaptive histogram equalization on the LAB lightness channel."""
    rgb8 = np.clip(np.floor(img.data * 255.0 + 0.5), 0, 255).astype(np.uint8)
    if rgb8.shape[2] == 1:
        rgb8 = np.repeat(rgb8, 3, axis=2)
    lab = cv2.cvtColor(rgb8, cv2.COLOR_RGB2LAB)
    clahe = cv2.createCLAHE(clipLimit=clip_limit, tileGridSize=(grid, grid))
    lab[:, :, 0] = clahe.apply(lab[:, :, 0])
    out = cv2.cvtColor(lab, cv2.COLOR_LAB2RGB).astype(np.float32) / 255.0
    return ImageTensor(out, "unit")

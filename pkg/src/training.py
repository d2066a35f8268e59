"""
Two-stage training and the enhancement pipeline.

Stage 1 trains FRED on synthetic (blurry, clean) pairs. Stage 2 freezes
FRED and trains RICE with the zero-reference illumination losses on FRED
outputs. `Enhancer` chains both stages for inference.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np
import pandas as pd
import torch
from torch.utils.data import DataLoader, Dataset

from checkpoint import load_fred, load_rice, save_fred, save_rice
from config import AblationSwitches, TrainConfig, save_config
from degradation import degrade, sample_blur
from exceptions import ConfigError, NumericError, TrainingAborted, UwfEnhanceError
from fred_net import FredNet, check_finite_parameters
from imaging import (EnhancementResult, ImageTensor, PaddingRecord, crop_back, from_tensor,
                     list_images, load_image, pad_to_multiple, to_tensor)
from logging_config import PerformanceLogger
from losses import build_extractor, deblur_loss_terms, illum_loss_terms, multiscale_targets
from rice_net import RiceNet

logger = logging.getLogger(__name__)

FRED_LOSS_COLUMNS = ["iteration", "content", "msfr", "perceptual", "total"]
RICE_LOSS_COLUMNS = ["iteration", "fidelity", "smooth", "exposure", "total"]


@dataclass
class TrainResult:
    checkpoint_path: Path
    loss_csv: Path
    history: pd.DataFrame


def resolve_device(name: str) -> torch.device:
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    if name == "cuda" and not torch.cuda.is_available():
        raise ConfigError("device 'cuda' requested but CUDA is not available", key="device")
    return torch.device(name)


def load_corpus(data_dir: Union[str, Path]) -> List[ImageTensor]:
    """Load every readable image in data_dir; unreadable files are skipped."""
    paths = list_images(data_dir)
    images = []
    for path in paths:
        try:
            images.append(load_image(path))
        except UwfEnhanceError as e:
            logger.warning(f"Skipping {path}: {e}")
    if not images:
        raise ConfigError(f"no readable images in data_dir {data_dir}", key="data_dir")
    logger.info(f"Loaded {len(images)} training images from {data_dir}")
    return images


def random_crop(img: np.ndarray, crop: int, rng: np.random.Generator) -> np.ndarray:
    """Random crop x crop window; images smaller than the crop are upscaled first."""
    h, w = img.shape[:2]
    if h < crop or w < crop:
        scale = crop / min(h, w)
        new_w, new_h = max(crop, int(math.ceil(w * scale))), max(crop, int(math.ceil(h * scale)))
        img = cv2.resize(img, (new_w, new_h), interpolation=cv2.INTER_LINEAR)
        img = np.clip(img, 0.0, 1.0)
        h, w = img.shape[:2]
    top = int(rng.integers(0, h - crop + 1))
    left = int(rng.integers(0, w - crop + 1))
    return img[top:top + crop, left:left + crop]


def _chw(array: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(array.transpose(2, 0, 1), dtype=np.float32))


class BlurPairDataset(Dataset):
    """
    Sample i is (blurry, clean); every sample has its own seeded rng.

    With cfg.fixed_pairs the crop and kernel depend only on the source image,
    so the dataset holds one pair per image.
    """

    def __init__(self, images: Sequence[ImageTensor], cfg: TrainConfig, length: int):
        self.images = [img.data for img in images]
        self.cfg = cfg
        self.length = length

    def __len__(self):
        return self.length

    def __getitem__(self, index: int):
        rng = np.random.default_rng([self.cfg.seed, self.cfg.blur.seed, index])
        source_index = int(rng.integers(0, len(self.images)))
        source = self.images[source_index]
        if self.cfg.fixed_pairs:
            rng = np.random.default_rng([self.cfg.seed, self.cfg.blur.seed, 2, source_index])
        clean = random_crop(source, self.cfg.crop, rng)
        kernel = sample_blur(self.cfg.blur, rng)
        blurry = degrade(ImageTensor(clean.astype(np.float32)), kernel).data
        return _chw(blurry), _chw(clean)


class CropDataset(Dataset):
    """Random crops for zero-reference training."""

    def __init__(self, images: Sequence[ImageTensor], cfg: TrainConfig, length: int):
        self.images = [img.data for img in images]
        self.cfg = cfg
        self.length = length

    def __len__(self):
        return self.length

    def __getitem__(self, index: int):
        rng = np.random.default_rng([self.cfg.seed, 1, index])
        source = self.images[int(rng.integers(0, len(self.images)))]
        return _chw(random_crop(source, self.cfg.crop, rng))


def _loader(dataset: Dataset, cfg: TrainConfig, start_iter: int, iters: int) -> DataLoader:
    # Index-based sampling keeps runs reproducible across worker counts and resumes
    indices = range(start_iter * cfg.batch, iters * cfg.batch)
    return DataLoader(dataset, batch_size=cfg.batch, sampler=indices,
                      num_workers=cfg.workers, drop_last=False)


def _write_history(rows: List[Dict[str, float]], columns: List[str], path: Path) -> pd.DataFrame:
    history = pd.DataFrame(rows, columns=columns)
    history.to_csv(path, index=False, encoding="utf-8")
    return history


def _abort(stage: str, out_dir: Path, iteration: int, model: torch.nn.Module,
           inputs: torch.Tensor, terms: Dict[str, torch.Tensor]):
    snapshot = out_dir / f"{stage}_nan_snapshot.pt"
    torch.save({
        "iteration": iteration,
        "inputs": inputs.detach().cpu(),
        "terms": {k: float(v) for k, v in terms.items()},
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
    }, snapshot)
    logger.error(f"{stage.upper()} loss became non-finite at iteration {iteration}")
    raise TrainingAborted(f"non-finite {stage} loss at iteration {iteration}", str(snapshot))


def _resume_state(path: Path, loader_fn, model: torch.nn.Module,
                  optimizer: torch.optim.Optimizer) -> Tuple[int, List[Dict[str, float]]]:
    saved, extra = loader_fn(path)
    if saved.cfg != model.cfg:
        raise ConfigError(f"cannot resume from {path}: network config differs from the current one")
    model.load_state_dict(saved.state_dict())
    if "optimizer" in extra:
        optimizer.load_state_dict(extra["optimizer"])
    iteration = int(extra.get("iteration", 0))
    rows = list(extra.get("history", []))
    logger.info(f"Resumed from {path} at iteration {iteration}")
    return iteration, rows


def train_fred(cfg: TrainConfig, images: Optional[Sequence[ImageTensor]] = None,
               resume: bool = False) -> TrainResult:
    """Stage 1: supervised deblurring on synthetic blur pairs."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "train_fred.cfg")
    images = list(images) if images is not None else load_corpus(cfg.data_dir)
    device = resolve_device(cfg.device)

    torch.manual_seed(cfg.seed)
    model = FredNet(cfg.fred).to(device)
    extractor = build_extractor(cfg.perceptual_extractor, cfg.seed).to(device)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr_fred)

    ckpt_path = out_dir / "fred_last.pt"
    csv_path = out_dir / "fred_loss.csv"
    start_iter, rows = 0, []
    if resume and ckpt_path.is_file():
        start_iter, rows = _resume_state(ckpt_path, load_fred, model, optimizer)
        model.to(device)

    dataset = BlurPairDataset(images, cfg, cfg.iters_fred * cfg.batch)
    levels = cfg.fred.levels
    model.train()

    def checkpoint(iteration: int):
        save_fred(model, ckpt_path, extra={
            "iteration": iteration,
            "optimizer": optimizer.state_dict(),
            "history": rows,
        })
        _write_history(rows, FRED_LOSS_COLUMNS, csv_path)

    with PerformanceLogger(f"FRED training ({cfg.iters_fred} iterations)", logger,
                           items=cfg.iters_fred - start_iter, unit="iterations"):
        iteration = start_iter
        for blurry, clean in _loader(dataset, cfg, start_iter, cfg.iters_fred):
            iteration += 1
            blurry, clean = blurry.to(device), clean.to(device)
            preds = model(blurry)
            terms = deblur_loss_terms(preds, multiscale_targets(clean, levels),
                                      cfg.weights_deblur, extractor)
            if not torch.isfinite(terms["total"]):
                _abort("fred", out_dir, iteration, model, blurry, terms)

            optimizer.zero_grad(set_to_none=True)
            terms["total"].backward()
            optimizer.step()

            row = {"iteration": iteration}
            row.update({k: float(v.detach()) for k, v in terms.items()})
            rows.append(row)
            if iteration % cfg.log_every == 0 or iteration == 1:
                logger.info(
                    f"FRED iter {iteration}/{cfg.iters_fred} - total {row['total']:.5f} "
                    f"(content {row['content']:.5f}, msfr {row['msfr']:.5f}, "
                    f"perceptual {row['perceptual']:.5f})"
                )
            if iteration % cfg.checkpoint_every == 0:
                checkpoint(iteration)

        checkpoint(iteration)

    history = _write_history(rows, FRED_LOSS_COLUMNS, csv_path)
    return TrainResult(ckpt_path, csv_path, history)


def train_rice(cfg: TrainConfig, fred_ckpt: Optional[Union[str, Path]] = None,
               images: Optional[Sequence[ImageTensor]] = None,
               resume: bool = False) -> TrainResult:
    """Stage 2: zero-reference illumination compensation on (frozen) FRED outputs."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "train_rice.cfg")
    images = list(images) if images is not None else load_corpus(cfg.data_dir)
    device = resolve_device(cfg.device)

    fred = None
    if cfg.ablation.use_fred:
        if fred_ckpt is None:
            raise ConfigError("train_rice needs a FRED checkpoint when ablation.use_fred is on")
        fred, _ = load_fred(fred_ckpt)
        fred.to(device).eval()
        for param in fred.parameters():
            param.requires_grad_(False)
        logger.info(f"Stage 2 uses frozen FRED from {fred_ckpt}")

    torch.manual_seed(cfg.seed)
    model = RiceNet(cfg.rice).to(device)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr_rice)

    ckpt_path = out_dir / "rice_last.pt"
    csv_path = out_dir / "rice_loss.csv"
    start_iter, rows = 0, []
    if resume and ckpt_path.is_file():
        start_iter, rows = _resume_state(ckpt_path, load_rice, model, optimizer)
        model.to(device)

    dataset = CropDataset(images, cfg, cfg.iters_rice * cfg.batch)
    model.train()

    def checkpoint(iteration: int):
        save_rice(model, ckpt_path, extra={
            "iteration": iteration,
            "optimizer": optimizer.state_dict(),
            "history": rows,
        })
        _write_history(rows, RICE_LOSS_COLUMNS, csv_path)

    with PerformanceLogger(f"RICE training ({cfg.iters_rice} iterations)", logger,
                           items=cfg.iters_rice - start_iter, unit="iterations"):
        iteration = start_iter
        for crops in _loader(dataset, cfg, start_iter, cfg.iters_rice):
            iteration += 1
            crops = crops.to(device)
            if fred is not None:
                with torch.no_grad():
                    crops = fred(crops)[-1].clamp(0.0, 1.0)
            _, enhanced, illum = model(crops)
            terms = illum_loss_terms(illum, enhanced, crops, cfg.weights_illum)
            if not torch.isfinite(terms["total"]):
                _abort("rice", out_dir, iteration, model, crops, terms)

            optimizer.zero_grad(set_to_none=True)
            terms["total"].backward()
            optimizer.step()

            row = {"iteration": iteration}
            row.update({k: float(v.detach()) for k, v in terms.items()})
            rows.append(row)
            if iteration % cfg.log_every == 0 or iteration == 1:
                logger.info(
                    f"RICE iter {iteration}/{cfg.iters_rice} - total {row['total']:.5f} "
                    f"(fidelity {row['fidelity']:.5f}, smooth {row['smooth']:.5f}, "
                    f"exposure {row['exposure']:.5f})"
                )
            if iteration % cfg.checkpoint_every == 0:
                checkpoint(iteration)

        checkpoint(iteration)

    history = _write_history(rows, RICE_LOSS_COLUMNS, csv_path)
    return TrainResult(ckpt_path, csv_path, history)


def _tile_starts(length: int, tile: int, overlap: int) -> List[int]:
    if length <= tile:
        return [0]
    stride = max(tile - overlap, 1)
    starts = list(range(0, length - tile + 1, stride))
    if starts[-1] != length - tile:
        starts.append(length - tile)
    return starts


def _ramp(length: int, overlap: int, at_start: bool, at_end: bool) -> torch.Tensor:
    weights = torch.ones(length, dtype=torch.float64)
    if overlap <= 0:
        return weights
    ramp = torch.arange(1, overlap + 1, dtype=torch.float64) / (overlap + 1)
    n = min(overlap, length)
    if not at_start:
        weights[:n] = torch.minimum(weights[:n], ramp[:n])
    if not at_end:
        weights[-n:] = torch.minimum(weights[-n:], ramp[:n].flip(0))
    return weights


def _match_channels(data: np.ndarray, channels: int) -> ImageTensor:
    """Single-channel inputs run as replicated RGB; fold the result back to one channel."""
    if channels == 1:
        data = data.mean(axis=2, keepdims=True)
    return ImageTensor(np.ascontiguousarray(data, dtype=np.float32), "unit")


class Enhancer:
    """FRED -> RICE pipeline over one image at a time."""

    def __init__(self, fred: Optional[FredNet] = None, rice: Optional[RiceNet] = None,
                 ablation: Optional[AblationSwitches] = None, device: str = "cpu",
                 tile: int = 0, tile_overlap: int = 32):
        self.ablation = ablation or AblationSwitches()
        self.device = resolve_device(device)
        self.fred = fred if self.ablation.use_fred else None
        self.rice = rice if self.ablation.use_rice else None
        if self.ablation.use_fred and fred is None:
            raise ConfigError("FRED enabled but no FRED model or checkpoint given")
        if self.ablation.use_rice and rice is None:
            raise ConfigError("RICE enabled but no RICE model or checkpoint given")
        for model, name in ((self.fred, "FRED"), (self.rice, "RICE")):
            if model is not None:
                model.to(self.device).eval()
                check_finite_parameters(model, name)
        self.tile = tile
        self.tile_overlap = tile_overlap
        self.logger = logging.getLogger(__name__)

    @classmethod
    def from_checkpoints(cls, fred_ckpt: Optional[Union[str, Path]] = None,
                         rice_ckpt: Optional[Union[str, Path]] = None,
                         ablation: Optional[AblationSwitches] = None, **kwargs) -> "Enhancer":
        ablation = ablation or AblationSwitches()
        fred = load_fred(fred_ckpt)[0] if ablation.use_fred and fred_ckpt else None
        rice = load_rice(rice_ckpt)[0] if ablation.use_rice and rice_ckpt else None
        return cls(fred, rice, ablation, **kwargs)

    @property
    def size_multiple(self) -> int:
        multiple = 1
        if self.fred is not None:
            multiple = math.lcm(multiple, self.fred.cfg.size_multiple)
        if self.rice is not None:
            multiple = math.lcm(multiple, self.rice.cfg.size_multiple)
        return multiple

    def _run(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, List[torch.Tensor]]:
        if self.fred is not None:
            scales = [o.clamp(0.0, 1.0) for o in self.fred(x)]
            deblurred = scales[-1]
        else:
            scales = []
            deblurred = x
        if self.rice is not None:
            ratio, enhanced, _ = self.rice(deblurred)
        else:
            ratio = torch.ones_like(deblurred)
            enhanced = deblurred
        return deblurred, ratio, enhanced, scales

    def _run_tiled(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        multiple = self.size_multiple
        tile = int(math.ceil(self.tile / multiple) * multiple)
        _, _, h, w = x.shape
        tile_h, tile_w = min(tile, h), min(tile, w)
        ys = _tile_starts(h, tile_h, self.tile_overlap)
        xs = _tile_starts(w, tile_w, self.tile_overlap)
        sums = [torch.zeros_like(x, dtype=torch.float64) for _ in range(3)]
        weight_sum = torch.zeros((1, 1, h, w), dtype=torch.float64, device=x.device)
        for y in ys:
            wy = _ramp(tile_h, self.tile_overlap, y == 0, y + tile_h == h).to(x.device)
            for x0 in xs:
                wx = _ramp(tile_w, self.tile_overlap, x0 == 0, x0 + tile_w == w).to(x.device)
                weight = (wy[:, None] * wx[None, :])[None, None]
                outs = self._run(x[..., y:y + tile_h, x0:x0 + tile_w])[:3]
                for acc, out in zip(sums, outs):
                    acc[..., y:y + tile_h, x0:x0 + tile_w] += weight * out.double()
                weight_sum[..., y:y + tile_h, x0:x0 + tile_w] += weight
        return tuple((acc / weight_sum).to(x.dtype) for acc in sums)

    def enhance(self, image: ImageTensor) -> EnhancementResult:
        image.check_image()
        channels = image.channels
        if channels == 1:
            image = ImageTensor(np.repeat(image.data, 3, axis=2), image.range_tag)
        padded, record = pad_to_multiple(image, self.size_multiple)

        with torch.no_grad():
            x = to_tensor(padded, self.device)
            if self.tile > 0 and (self.tile < x.shape[-2] or self.tile < x.shape[-1]):
                deblurred, ratio, enhanced = self._run_tiled(x)
                scales = []
            else:
                deblurred, ratio, enhanced, scales = self._run(x)

        for name, tensor in (("deblurred", deblurred), ("ratio", ratio), ("enhanced", enhanced)):
            if not torch.isfinite(tensor).all():
                raise NumericError(f"non-finite values in {name} output")

        scale_outputs = []
        levels = len(scales)
        for k, out in enumerate(scales):
            factor = 2 ** (levels - 1 - k)
            h = -(-image.height // factor)
            w = -(-image.width // factor)
            scale_outputs.append(_match_channels(from_tensor(out).data[:h, :w], channels))

        return EnhancementResult(
            deblurred=_match_channels(crop_back(from_tensor(deblurred), record).data, channels),
            ratio=_match_channels(crop_back(from_tensor(ratio), record).data, channels),
            enhanced=_match_channels(crop_back(from_tensor(enhanced), record).data, channels),
            scale_outputs=scale_outputs,
        )


def enhance(image: ImageTensor, fred_ckpt: Optional[Union[str, Path]] = None,
            rice_ckpt: Optional[Union[str, Path]] = None,
            ablation: Optional[AblationSwitches] = None, **kwargs) -> EnhancementResult:
    """Load checkpoints and run the pipeline on one image."""
    return Enhancer.from_checkpoints(fred_ckpt, rice_ckpt, ablation, **kwargs).enhance(image)

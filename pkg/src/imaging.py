"""
Image representation, file I/O and padding shared by every stage.

Arrays crossing module boundaries are (height, width, channels) float32.
Networks work on (batch, channels, height, width) torch tensors; the
conversion helpers live here as well.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, NamedTuple, Tuple, Union

import cv2
import numpy as np
import torch

from exceptions import ContractViolation, ImageFormatError, ImageIOError, ShapeError

logger = logging.getLogger(__name__)

READ_EXTENSIONS = (".png", ".jpg", ".jpeg", ".tif", ".tiff")
WRITE_EXTENSIONS = (".png", ".tif", ".tiff")
RANGE_TAGS = ("unit", "signed")

# Slack for float rounding when checking the unit-range contract
UNIT_TOLERANCE = 1e-6


@dataclass
class ImageTensor:
    """Floating-point image or feature map in (height, width, channels) layout."""

    data: np.ndarray
    range_tag: str = "unit"

    def __post_init__(self):
        if self.data.ndim == 2:
            self.data = self.data[:, :, None]
        if self.data.ndim != 3:
            raise ShapeError(f"expected (H, W, C) array, got shape {self.data.shape}")
        if self.range_tag not in RANGE_TAGS:
            raise ContractViolation(f"unknown range tag '{self.range_tag}'")
        h, w, c = self.data.shape
        if h < 1 or w < 1 or c < 1:
            raise ShapeError(f"empty image of shape {self.data.shape}")

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.height, self.width, self.channels

    def check_image(self) -> "ImageTensor":
        """Enforce the module-boundary contract: 1 or 3 channels, unit values in [0, 1]."""
        if self.channels not in (1, 3):
            raise ShapeError(f"images must have 1 or 3 channels, got {self.channels}")
        if self.range_tag == "unit":
            lo, hi = float(self.data.min()), float(self.data.max())
            if lo < -UNIT_TOLERANCE or hi > 1.0 + UNIT_TOLERANCE or not np.isfinite([lo, hi]).all():
                raise ContractViolation(
                    f"unit-range image has values in [{lo:.6g}, {hi:.6g}]"
                )
        return self

    def clamped(self) -> "ImageTensor":
        """Return a copy clipped to [0, 1] and tagged unit."""
        return ImageTensor(np.clip(self.data, 0.0, 1.0).astype(np.float32), "unit")

    def copy(self) -> "ImageTensor":
        return ImageTensor(self.data.copy(), self.range_tag)


@dataclass
class EnhancementResult:
    """Outputs of the two-stage pipeline for one input image."""

    deblurred: ImageTensor
    ratio: ImageTensor
    enhanced: ImageTensor
    scale_outputs: List[ImageTensor] = field(default_factory=list)


class PaddingRecord(NamedTuple):
    """Rows and columns appended at the bottom/right by pad_to_multiple."""

    pad_h: int
    pad_w: int


def _bit_depth_max(dtype: np.dtype) -> float:
    if dtype == np.uint8:
        return 255.0
    if dtype == np.uint16:
        return 65535.0
    raise ImageFormatError(f"unsupported bit depth for dtype {dtype}; expected 8- or 16-bit")


def load_image(path: Union[str, Path]) -> ImageTensor:
    """Read a PNG/JPEG/TIFF file as a 3-channel unit-range image."""
    path = Path(path)
    if path.suffix.lower() not in READ_EXTENSIONS:
        raise ImageFormatError(f"unsupported image format '{path.suffix}': {path}")
    if not path.is_file():
        raise ImageIOError(path, "image file not found")

    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageIOError(path)

    scale = _bit_depth_max(raw.dtype)

    if raw.ndim == 2:
        raw = np.repeat(raw[:, :, None], 3, axis=2)
    elif raw.shape[2] == 1:
        raw = np.repeat(raw, 3, axis=2)
    elif raw.shape[2] == 4:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGRA2RGB)
    elif raw.shape[2] == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    else:
        raise ImageFormatError(f"unsupported channel count {raw.shape[2]}: {path}")

    data = raw.astype(np.float64) / scale
    logger.debug(f"Loaded {path} ({raw.shape[1]}x{raw.shape[0]}, {raw.dtype})")
    return ImageTensor(data.astype(np.float32), "unit")


def quantize(data: np.ndarray, bit_depth: int = 8) -> np.ndarray:
    """Round-half-away-from-zero quantization of unit-range values."""
    if bit_depth not in (8, 16):
        raise ImageFormatError(f"bit depth must be 8 or 16, got {bit_depth}")
    max_value = float(2 ** bit_depth - 1)
    scaled = np.asarray(data, dtype=np.float64) * max_value
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    return rounded.astype(dtype)


def save_image(img: ImageTensor, path: Union[str, Path], bit_depth: int = 8) -> None:
    """Write a unit-range image as PNG or TIFF. Callers clamp first."""
    path = Path(path)
    if path.suffix.lower() not in WRITE_EXTENSIONS:
        raise ImageFormatError(f"cannot write '{path.suffix}' (PNG/TIFF only): {path}")
    if img.range_tag != "unit":
        raise ContractViolation("save_image requires a unit-range image")
    img.check_image()

    stored = quantize(np.clip(img.data, 0.0, 1.0), bit_depth)
    if stored.shape[2] == 3:
        stored = cv2.cvtColor(stored, cv2.COLOR_RGB2BGR)
    else:
        stored = stored[:, :, 0]

    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), stored):
        raise ImageIOError(path, "failed to write image")
    logger.debug(f"Saved {path} ({bit_depth}-bit)")


def pad_to_multiple(img: ImageTensor, m: int) -> Tuple[ImageTensor, PaddingRecord]:
    """Reflection-pad bottom/right so height and width are multiples of m."""
    if m < 1:
        raise ShapeError(f"padding multiple must be >= 1, got {m}")
    pad_h = (-img.height) % m
    pad_w = (-img.width) % m
    record = PaddingRecord(pad_h, pad_w)
    if pad_h == 0 and pad_w == 0:
        return img.copy(), record
    # numpy extends singleton axes by edge replication under mode="reflect"
    padded = np.pad(img.data, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect")
    return ImageTensor(padded, img.range_tag), record


def crop_back(img: ImageTensor, record: PaddingRecord) -> ImageTensor:
    """Undo pad_to_multiple."""
    h = img.height - record.pad_h
    w = img.width - record.pad_w
    return ImageTensor(img.data[:h, :w, :].copy(), img.range_tag)


def to_tensor(img: ImageTensor, device: Union[str, torch.device] = "cpu",
              dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(H, W, C) image -> (1, C, H, W) tensor."""
    array = np.ascontiguousarray(img.data.transpose(2, 0, 1))
    return torch.from_numpy(array).unsqueeze(0).to(device=device, dtype=dtype)


def from_tensor(tensor: torch.Tensor, range_tag: str = "unit") -> ImageTensor:
    """(1, C, H, W) or (C, H, W) tensor -> (H, W, C) image."""
    if tensor.dim() == 4:
        if tensor.shape[0] != 1:
            raise ShapeError(f"expected a single image, got batch of {tensor.shape[0]}")
        tensor = tensor[0]
    array = tensor.detach().to("cpu", torch.float32).numpy().transpose(1, 2, 0)
    return ImageTensor(np.ascontiguousarray(array), range_tag)


def to_gray(data: np.ndarray) -> np.ndarray:
    """Channel mean of an (H, W, C) array."""
    return data.mean(axis=2)


def list_images(source: Union[str, Path]) -> List[Path]:
    """Readable image files in a directory (sorted), or the single given file."""
    source = Path(source)
    if source.is_file():
        return [source] if source.suffix.lower() in READ_EXTENSIONS else []
    if not source.is_dir():
        return []
    return sorted(p for p in source.iterdir()
                  if p.is_file() and p.suffix.lower() in READ_EXTENSIONS)

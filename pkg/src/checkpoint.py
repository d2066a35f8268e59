"""
Versioned checkpoint archives for the two networks.

A checkpoint is a single torch archive holding the magic string, the
network config and the state dict (hierarchical parameter names to
tensors). Training checkpoints also carry optimizer state and progress.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import torch
from pydantic import ValidationError

from config import FredConfig, RiceConfig, model_error
from exceptions import CheckpointFormatError, ImageIOError
from fred_net import FredNet
from rice_net import RiceNet

logger = logging.getLogger(__name__)

FRED_MAGIC = "FRED.v1"
RICE_MAGIC = "RICE.v1"


def save_checkpoint(path: Union[str, Path], magic: str, config: Dict[str, Any],
                    state_dict: Dict[str, torch.Tensor],
                    extra: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "magic": magic,
        "config": config,
        "state_dict": {k: v.detach().cpu() for k, v in state_dict.items()},
    }
    if extra:
        payload["extra"] = extra
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp_path)
    tmp_path.replace(path)
    logger.info(f"Saved {magic} checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path], magic: str) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(path, "checkpoint not found")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointFormatError(f"unreadable checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("magic") != magic:
        found = payload.get("magic") if isinstance(payload, dict) else None
        raise CheckpointFormatError(
            f"checkpoint {path} has magic {found!r}, expected {magic!r}"
        )
    return payload


def _restore(model: torch.nn.Module, payload: Dict[str, Any], path: Path):
    try:
        model.load_state_dict(payload["state_dict"])
    except (RuntimeError, KeyError) as e:
        raise CheckpointFormatError(f"checkpoint {path} does not match its config: {e}") from e


def save_fred(model: FredNet, path: Union[str, Path], extra: Optional[Dict[str, Any]] = None) -> Path:
    return save_checkpoint(path, FRED_MAGIC, model.cfg.model_dump(), model.state_dict(), extra)


def save_rice(model: RiceNet, path: Union[str, Path], extra: Optional[Dict[str, Any]] = None) -> Path:
    return save_checkpoint(path, RICE_MAGIC, model.cfg.model_dump(), model.state_dict(), extra)


def load_fred(path: Union[str, Path]) -> Tuple[FredNet, Dict[str, Any]]:
    """Rebuild a FRED network from its checkpoint; returns (model, extra)."""
    payload = load_checkpoint(path, FRED_MAGIC)
    try:
        cfg = FredConfig.model_validate(payload["config"])
    except ValidationError as e:
        raise CheckpointFormatError(f"bad FRED config in {path}: {model_error(e)}") from e
    model = FredNet(cfg)
    _restore(model, payload, Path(path))
    model.eval()
    return model, payload.get("extra", {})


def load_rice(path: Union[str, Path]) -> Tuple[RiceNet, Dict[str, Any]]:
    """Rebuild a RICE network from its checkpoint; returns (model, extra)."""
    payload = load_checkpoint(path, RICE_MAGIC)
    try:
        cfg = RiceConfig.model_validate(payload["config"])
    except ValidationError as e:
        raise CheckpointFormatError(f"bad RICE config in {path}: {model_error(e)}") from e
    model = RiceNet(cfg)
    _restore(model, payload, Path(path))
    model.eval()
    return model, payload.get("extra", {})

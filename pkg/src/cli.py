"""
Command-line entry points: train, enhance, evaluate, baseline.

Exit codes: 0 success, 2 configuration/input error, 3 runtime abort.
"""

import argparse
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

from cache import MetricCache
from config import AblationSwitches, load_config
from evaluation import apply_clahe, evaluate, plot_histograms
from exceptions import CheckpointFormatError, ConfigError, ImageIOError, UwfEnhanceError
from imaging import list_images, load_image, save_image
from logging_config import PerformanceLogger
from training import Enhancer, train_fred, train_rice

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

# Missing or malformed inputs are the caller's fault; everything else is a runtime abort
CONFIG_ERRORS = (ConfigError, ImageIOError, CheckpointFormatError, FileNotFoundError)


def _exit_code_for(error: BaseException) -> int:
    if isinstance(error, CONFIG_ERRORS):
        return EXIT_CONFIG
    return EXIT_RUNTIME


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set)
    if args.stage == "fred":
        result = train_fred(cfg, resume=args.resume)
    else:
        fred_ckpt = args.fred
        if fred_ckpt is None and cfg.ablation.use_fred:
            fred_ckpt = Path(cfg.out_dir) / "fred_last.pt"
            logger.info(f"No --fred given, using {fred_ckpt}")
        result = train_rice(cfg, fred_ckpt, resume=args.resume)
    logger.info(f"Checkpoint: {result.checkpoint_path}")
    logger.info(f"Loss log: {result.loss_csv}")
    return EXIT_OK


def cmd_enhance(args: argparse.Namespace) -> int:
    paths = list_images(args.input)
    if not paths:
        raise ConfigError(f"no valid images found at {args.input}")

    ablation = AblationSwitches(use_fred=not args.no_fred, use_rice=not args.no_rice)
    enhancer = Enhancer.from_checkpoints(
        args.fred, args.rice, ablation,
        device=args.device, tile=args.tile, tile_overlap=args.tile_overlap,
    )
    output_dir = Path(args.output)
    output_dir.mkdir(parents=True, exist_ok=True)

    def process(path: Path) -> bool:
        try:
            result = enhancer.enhance(load_image(path))
            save_image(result.enhanced, output_dir / f"{path.stem}.png")
            if args.save_intermediate:
                save_image(result.deblurred, output_dir / f"{path.stem}.deblur.png")
                save_image(result.ratio, output_dir / f"{path.stem}.ratio.png")
            logger.info(f"Enhanced {path.name}")
            return True
        except UwfEnhanceError as e:
            logger.error(f"Failed to enhance {path}: {e}")
            return False

    with PerformanceLogger(f"Enhancing {len(paths)} images", logger,
                           items=len(paths), unit="images"):
        with ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as pool:
            ok = list(pool.map(process, paths))

    failed = ok.count(False)
    if failed:
        logger.error(f"{failed} of {len(paths)} images failed")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cache = None if args.no_cache else MetricCache(args.cache_dir)
    try:
        report = evaluate(args.dir, args.baseline, jobs=args.jobs, cache=cache)
    finally:
        if cache is not None:
            cache.close()
    report.write_csv(args.report)
    if args.plot:
        plot_histograms(report, args.plot)
    for metric, row in report.aggregates.iterrows():
        logger.info(f"{metric}: {row['mean']:.4f} +/- {row['std']:.4f}")
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    paths = list_images(args.input)
    if not paths:
        raise ConfigError(f"no valid images found at {args.input}")
    output_dir = Path(args.output)
    for path in paths:
        out = apply_clahe(load_image(path), clip_limit=args.clip_limit, grid=args.grid)
        save_image(out, output_dir / f"{path.stem}.png")
    logger.info(f"Wrote {len(paths)} {args.method} images to {output_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwf-enhance",
        description="Frequency-aware deblurring and illumination compensation for UWF retinal images",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Train one stage")
    train.add_argument("--stage", choices=["fred", "rice"], required=True)
    train.add_argument("--config", required=True, help="key = value config file")
    train.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="Override a config key (repeatable)")
    train.add_argument("--fred", default=None, help="Frozen FRED checkpoint for stage rice")
    train.add_argument("--resume", action="store_true",
                       help="Continue from the last checkpoint in out_dir")
    train.set_defaults(handler=cmd_train)

    enh = sub.add_parser("enhance", help="Enhance an image or a directory of images")
    enh.add_argument("--input", required=True)
    enh.add_argument("--output", required=True)
    enh.add_argument("--fred", default=None, help="FRED checkpoint")
    enh.add_argument("--rice", default=None, help="RICE checkpoint")
    enh.add_argument("--no-fred", action="store_true")
    enh.add_argument("--no-rice", action="store_true")
    enh.add_argument("--save-intermediate", action="store_true",
                     help="Also write <name>.deblur.png and <name>.ratio.png")
    enh.add_argument("--device", default="cpu", choices=["auto", "cpu", "cuda"])
    enh.add_argument("--tile", type=int, default=0, help="Tile size (0 = full resolution)")
    enh.add_argument("--tile-overlap", type=int, default=32)
    enh.add_argument("--jobs", type=int, default=1)
    enh.set_defaults(handler=cmd_enhance)

    ev = sub.add_parser("evaluate", help="Proxy no-reference quality report")
    ev.add_argument("--dir", required=True)
    ev.add_argument("--baseline", default=None)
    ev.add_argument("--report", required=True, help="Output CSV")
    ev.add_argument("--plot", default=None, help="Output PNG with metric histograms")
    ev.add_argument("--jobs", type=int, default=1)
    ev.add_argument("--cache-dir", default=".cache/metrics")
    ev.add_argument("--no-cache", action="store_true")
    ev.set_defaults(handler=cmd_evaluate)

    base = sub.add_parser("baseline", help="Classical enhancement for comparison")
    base.add_argument("--input", required=True)
    base.add_argument("--output", required=True)
    base.add_argument("--method", choices=["clahe"], default="clahe")
    base.add_argument("--clip-limit", type=float, default=2.0)
    base.add_argument("--grid", type=int, default=8)
    base.set_defaults(handler=cmd_baseline)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_CONFIG

    try:
        return args.handler(args)
    except KeyboardInterrupt:
        logger.info("Stopped by user")
        return EXIT_RUNTIME
    except Exception as e:
        code = _exit_code_for(e)
        if code == EXIT_CONFIG:
            logger.error(f"{type(e).__name__}: {e}")
        else:
            logger.critical(f"Aborted: {e}", exc_info=True)
        return code

#!/usr/bin/env python3
"""
Write a synthetic demo corpus: flat textures for training and their
vignetted versions for illumination experiments.
"""

import sys
from pathlib import Path

# Add src directory to Python path
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from dotenv import load_dotenv
load_dotenv()

from logging_config import initialize_application_logging
initialize_application_logging()

import argparse
import logging

from degradation import apply_vignette, make_texture_corpus
from imaging import save_image

logger = logging.getLogger(__name__)


def main():
    parser = argparse.ArgumentParser(description="Generate a synthetic UWF-like demo corpus")
    parser.add_argument("--output", default="data/synthetic", help="Output directory")
    parser.add_argument("--count", type=int, default=8, help="Number of images")
    parser.add_argument("--size", type=int, default=256, help="Image side in pixels")
    parser.add_argument("--edge", type=float, default=0.3, help="Vignette level at the corners")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    output = Path(args.output)
    images = make_texture_corpus(args.count, args.size, args.seed)
    for i, img in enumerate(images):
        save_image(img, output / "clean" / f"texture_{i:03d}.png")
        save_image(apply_vignette(img, args.edge), output / "vignette" / f"texture_{i:03d}.png")

    logger.info(f"Wrote {len(images)} clean and vignetted images under {output}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""
Main entry point for the UWF enhancement toolkit.

    ./run.py train --stage fred --config configs/default.cfg
    ./run.py train --stage rice --config configs/default.cfg --fred runs/default/fred_last.pt
    ./run.py enhance --input images/ --output enhanced/ --fred ... --rice ...
    ./run.py evaluate --dir enhanced/ --baseline images/ --report report.csv --plot report.png
"""

import sys
from pathlib import Path

# Add src directory to Python path
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

# Load environment variables (LOG_LEVEL, LOG_FILE, UWF_ENHANCE_SEED)
from dotenv import load_dotenv
load_dotenv()

# Initialize logging first
from logging_config import initialize_application_logging
initialize_application_logging()

from cli import main

if __name__ == "__main__":
    sys.exit(main())

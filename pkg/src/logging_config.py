"""
Logging configuration for the UWF enhancement toolkit.

Console output goes to stdout; training runs also write a rotating log file
so long jobs keep their history without filling the disk.
"""

import logging
import logging.handlers
import os
import sys
import time
from pathlib import Path
from typing import Optional

DEFAULT_LOG_FILE = "logs/uwf_enhance.log"
LOG_FORMAT = (
    "%(asctime)s - %(name)s - %(levelname)s - "
    "%(filename)s:%(lineno)d - %(funcName)s() - %(message)s"
)
QUIET_LIBRARIES = ("matplotlib", "PIL")


def setup_logging(
    log_level: str = "INFO",
    log_file: Optional[str] = None,
    log_format: Optional[str] = None,
    enable_console: bool = True,
    max_bytes: int = 10 * 1024 * 1024,  # 10MB
    backup_count: int = 5
) -> logging.Logger:
    """
    Configure the root logger.

    Args:
        log_level: Logging level name (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Rotating log file path, or None for console only
        log_format: Format string overriding LOG_FORMAT
        enable_console: Attach a stdout handler
        max_bytes: Size at which the log file rotates
        backup_count: Rotated files kept
    """
    numeric_level = getattr(logging, log_level.upper(), logging.INFO)
    formatter = logging.Formatter(log_format or LOG_FORMAT)

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    root_logger.handlers.clear()

    handlers = []
    if enable_console:
        handlers.append(logging.StreamHandler(sys.stdout))
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=max_bytes,
            backupCount=backup_count,
            encoding='utf-8'
        ))
    for handler in handlers:
        handler.setLevel(numeric_level)
        handler.setFormatter(formatter)
        root_logger.addHandler(handler)

    for name in QUIET_LIBRARIES:
        logging.getLogger(name).setLevel(max(numeric_level, logging.WARNING))

    logging.getLogger(__name__).info(
        f"Logging initialized - Level: {log_level}, File: {log_file or 'None'}"
    )
    return root_logger


def setup_error_handling():
    """Log uncaught exceptions at CRITICAL before the interpreter exits."""

    def handle_exception(exc_type, exc_value, exc_traceback):
        if issubclass(exc_type, KeyboardInterrupt):
            sys.__excepthook__(exc_type, exc_value, exc_traceback)
            return
        logging.getLogger("uncaught_exception").critical(
            "Uncaught exception",
            exc_info=(exc_type, exc_value, exc_traceback)
        )

    sys.excepthook = handle_exception


class PerformanceLogger:
    """
    Context manager timing one operation.

    When ``items`` is given (images enhanced, iterations run) the completion
    line also reports throughput. ``items`` may be updated inside the block.
    """

    def __init__(self, operation_name: str, logger: Optional[logging.Logger] = None,
                 items: int = 0, unit: str = "items"):
        self.operation_name = operation_name
        self.logger = logger or logging.getLogger(__name__)
        self.items = items
        self.unit = unit
        self.start_time = 0.0
        self.duration = 0.0

    def __enter__(self):
        self.start_time = time.perf_counter()
        self.logger.info(f"Starting operation: {self.operation_name}")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration = time.perf_counter() - self.start_time

        if exc_type is not None:
            self.logger.error(
                f"Operation failed: {self.operation_name} "
                f"after {self.duration:.2f} seconds - {exc_val}"
            )
            return

        message = f"Operation completed: {self.operation_name} in {self.duration:.2f} seconds"
        if self.items and self.duration > 0:
            message += f" ({self.items / self.duration:.2f} {self.unit}/s)"
        self.logger.info(message)


def log_runtime_environment(logger: Optional[logging.Logger] = None):
    """Record library versions and accelerator availability at startup."""
    logger = logger or logging.getLogger(__name__)
    try:
        import torch
    except ImportError:
        logger.warning("PyTorch is not installed; training and enhancement are unavailable")
        return
    cuda = torch.cuda.is_available()
    device = torch.cuda.get_device_name(0) if cuda else "cpu"
    logger.info(f"torch {torch.__version__}, CUDA available: {cuda}, device: {device}")


def initialize_application_logging():
    """Initialize logging from the LOG_LEVEL and LOG_FILE environment variables."""
    log_level = os.getenv('LOG_LEVEL', 'INFO')
    log_file = os.getenv('LOG_FILE', DEFAULT_LOG_FILE)

    setup_logging(log_level=log_level, log_file=log_file or None)
    setup_error_handling()

    logger = logging.getLogger(__name__)
    logger.info("UWF enhancement toolkit logging initialized")
    log_runtime_environment(logger)

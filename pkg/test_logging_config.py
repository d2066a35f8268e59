#!/usr/bin/env python3
"""
Tests for logging setup and the PerformanceLogger context manager.
"""

import logging
import os
import sys

import pytest

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from logging_config import PerformanceLogger, setup_logging


@pytest.fixture
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in root.handlers:
        handler.close()
    root.handlers[:] = handlers
    root.setLevel(level)


def test_setup_logging_writes_rotating_file(tmp_path, restore_root_logger):
    log_file = tmp_path / "logs" / "run.log"
    setup_logging("DEBUG", str(log_file), enable_console=False)
    logging.getLogger("uwf.test").info("checkpoint saved")
    for handler in logging.getLogger().handlers:
        handler.flush()
    text = log_file.read_text(encoding="utf-8")
    assert "checkpoint saved" in text
    assert " - uwf.test - INFO - " in text


def test_performance_logger_reports_throughput(caplog):
    logger = logging.getLogger("uwf.perf")
    with caplog.at_level(logging.INFO, logger="uwf.perf"):
        with PerformanceLogger("Enhancing 4 images", logger, items=4, unit="images") as perf:
            pass
    assert perf.duration >= 0.0
    assert "Starting operation: Enhancing 4 images" in caplog.text
    assert "Operation completed: Enhancing 4 images" in caplog.text


def test_performance_logger_logs_failures(caplog):
    logger = logging.getLogger("uwf.perf")
    with caplog.at_level(logging.INFO, logger="uwf.perf"):
        with pytest.raises(RuntimeError):
            with PerformanceLogger("FRED training", logger):
                raise RuntimeError("loss exploded")
    failures = [r for r in caplog.records if r.levelno == logging.ERROR]
    assert len(failures) == 1
    assert "loss exploded" in failures[0].getMessage()

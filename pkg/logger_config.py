# stcmot-desk/logger_config.py
"""
Centralized logging configuration for the tracking toolkit.

This module sets up two loggers:
1.  `tracking_logger`: For the numerical package (`tracking/`).
    Outputs to `tracking.log`.
2.  `cli_logger`: For command workflows under `cli/`.
    Outputs to `cli.log`.

The log directory and level come from `STCMOT_LOG_DIR` and `STCMOT_LOG_LEVEL`
(a `.env` file is honoured). Logs never influence result files.
"""
import logging
import os

from dotenv import load_dotenv

load_dotenv()

# Defaults to the directory holding this file (the project root).
LOG_DIR = os.getenv("STCMOT_LOG_DIR") or os.path.dirname(os.path.abspath(__file__))
LOG_LEVEL = logging.getLevelName(os.getenv("STCMOT_LOG_LEVEL", "INFO").upper())
if not isinstance(LOG_LEVEL, int):
    LOG_LEVEL = logging.INFO

# --- Formatter (shared) ---
DEFAULT_LOG_FORMATTER = logging.Formatter(
    "%(asctime)s - %(name)s - %(levelname)s - %(module)s.%(funcName)s:%(lineno)d - %(message)s"
)


def _file_logger(name: str, filename: str) -> logging.Logger:
    log_file = os.path.join(LOG_DIR, filename)
    logger = logging.getLogger(name)
    logger.setLevel(LOG_LEVEL)
    logger.propagate = False
    # Add file handler only if not already present
    if not any(isinstance(h, logging.FileHandler) and h.baseFilename == log_file for h in logger.handlers):
        os.makedirs(LOG_DIR, exist_ok=True)
        handler = logging.FileHandler(log_file, mode="a", delay=True)
        handler.setFormatter(DEFAULT_LOG_FORMATTER)
        logger.addHandler(handler)
    return logger


# --- Tracking Logger (for tracking.log) ---
TRACKING_LOG_FILE = os.path.join(LOG_DIR, "tracking.log")
tracking_logger = _file_logger("stcmot.tracking", "tracking.log")

# --- CLI Logger (for cli.log) ---
CLI_LOG_FILE = os.path.join(LOG_DIR, "cli.log")
cli_logger = _file_logger("stcmot.cli", "cli.log")

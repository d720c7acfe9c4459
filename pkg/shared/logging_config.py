"""
GroundKit - Centralized Logging Configuration
Provides structured logging with file rotation for all components
"""

import logging
import logging.handlers
import os
import sys
from typing import Optional


# ==================== LOG DIRECTORY ====================
LOG_DIR = os.environ.get(
    "GROUNDKIT_LOG_DIR",
    os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "logs"),
)
os.makedirs(LOG_DIR, exist_ok=True)

LOG_LEVEL = logging.getLevelName(os.environ.get("GROUNDKIT_LOG_LEVEL", "INFO").upper())
if not isinstance(LOG_LEVEL, int):
    LOG_LEVEL = logging.INFO

LOGGER_PREFIX = "groundkit."


# ==================== LOG FORMAT ====================
LOG_FORMAT = "%(asctime)s [%(levelname)-8s] %(name)-18s: %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Concise format for console
CONSOLE_FORMAT = "%(asctime)s [%(levelname)-8s] %(message)s"


# ==================== SETUP FUNCTIONS ====================

def setup_logger(
    name: str,
    log_file: Optional[str] = None,
    level: int = LOG_LEVEL,
    max_bytes: int = 5 * 1024 * 1024,  # 5MB per file
    backup_count: int = 5,
    console: bool = True
) -> logging.Logger:
    """
    Create a configured logger with file rotation and console output.

    Args:
        name: Logger name (e.g., 'groundkit.train', 'groundkit.data')
        log_file: Log file name (stored in logs/ directory). None = no file logging.
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        max_bytes: Max size per log file before rotation
        backup_count: Number of rotated files to keep
        console: Whether to also log to console (stderr, so stdout stays clean for reports)

    Returns:
        Configured Logger instance
    """
    logger = logging.getLogger(name)

    # Avoid adding duplicate handlers
    if logger.handlers:
        return logger

    logger.setLevel(level)
    logger.propagate = False

    if log_file:
        file_path = os.path.join(LOG_DIR, log_file)
        file_handler = logging.handlers.RotatingFileHandler(
            file_path,
            maxBytes=max_bytes,
            backupCount=backup_count,
            encoding="utf-8"
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT, LOG_DATE_FORMAT))
        logger.addHandler(file_handler)

    if console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT, LOG_DATE_FORMAT))
        logger.addHandler(console_handler)

    return logger


# ==================== PRE-CONFIGURED LOGGERS ====================

def get_data_logger() -> logging.Logger:
    """Logger for curation and synthetic data generation"""
    return setup_logger("groundkit.data", "data.log")


def get_model_logger() -> logging.Logger:
    """Logger for model construction, checkpoints and inference"""
    return setup_logger("groundkit.model", "model.log")


def get_train_logger() -> logging.Logger:
    """Logger for training progress (steps, epochs, lr)"""
    return setup_logger("groundkit.train", "train.log")


def get_eval_logger() -> logging.Logger:
    """Logger for metric computation and reports"""
    return setup_logger("groundkit.eval", "eval.log")


def get_cli_logger() -> logging.Logger:
    """Logger for command-line runs"""
    return setup_logger("groundkit.cli", "cli.log")


def set_console_level(level: int) -> None:
    """Change the console threshold of every GroundKit logger; log files keep their level"""
    for name, logger in logging.Logger.manager.loggerDict.items():
        if not name.startswith(LOGGER_PREFIX) or not isinstance(logger, logging.Logger):
            continue
        logger.setLevel(min(level, LOG_LEVEL))
        for handler in logger.handlers:
            if not isinstance(handler, logging.handlers.RotatingFileHandler):
                handler.setLevel(level)

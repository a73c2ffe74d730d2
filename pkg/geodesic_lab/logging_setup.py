import logging
import traceback
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from .pipeline.util import get_data_dir

LOGGER_NAME = "geodesic_lab"
LOG_FILE = "lab.log"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s"
LOG_MAX_BYTES = 5 * 1024 * 1024  # 5MB
LOG_BACKUPS = 3


def _resolve_level(log_level: str) -> Optional[int]:
    level = logging.getLevelName(str(log_level).strip().upper())
    return level if isinstance(level, int) else None


def setup_logging(
    log_level: str = "INFO",
    log_dir: Optional[str] = None,
    console: bool = True,
) -> logging.Logger:
    """
    Attach the lab's rotating file handler (and a console handler) to the package logger.

    Every subcommand run calls this, so handlers from a previous call are closed
    first. The file lives in $DATA_DIR/logs unless ``log_dir`` says otherwise.

    Returns:
        The "geodesic_lab" logger.
    """
    log_path = Path(log_dir) if log_dir else Path(get_data_dir()) / "logs"
    log_path.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger(LOGGER_NAME)
    level = _resolve_level(log_level)
    logger.setLevel(level if level is not None else logging.INFO)

    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT)
    log_file = log_path / LOG_FILE
    file_handler = RotatingFileHandler(log_file, maxBytes=LOG_MAX_BYTES, backupCount=LOG_BACKUPS)
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    if console:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    # Reported only once a handler exists to carry it
    if level is None:
        logger.warning(f"Unknown LOG_LEVEL {log_level!r}; using INFO")
    logger.info(f"Logging initialized. Log file: {log_file}")
    return logger


def log_exception(logger: logging.Logger, message: str, exc_info: bool = True):
    """Log an exception with full stack trace"""
    logger.error(f"{message}\n{traceback.format_exc()}", exc_info=exc_info)

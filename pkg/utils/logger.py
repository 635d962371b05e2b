import logging
import os
from pathlib import Path

LOG_DIR_ENV = "DDSS_LOG_DIR"
LOG_LEVEL_ENV = "DDSS_LOG_LEVEL"


def _resolve_level(level):
    env_level = os.environ.get(LOG_LEVEL_ENV)
    if env_level:
        return logging.getLevelName(env_level.upper())
    return level


def setup_logger(name: str, log_file: str = "ddss.log", level=logging.INFO):
    logger = logging.getLogger(name)
    logger.setLevel(_resolve_level(level))
    logger.propagate = False

    # handlers are attached once per logger name
    if logger.handlers:
        return logger

    formatter = logging.Formatter(
        "%(asctime)s | %(levelname)s | %(name)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    )

    # File Handler (DDSS_LOG_DIR="" disables it)
    log_dir = os.environ.get(LOG_DIR_ENV, "logs")
    if log_dir:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path / log_file, mode="a")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    # Console Handler (stderr, stdout is reserved for CLI tables)
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    return logger

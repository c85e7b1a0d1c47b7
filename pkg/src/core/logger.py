"""
Centralized logging configuration for the reversible-chaos toolkit.

Every record carries the construction context it was emitted in (the configuration being
built and the construction step), so interleaved scan workers and API jobs stay readable:

    2026-01-05 10:12:03 | INFO     | saddle-positive (1, 0.25) > annulus twist | annulus time 37.2: ...

Usage:
    from src.core.logger import logger, log_context

    with log_context(instance="saddle-positive (1, 0.25)"):
        with log_context(step="inner boundary"):
            logger.info("sigma_hat=0.41")
"""
import contextlib
import contextvars
import logging
import sys
from typing import Iterator

from src.core.config import LOG_LEVEL

# Ordered context fields joined into the record prefix
CONTEXT_FIELDS = ("instance", "step")

_context: contextvars.ContextVar[dict[str, str]] = contextvars.ContextVar("rc_log_context", default={})


class ConstructionContextFilter(logging.Filter):
    """Adds `record.context`: the active instance and step, or '-' outside any construction."""

    def filter(self, record: logging.LogRecord) -> bool:
        fields = _context.get()
        parts = [fields[name] for name in CONTEXT_FIELDS if fields.get(name)]
        record.context = " > ".join(parts) if parts else "-"
        return True


@contextlib.contextmanager
def log_context(**fields: str) -> Iterator[dict[str, str]]:
    """Set context fields for the records logged inside the block; nested blocks override."""
    merged = {**_context.get(), **{k: str(v) for k, v in fields.items() if v is not None}}
    token = _context.set(merged)
    try:
        yield merged
    finally:
        _context.reset(token)


def current_context() -> dict[str, str]:
    return dict(_context.get())


def setup_logger(name: str = "reversible_chaos", level: int | str = LOG_LEVEL) -> logging.Logger:
    """
    Set up and return the shared logger with the construction-context prefix.

    Args:
        name: Logger name (default: "reversible_chaos")
        level: Logging level, as a number or a level name (default: RC_LOG_LEVEL)
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Avoid adding handlers multiple times
    if logger.handlers:
        return logger

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(logging.DEBUG)
    console_handler.addFilter(ConstructionContextFilter())
    console_handler.setFormatter(logging.Formatter(
        fmt="%(asctime)s | %(levelname)-8s | %(context)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    ))
    logger.addHandler(console_handler)

    return logger


def set_level(level: int | str) -> None:
    """Change the level of the shared logger (used by the CLI verbose flag)."""
    logger.setLevel(level)


# Create default logger instance
logger = setup_logger()

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass
from typing import Any

from ohmic_cli.errors import UsageError

DEFAULT_DIRECT_LIMIT = 30_000
DEFAULT_DENSE_LIMIT = 4096

_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True, slots=True)
class Settings:
    threads: int
    direct_limit: int
    dense_limit: int
    log_level: str

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _int_env(name: str, default: int, *, minimum: int = 1) -> int:
    raw = os.environ.get(name, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError as e:
        raise UsageError(f"{name} must be an integer, got {raw!r}") from e
    if value < minimum:
        raise UsageError(f"{name} must be >= {minimum}, got {value}")
    return value


def load_settings() -> Settings:
    threads = _int_env("OHMIC_THREADS", max(1, os.cpu_count() or 1))
    direct_limit = _int_env("OHMIC_DIRECT_LIMIT", DEFAULT_DIRECT_LIMIT)
    dense_limit = _int_env("OHMIC_DENSE_LIMIT", DEFAULT_DENSE_LIMIT)
    level = os.environ.get("OHMIC_LOG_LEVEL", "WARNING").strip().upper() or "WARNING"
    if level not in _LEVELS:
        raise UsageError(f"OHMIC_LOG_LEVEL must be one of {', '.join(_LEVELS)}, got {level!r}")
    return Settings(threads=threads, direct_limit=direct_limit, dense_limit=dense_limit, log_level=level)


def configure_logging(level: str) -> None:
    from rich.console import Console
    from rich.logging import RichHandler

    logger = logging.getLogger("ohmic_cli")
    logger.setLevel(level)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=Console(stderr=True), show_path=False)
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)

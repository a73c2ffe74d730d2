import math
import os
import re
from typing import List, Tuple

import numpy as np

from ..errors import ConfigError


# Environment variable defaults
DEFAULT_DATA_DIR = "./lab_data"
DEFAULT_REPORTS_DIR = "reports"
DEFAULT_CACHE_DIR = "cache"
DEFAULT_WORD_CAP_BOLZA = 26
DEFAULT_WORD_CAP_MODULAR = 40
DEFAULT_MP_DPS = 30

_GRID_RE = re.compile(r"^\s*([^:]+):([^:]+):(\d+)\s*(log|lin)?\s*$")
_RANGE_RE = re.compile(r"^\s*(\d+)\s*(?::\s*(\d+)\s*)?$")


def get_data_dir() -> str:
    """Get data directory from environment"""
    return os.getenv("DATA_DIR", DEFAULT_DATA_DIR)


def get_reports_dir() -> str:
    return os.path.join(get_data_dir(), DEFAULT_REPORTS_DIR)


def get_cache_dir() -> str:
    return os.path.join(get_data_dir(), DEFAULT_CACHE_DIR)


def ensure_dir(path: str):
    """Ensure directory exists"""
    os.makedirs(path, exist_ok=True)


def _env_int(name: str, default: int, minimum: int = 1) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def get_worker_count() -> int:
    """Thread count for fan-out stages (LAB_WORKERS)"""
    return _env_int("LAB_WORKERS", 1)


def get_word_cap(model: str) -> int:
    if model == "modular":
        return _env_int("LAB_WORD_CAP_MODULAR", DEFAULT_WORD_CAP_MODULAR)
    return _env_int("LAB_WORD_CAP_BOLZA", DEFAULT_WORD_CAP_BOLZA)


def get_mp_dps() -> int:
    """mpmath decimal digits for long-word traces"""
    return _env_int("LAB_MP_DPS", DEFAULT_MP_DPS, minimum=16)


def parse_grid(spec: str) -> List[float]:
    """Parse 'start:stop:count[log|lin]' into an ascending list of x values.

    '10:1e3:50log' gives 50 log-spaced points with exact endpoints; the
    default spacing is linear.
    """
    match = _GRID_RE.match(spec or "")
    if not match:
        raise ConfigError(f"Invalid grid {spec!r}; expected start:stop:count[log|lin]")
    try:
        start, stop = float(match.group(1)), float(match.group(2))
    except ValueError:
        raise ConfigError(f"Invalid grid bounds in {spec!r}")
    count = int(match.group(3))
    spacing = match.group(4) or "lin"

    if count < 1:
        raise ConfigError(f"Grid {spec!r} needs at least one point")
    if not (math.isfinite(start) and math.isfinite(stop)) or start <= 0 or stop < start:
        raise ConfigError(f"Grid {spec!r} needs 0 < start <= stop")
    if count == 1:
        return [start]
    if spacing == "log":
        points = np.geomspace(start, stop, count)
    else:
        points = np.linspace(start, stop, count)
    # geomspace/linspace already pin the endpoints; keep them exact anyway
    values = [float(v) for v in points]
    values[0], values[-1] = start, stop
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"Grid {spec!r} is not strictly increasing")
    return values


def parse_n_range(spec: str) -> Tuple[int, int]:
    """Parse '4:10' (inclusive) or '5' into an integer interval"""
    match = _RANGE_RE.match(spec or "")
    if not match:
        raise ConfigError(f"Invalid range {spec!r}; expected lo:hi")
    lo = int(match.group(1))
    hi = int(match.group(2)) if match.group(2) is not None else lo
    if hi < lo:
        raise ConfigError(f"Invalid range {spec!r}: hi < lo")
    return lo, hi


def format_float(value: float) -> str:
    """Shortest round-tripping text for a float (stable across runs)"""
    return repr(float(value))


class Accumulator:
    """Running compensated sum, like math.fsum but incremental.

    Holds the total as an unevaluated pair (s, t) with s = fl(total).
    """

    __slots__ = ("_s", "_t")

    def __init__(self, value: float = 0.0):
        self._s = float(value)
        self._t = 0.0

    @staticmethod
    def two_sum(u: float, v: float) -> Tuple[float, float]:
        # Error free transformation: u + v == s + t exactly
        s = u + v
        up = s - v
        vpp = s - up
        up -= u
        vpp -= v
        return s, -(up + vpp)

    def add(self, value: float) -> "Accumulator":
        y, u = Accumulator.two_sum(float(value), self._t)
        self._s, self._t = Accumulator.two_sum(y, self._s)
        if self._s == 0:
            self._s = u
        else:
            self._t += u
        return self

    @property
    def value(self) -> float:
        return self._s + self._t

    def __float__(self) -> float:
        return self.value

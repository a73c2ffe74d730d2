import json
import logging
import math
import os
from typing import Any, Dict, List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import __version__
from .errors import ConfigError
from .pipeline.util import get_reports_dir, get_worker_count, parse_grid, parse_n_range

logger = logging.getLogger("geodesic_lab")

BOLZA_AREA = 4 * math.pi
MODULAR_AREA = math.pi / 3


def load_environment(dotenv_path: Optional[str] = None) -> bool:
    """Load a .env file into os.environ without overriding variables already set"""
    return load_dotenv(dotenv_path=dotenv_path, override=False)


class RunConfig(BaseModel):
    """Everything a lab command depends on.

    ``workers`` and ``output_dir`` only change how and where a run executes,
    so they are left out of the serialized form embedded in outputs.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    model: Literal["bolza", "modular"] = Field(default="bolza", description="Group model")
    norm_bound: float = Field(default=1000.0, description="Spectrum norm bound N(P) <= norm_bound")
    word_cap: Optional[int] = Field(
        default=None, ge=1, description="Enumeration word cap; LAB_WORD_CAP_<MODEL> when unset"
    )
    eigenvalue_file: Optional[str] = Field(default=None, description="Laplace eigenvalue file")
    area: Optional[float] = Field(default=None, gt=0, description="Surface area; the model's when unset")
    synthetic_area: Optional[float] = Field(default=None, gt=0, description="Area for synthetic Weyl zeros")
    synthetic_T_max: Optional[float] = Field(default=None, gt=1, description="Synthetic zeros up to here")
    seed: int = Field(default=0, ge=0, description="Seed of the synthetic jitter")
    jitter: float = Field(default=1.0, ge=0, le=1, description="Synthetic jitter strength")
    alpha: float = Field(default=1.0, gt=0, description="Log-power saving")
    beta: float = Field(default=6.0, description="Y1 = n^beta; must exceed 4 alpha + 1")
    epsilon: float = Field(default=0.01, description="Real-zero window widening for residual_thm2")
    grid: str = Field(default="10:1e3:50log", description="Evaluation grid start:stop:count[log|lin]")
    fit_grid: Optional[str] = Field(default=None, description="Coefficient fit grid; the evaluation grid when unset")
    zero_cutoff: Optional[float] = Field(default=None, gt=0, description="Ordinate truncation T for formulas")
    n_range: str = Field(default="4:10", description="Octave range lo:hi for scans")
    density: int = Field(default=256, ge=64, description="Scan grid points per octave")
    slack: float = Field(default=3.0, ge=1, description="Allowed growth factor in the measure-bound trend")
    output_dir: str = Field(default_factory=get_reports_dir, exclude=True, description="Report directory")
    workers: Optional[int] = Field(default=None, ge=1, exclude=True, description="Thread count")

    @model_validator(mode="after")
    def check_consistency(self):
        if not self.norm_bound > 1:
            raise ValueError(f"norm_bound must exceed 1, got {self.norm_bound}")
        if not self.beta > 4 * self.alpha + 1:
            raise ValueError(f"beta={self.beta} must exceed 4*alpha + 1 = {4 * self.alpha + 1}")
        if not 0 <= self.epsilon < 0.25:
            raise ValueError(f"epsilon must lie in [0, 1/4), got {self.epsilon}")
        if self.eigenvalue_file and (self.synthetic_area or self.synthetic_T_max):
            raise ValueError("give either an eigenvalue file or synthetic zero parameters, not both")
        try:
            points = parse_grid(self.grid)
            if self.fit_grid:
                parse_grid(self.fit_grid)
            lo, _ = parse_n_range(self.n_range)
        except ConfigError as e:
            raise ValueError(str(e))
        if points[0] < 1:
            raise ValueError(f"grid {self.grid!r} starts below 1")
        if points[-1] > self.norm_bound:
            raise ValueError(f"grid {self.grid!r} reaches past norm_bound {self.norm_bound}")
        if lo < 2:
            raise ValueError(f"n_range {self.n_range!r} must start at 2 or later")
        return self

    @property
    def grid_points(self) -> List[float]:
        return parse_grid(self.grid)

    @property
    def fit_grid_points(self) -> List[float]:
        return parse_grid(self.fit_grid or self.grid)

    @property
    def n_bounds(self) -> Tuple[int, int]:
        return parse_n_range(self.n_range)

    @property
    def surface_area(self) -> float:
        if self.area is not None:
            return self.area
        return BOLZA_AREA if self.model == "bolza" else MODULAR_AREA

    @property
    def genus(self) -> Optional[int]:
        """Genus of the compact model; the modular surface has none usable by the formulas"""
        return 2 if self.model == "bolza" else None

    @property
    def uses_synthetic_zeros(self) -> bool:
        return self.synthetic_area is not None or self.synthetic_T_max is not None

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def to_json(self) -> str:
        """Canonical text: sorted keys, execution-only fields dropped"""
        return json.dumps({"version": __version__, "config": self.to_dict()}, sort_keys=True)


def _read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ConfigError(f"--config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as e:
        raise ConfigError(f"--config file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"--config file {path} must hold a JSON object")
    return data


def load_run_config(overrides: Optional[Dict[str, Any]] = None, config_file: Optional[str] = None) -> RunConfig:
    """Merge defaults < environment < JSON config file < explicit overrides"""
    values: Dict[str, Any] = {}
    if config_file:
        values.update(_read_config_file(config_file))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if values.get("workers") is None:
        values["workers"] = get_worker_count()
    config = RunConfig(**values)
    logger.debug(f"Run config: {config.to_json()}")
    return config

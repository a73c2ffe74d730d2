import logging
import math
import os
import sys
from argparse import ArgumentParser
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from . import __version__
from .config import RunConfig, load_environment, load_run_config
from .errors import EXIT_INCOMPLETE, ConfigError, LabError
from .logging_setup import log_exception, setup_logging
from .pipeline.exceptional_set import (
    ExceptionalParams,
    build_EFGH,
    reconstruct_psi_thm2,
    residual_thm2,
    verify_measure_bound,
)
from .pipeline.explicit_formula import (
    fit_error_exponent,
    fit_smooth_coefficients,
    reconstruct_psi_thm1,
    residual_thm1,
)
from .pipeline.group_models import (
    LENGTH_TOLERANCE,
    EnumerationOptions,
    LengthSpectrum,
    bolza_generators,
    enumerate_length_spectrum,
    modular_generators,
)
from .pipeline.spectral_data import (
    ZeroSet,
    eigenvalues_to_zeros,
    load_eigenvalue_file,
    synthesize_zeros,
    weyl_check,
)
from .pipeline.summatory import batch_profile, psi
from .pipeline.util import get_cache_dir, get_word_cap
from .store import ReportStore

logger = logging.getLogger("geodesic_lab")

COMMANDS = ("spectrum", "zeros", "psi", "compare", "scan", "thm2")


class LabRunner:
    def __init__(self, config: RunConfig):
        self.config = config
        self.store: Optional[ReportStore] = None
        self._spectrum: Optional[LengthSpectrum] = None
        self._zeros: Optional[ZeroSet] = None

    def initialize(self):
        """Prepare the report store"""
        self.store = ReportStore(self.config.output_dir, get_cache_dir(), self.config)
        self.store.connect()
        logger.info(f"Lab runner initialized (model={self.config.model}, workers={self.config.workers})")

    def run(self, command: str) -> int:
        """Run one subcommand; returns its exit code"""
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        return getattr(self, f"cmd_{command}")()

    # Inputs

    def load_spectrum(self) -> LengthSpectrum:
        """Spectrum from the cache when its metadata matches, otherwise enumerated and cached"""
        if self._spectrum is not None:
            return self._spectrum
        cfg = self.config
        word_cap = cfg.word_cap or get_word_cap(cfg.model)
        key = ReportStore.spectrum_key(cfg.model, cfg.norm_bound, word_cap, LENGTH_TOLERANCE)

        spec = self.store.load_spectrum(key)
        if spec is None:
            gens = bolza_generators() if cfg.model == "bolza" else modular_generators()
            opts = EnumerationOptions(word_cap=word_cap, workers=cfg.workers)
            spec = enumerate_length_spectrum(gens, cfg.norm_bound, opts)
            self.store.save_spectrum(spec, key)
        self._spectrum = spec
        return spec

    def load_zeros(self, required: bool = True, T_max: Optional[float] = None) -> Optional[ZeroSet]:
        """Zeros from --eigenvalues, or synthetic Weyl zeros when synthetic parameters are set"""
        if self._zeros is not None:
            return self._zeros
        cfg = self.config
        if cfg.eigenvalue_file:
            if not os.path.exists(cfg.eigenvalue_file):
                raise ConfigError(f"--eigenvalues: file not found: {cfg.eigenvalue_file}")
            evs = load_eigenvalue_file(cfg.eigenvalue_file)
            self._zeros = eigenvalues_to_zeros(evs, cfg.surface_area)
        elif cfg.uses_synthetic_zeros:
            area = cfg.synthetic_area or cfg.surface_area
            limit = cfg.synthetic_T_max or T_max
            if limit is None:
                raise ConfigError("--synthetic-t-max is required for this command")
            self._zeros = synthesize_zeros(area, limit, seed=cfg.seed, jitter=cfg.jitter)
        elif required:
            raise ConfigError("no zero data: pass --eigenvalues or --synthetic-area/--synthetic-t-max")
        return self._zeros

    def _spectrum_status(self) -> int:
        if self._spectrum is not None and not self._spectrum.complete:
            logger.warning("Spectrum is best-effort (word cap reached); exiting with incomplete status")
            return EXIT_INCOMPLETE
        return 0

    def _genus(self) -> int:
        if self.config.genus is None:
            raise ConfigError(f"model {self.config.model!r} has no compact genus for the explicit formulas")
        return self.config.genus

    def _exceptional_params(self) -> ExceptionalParams:
        cfg = self.config
        return ExceptionalParams(alpha=cfg.alpha, beta=cfg.beta, n_range=cfg.n_bounds, density=cfg.density)

    # Subcommands

    def cmd_spectrum(self) -> int:
        spec = self.load_spectrum()
        logger.info(f"ENUMERATED: {spec.class_count} classes, systole {spec.systole}, complete={spec.complete}")
        return self._spectrum_status()

    def cmd_zeros(self) -> int:
        zeros = self.load_zeros(required=True)
        weyl = None
        if zeros.count:
            report = weyl_check(zeros, zeros.max_gamma)
            weyl = {**report.model_dump(mode="json"), "plausible": report.plausible}
        self.store.write_zeros(zeros, weyl)
        return 0

    def cmd_psi(self) -> int:
        spec = self.load_spectrum()
        profile = batch_profile(spec, self.config.grid_points, workers=self.config.workers)
        if not profile.is_monotone():
            logger.warning("PROFILED: profile is not monotone; check the spectrum")
        self.store.write_profile(profile)
        return self._spectrum_status()

    def cmd_compare(self) -> int:
        """Coefficient fit, x^(3/4) sandwich reconstruction and residual scaling on the grid"""
        cfg = self.config
        spec = self.load_spectrum()
        zeros = self.load_zeros(required=cfg.model == "bolza", T_max=cfg.zero_cutoff)
        grid = cfg.grid_points
        T = cfg.zero_cutoff if cfg.zero_cutoff is not None else math.inf

        coeffs = None
        if zeros is not None and cfg.genus is not None:
            coeffs = fit_smooth_coefficients(spec, zeros, cfg.fit_grid_points, g=cfg.genus, T=cfg.zero_cutoff)
        else:
            logger.info("FITTED: no compact genus or zero data; reporting residuals only")

        residual_zeros = zeros if zeros is not None else _trivial_zeros(cfg.surface_area)
        rows: List[List[Any]] = []
        contained = checked = 0
        for x in grid:
            exact = psi(spec, x)
            residual = residual_thm1(spec, residual_zeros, x)
            formula = lower = upper = None
            if coeffs is not None and x - 2 * x ** 0.75 > 1:
                bounds = reconstruct_psi_thm1(coeffs, zeros, cfg.genus, x, T)
                lower, upper = bounds.lower, bounds.upper
                formula = (lower + upper) / 2.0
                checked += 1
                contained += bounds.contains(exact)
            rows.append([x, exact, formula, residual, lower, upper])

        scaled = [abs(r[3]) / r[0] ** 0.75 for r in rows]
        summary: Dict[str, Any] = {
            "model": cfg.model,
            "points": len(rows),
            "spectrum": {"classes": spec.class_count, "complete": spec.complete, "norm_bound": spec.norm_bound},
            "coefficients": coeffs.model_dump(mode="json") if coeffs is not None else None,
            "sandwich_points": checked,
            "containment_rate": contained / checked if checked else None,
            "max_scaled_residual": max(scaled) if scaled else None,
            "exponent_fit": None,
        }
        try:
            summary["exponent_fit"] = fit_error_exponent((r[0], r[3]) for r in rows).model_dump(mode="json")
        except LabError as e:
            logger.warning(f"FITTED: exponent fit skipped: {e}")
            summary["exponent_fit_error"] = str(e)
        if checked:
            logger.info(f"FITTED: sandwich holds at {contained}/{checked} points")
        self.store.write_compare(cfg.model, rows, summary)
        return self._spectrum_status()

    def cmd_scan(self) -> int:
        """Exceptional-set scan over the octave range plus the measure-bound check"""
        params = self._exceptional_params()
        zeros = self.load_zeros(required=True, T_max=math.exp(params.n_range[1]))
        result = build_EFGH(zeros, params, workers=self.config.workers)
        check = None
        reports = result.reports()
        if len({r.n for r in reports}) >= 2:
            check = verify_measure_bound(reports, slack=self.config.slack)
            logger.info(f"SCANNED: C_hat={check.C_hat} passed={check.passed}")
        else:
            logger.warning("SCANNED: measure-bound check needs at least 2 octaves; skipped")
        self.store.write_scan(result, check)
        return 0

    def cmd_thm2(self) -> int:
        """Short-interval reconstruction on the grid points lying in scanned octaves"""
        cfg = self.config
        g = self._genus()
        params = self._exceptional_params()
        lo, hi = params.n_range
        spec = self.load_spectrum()
        zeros = self.load_zeros(required=True, T_max=math.exp(hi))
        efgh = build_EFGH(zeros, params, workers=cfg.workers)
        coeffs = fit_smooth_coefficients(spec, zeros, cfg.fit_grid_points, g=g)

        points = []
        for x in cfg.grid_points:
            h = x ** 0.75 / math.log(x) ** cfg.alpha
            n, n_next = int(math.floor(math.log(x))), int(math.floor(math.log(x + h)))
            if lo <= n and n_next <= hi and x + h <= spec.norm_bound:
                points.append(x)
        if not points:
            raise ConfigError(f"no grid point of {cfg.grid!r} lies in octaves {lo}..{hi} within the norm bound")
        if len(points) < len(cfg.grid_points):
            logger.warning(f"THM2: using {len(points)} of {len(cfg.grid_points)} grid points")

        rows: List[List[Any]] = []
        regular_widths = []
        contained = regular = 0
        for x in points:
            b = reconstruct_psi_thm2(coeffs, zeros, spec, x, cfg.alpha, efgh, g=g)
            scaled = b.width * math.log(x) ** cfg.alpha / x ** 0.75
            if not b.exceptional:
                regular += 1
                regular_widths.append(scaled)
                contained += b.lower <= b.psi <= b.upper
            rows.append([x, b.n, b.case, b.h, b.psi, b.lower, b.upper, b.exact_lower, b.exact_upper,
                         b.exceptional, scaled, residual_thm2(spec, zeros, x, cfg.epsilon)])

        summary = {
            "model": cfg.model,
            "points": len(rows),
            "non_exceptional": regular,
            "containment_rate": contained / regular if regular else None,
            "max_scaled_width": max(regular_widths) if regular_widths else None,
            "coefficients": coeffs.model_dump(mode="json"),
        }
        self.store.write_thm2(cfg.model, rows, summary)
        return self._spectrum_status()


def _trivial_zeros(area: float) -> ZeroSet:
    return ZeroSet(trivial=True, gammas=np.zeros(0), multiplicities=np.zeros(0, dtype=np.int64),
                   area=area, coverage=0.0, source="none")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="geodesic_lab", description="Prime geodesic theorem numerical lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--model", choices=("bolza", "modular"))
    common.add_argument("--norm-bound", type=float, dest="norm_bound")
    common.add_argument("--word-cap", type=int, dest="word_cap")
    common.add_argument("--eigenvalues", dest="eigenvalue_file", help="Eigenvalue file 'lambda[,multiplicity]'")
    common.add_argument("--area", type=float)
    common.add_argument("--synthetic-area", type=float, dest="synthetic_area")
    common.add_argument("--synthetic-t-max", type=float, dest="synthetic_T_max")
    common.add_argument("--seed", type=int)
    common.add_argument("--jitter", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--grid", help="start:stop:count[log|lin], e.g. 10:1e3:50log")
    common.add_argument("--fit-grid", dest="fit_grid")
    common.add_argument("--zero-cutoff", type=float, dest="zero_cutoff", help="Ordinate truncation T")
    common.add_argument("--n", dest="n_range", help="Octave range lo:hi")
    common.add_argument("--density", type=int, help="Scan points per octave")
    common.add_argument("--slack", type=float)
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--workers", type=int)

    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "spectrum": "Enumerate (or reuse) the length spectrum cache",
        "zeros": "Ingest or synthesize zeros, Weyl-check and export them",
        "psi": "Export psi, psi1, psi2 on the grid",
        "compare": "Coefficient fit, x^(3/4) sandwich and residual scaling",
        "scan": "Exceptional-set scan and measure-bound check",
        "thm2": "Short-interval reconstruction over scanned octaves",
    }
    for name in COMMANDS:
        subparsers.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    load_environment()
    setup_logging(os.getenv("LOG_LEVEL", "INFO"))

    options = vars(args)
    command = options.pop("command")
    config_file = options.pop("config")
    try:
        config = load_run_config(options, config_file)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return 2
    except LabError as e:
        log_exception(logger, f"Invalid configuration: {e}")
        return e.exit_code

    runner = LabRunner(config)
    try:
        runner.initialize()
        code = runner.run(command)
        logger.info(f"{command} finished with exit code {code}")
        return code
    except ValidationError as e:
        log_exception(logger, f"{command} rejected its inputs: {e}")
        return 2
    except LabError as e:
        log_exception(logger, f"{command} failed: {e}")
        return e.exit_code
    except Exception as e:
        log_exception(logger, f"{command} failed: {str(e)}")
        return 1


if __name__ == "__main__":
    sys.exit(main())

import csv
import io
import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from . import __version__
from .config import RunConfig
from .logging_setup import log_exception
from .pipeline.exceptional_set import EFGHResult, MeasureBoundCheck
from .pipeline.group_models import LengthSpectrum, PrimitiveClass
from .pipeline.spectral_data import ZeroSet
from .pipeline.summatory import SummatoryProfile
from .pipeline.util import ensure_dir, format_float

logger = logging.getLogger("geodesic_lab")

SPECTRUM_COLUMNS = ("trace", "length", "norm", "multiplicity", "word")
ZERO_COLUMNS = ("gamma", "multiplicity")
PROFILE_COLUMNS = ("x", "psi", "psi1", "psi2")
COMPARE_COLUMNS = ("x", "psi_exact", "formula", "residual", "lower", "upper")
SCAN_COLUMNS = ("n", "measure_E", "measure_F", "measure_G", "measure_H", "bound_envelope")
THM2_COLUMNS = ("x", "n", "case", "h", "psi", "lower", "upper", "exact_lower", "exact_upper",
                "exceptional", "scaled_width", "residual")


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def _dumps(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


class ReportStore:
    """Reads and writes every file the lab touches.

    Outputs carry the serialized run config and the package version and no
    timestamps, so equal configs produce byte-identical files.
    """

    def __init__(self, output_dir: str, cache_dir: str, config: RunConfig):
        self.output_dir = output_dir
        self.cache_dir = cache_dir
        self.config = config

    def connect(self):
        """Create the report and cache directories"""
        try:
            ensure_dir(self.output_dir)
            ensure_dir(self.cache_dir)
            logger.info(f"Report store ready: reports={self.output_dir} cache={self.cache_dir}")
        except OSError as e:
            log_exception(logger, f"Failed to prepare report directories: {e}")
            raise

    def _header(self, extra: Optional[Dict[str, Any]] = None) -> List[str]:
        lines = [f"# geodesic_lab {__version__}", f"# config {self.config.to_json()}"]
        for key, value in sorted((extra or {}).items()):
            lines.append(f"# {key} {json.dumps(value, sort_keys=True)}")
        return lines

    def _write_text(self, path: str, text: str):
        # Write then rename so readers never see a half-written report
        tmp_path = f"{path}.tmp"
        with open(tmp_path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_path, path)

    def _write_csv(self, path: str, columns: Sequence[str], rows: Iterable[Sequence[Any]],
                   meta: Optional[Dict[str, Any]] = None) -> str:
        buffer = io.StringIO()
        for line in self._header(meta):
            buffer.write(line + "\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        self._write_text(path, buffer.getvalue())
        logger.info(f"Wrote {path}")
        return path

    def _write_json(self, path: str, payload: Dict[str, Any]) -> str:
        document = {"version": __version__, "config": self.config.to_dict(), **payload}
        self._write_text(path, _dumps(document))
        logger.info(f"Wrote {path}")
        return path

    def report_path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    # Spectrum cache

    def spectrum_cache_path(self, model: str, norm_bound: float) -> str:
        return os.path.join(self.cache_dir, f"spectrum_{model}_{format_float(norm_bound)}.csv")

    @staticmethod
    def spectrum_key(model: str, norm_bound: float, word_cap: int, length_tolerance: float) -> Dict[str, Any]:
        """Inputs that decide a spectrum; a cache is reused only when all of them match"""
        return {
            "model": model,
            "norm_bound": float(norm_bound),
            "word_cap": int(word_cap),
            "length_tolerance": float(length_tolerance),
            "version": __version__,
        }

    def save_spectrum(self, spec: LengthSpectrum, key: Dict[str, Any]) -> str:
        """Write the cache CSV trace,length,norm,multiplicity,word under a metadata header"""
        path = self.spectrum_cache_path(spec.model, key["norm_bound"])
        rows = ((c.trace, c.length, c.norm, c.multiplicity, c.word) for c in spec.classes)
        meta = {"key": key, "complete": spec.complete, "spectrum_norm_bound": spec.norm_bound,
                "options": spec.options}
        return self._write_csv(path, SPECTRUM_COLUMNS, rows, meta)

    def load_spectrum(self, key: Dict[str, Any]) -> Optional[LengthSpectrum]:
        """Cached spectrum for ``key``, or None when absent or stale"""
        path = self.spectrum_cache_path(key["model"], key["norm_bound"])
        if not os.path.exists(path):
            return None
        try:
            meta, rows = self._read_csv(path)
        except (OSError, ValueError) as e:
            logger.warning(f"Spectrum cache {path} unreadable ({e}); recomputing")
            return None

        if meta.get("key") != key:
            logger.warning(f"Spectrum cache {path} was built for {meta.get('key')}; recomputing")
            return None
        try:
            classes = tuple(
                PrimitiveClass(
                    trace=float(row["trace"]),
                    length=float(row["length"]),
                    norm=float(row["norm"]),
                    multiplicity=int(row["multiplicity"]),
                    word=row["word"] or None,
                )
                for row in rows
            )
            spec = LengthSpectrum(
                classes=classes,
                norm_bound=float(meta["spectrum_norm_bound"]),
                model=key["model"],
                complete=bool(meta["complete"]),
                options=meta.get("options", {}),
            )
        except (KeyError, ValueError) as e:
            logger.warning(f"Spectrum cache {path} inconsistent ({e}); recomputing")
            return None
        logger.info(f"Reusing spectrum cache {path} ({spec.class_count} classes)")
        return spec

    @staticmethod
    def _read_csv(path: str) -> Tuple[Dict[str, Any], List[Dict[str, str]]]:
        meta: Dict[str, Any] = {}
        body: List[str] = []
        with open(path, "r", encoding="utf-8", newline="") as handle:
            for line in handle:
                if line.startswith("# "):
                    key, _, value = line[2:].rstrip("\n").partition(" ")
                    if key not in ("geodesic_lab", "config"):
                        meta[key] = json.loads(value)
                else:
                    body.append(line)
        return meta, list(csv.DictReader(body))

    # Reports

    def write_zeros(self, zeros: ZeroSet, weyl: Optional[Dict[str, Any]] = None,
                    name: str = "zeros.csv") -> str:
        meta = {
            "source": zeros.source,
            "area": zeros.area,
            "coverage": zeros.coverage,
            "trivial": zeros.trivial,
            "real_zeros": [list(z) for z in zeros.real_zeros],
            "half_multiplicity": zeros.half_multiplicity,
        }
        if weyl is not None:
            meta["weyl"] = weyl
        rows = ((float(g), int(m)) for g, m in zip(zeros.gammas, zeros.multiplicities))
        return self._write_csv(self.report_path(name), ZERO_COLUMNS, rows, meta)

    def write_profile(self, profile: SummatoryProfile) -> str:
        name = f"profile_{profile.provenance.get('model', 'spectrum')}.csv"
        meta = {"provenance": profile.provenance, "x_max": profile.x_max}
        return self._write_csv(self.report_path(name), PROFILE_COLUMNS, profile.rows(), meta)

    def write_compare(self, model: str, rows: Sequence[Sequence[Any]], summary: Dict[str, Any]) -> Tuple[str, str]:
        csv_path = self._write_csv(self.report_path(f"compare_{model}.csv"), COMPARE_COLUMNS, rows)
        json_path = self._write_json(self.report_path(f"compare_{model}.json"), summary)
        return csv_path, json_path

    def write_scan(self, result: EFGHResult, check: Optional[MeasureBoundCheck]) -> List[str]:
        """One JSON per (n, kind), plus the per-octave aggregate CSV and a summary JSON"""
        paths = []
        for report in result.reports():
            path = self.report_path(f"scan_n{report.n}_{report.kind}.json")
            paths.append(self._write_json(path, {"report": report.to_json_dict()}))

        rows = [(o.n, o.E.log_measure, o.F.log_measure, o.G.log_measure, o.measure_H, o.bound_envelope)
                for o in result.octaves]
        paths.append(self._write_csv(self.report_path("scan_summary.csv"), SCAN_COLUMNS, rows))

        summary = {
            "params": result.params.model_dump(mode="json"),
            "partial_E": list(result.partial_E),
            "partial_F": list(result.partial_F),
            "partial_G": list(result.partial_G),
            "comparison": {k: list(v) for k, v in result.comparison.items()},
            "H_intervals": {str(o.n): [list(iv) for iv in o.H_intervals] for o in result.octaves},
            "measure_bound": check.model_dump(mode="json") if check is not None else None,
        }
        paths.append(self._write_json(self.report_path("scan_summary.json"), summary))
        return paths

    def write_thm2(self, model: str, rows: Sequence[Sequence[Any]], summary: Dict[str, Any]) -> Tuple[str, str]:
        csv_path = self._write_csv(self.report_path(f"thm2_{model}.csv"), THM2_COLUMNS, rows)
        json_path = self._write_json(self.report_path(f"thm2_{model}.json"), summary)
        return csv_path, json_path

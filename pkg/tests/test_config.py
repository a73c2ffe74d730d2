import json
import math

import pytest
from pydantic import ValidationError

from geodesic_lab import __version__
from geodesic_lab.config import RunConfig, load_run_config
from geodesic_lab.errors import ConfigError
from geodesic_lab.pipeline.util import Accumulator, get_word_cap, parse_grid, parse_n_range


def test_defaults(data_dir):
    config = load_run_config()
    assert config.model == "bolza"
    assert config.genus == 2
    assert config.surface_area == pytest.approx(4 * math.pi)
    assert config.workers == 1
    assert config.n_bounds == (4, 10)
    assert len(config.grid_points) == 50
    assert config.output_dir == str(data_dir / "reports")


def test_modular_has_no_genus():
    config = RunConfig(model="modular")
    assert config.genus is None
    assert config.surface_area == pytest.approx(math.pi / 3)
    assert RunConfig(model="modular", area=2.0).surface_area == 2.0


def test_serialized_config_drops_execution_fields():
    a = RunConfig(workers=1, output_dir="/tmp/a")
    b = RunConfig(workers=8, output_dir="/tmp/b")
    assert a.to_json() == b.to_json()
    document = json.loads(a.to_json())
    assert document["version"] == __version__
    assert "workers" not in document["config"]
    assert list(document["config"]) == sorted(document["config"])


def test_overrides_beat_the_config_file(data_dir):
    path = data_dir / "lab.json"
    path.write_text(json.dumps({"model": "modular", "seed": 3}))
    config = load_run_config({"seed": 9, "model": None}, str(path))
    assert config.model == "modular"
    assert config.seed == 9


def test_worker_count_from_environment(data_dir, monkeypatch):
    monkeypatch.setenv("LAB_WORKERS", "4")
    assert load_run_config().workers == 4
    assert load_run_config({"workers": 2}).workers == 2
    monkeypatch.setenv("LAB_WORKERS", "many")
    with pytest.raises(ConfigError):
        load_run_config()


def test_word_cap_from_environment(data_dir, monkeypatch):
    assert get_word_cap("modular") == 40
    monkeypatch.setenv("LAB_WORD_CAP_BOLZA", "12")
    assert get_word_cap("bolza") == 12


@pytest.mark.parametrize("kwargs", [
    dict(norm_bound=1.0),
    dict(alpha=1.0, beta=5.0),
    dict(epsilon=0.25),
    dict(eigenvalue_file="x.txt", synthetic_T_max=20.0),
    dict(grid="0.5:100:10log"),
    dict(grid="10:2e3:10log"),
    dict(grid="ten:100:3"),
    dict(n_range="1:4"),
    dict(density=10),
    dict(unknown=1),
])
def test_invalid_configs(kwargs):
    with pytest.raises(ValidationError):
        RunConfig(**kwargs)


def test_missing_config_file():
    with pytest.raises(ConfigError, match="--config"):
        load_run_config(config_file="/nonexistent/lab.json")


def test_parse_grid():
    assert parse_grid("1:5:5") == [1.0, 2.0, 3.0, 4.0, 5.0]
    points = parse_grid("10:1e3:3log")
    assert points[0] == 10.0 and points[-1] == 1000.0
    assert points[1] == pytest.approx(100.0)
    assert parse_grid("7:7:1") == [7.0]
    with pytest.raises(ConfigError):
        parse_grid("5:1:3")
    with pytest.raises(ConfigError):
        parse_grid("1:5:2:log")


def test_parse_n_range():
    assert parse_n_range("4:10") == (4, 10)
    assert parse_n_range("5") == (5, 5)
    with pytest.raises(ConfigError):
        parse_n_range("6:3")


def test_accumulator_matches_fsum():
    values = [1e16, 1.0, -1e16, 3.0, 1e-3] * 50
    total = Accumulator()
    for value in values:
        total.add(value)
    assert float(total) == pytest.approx(math.fsum(values), rel=1e-14)
    assert Accumulator(2.5).value == 2.5

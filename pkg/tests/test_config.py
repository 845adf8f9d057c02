from pathlib import Path

import pytest

from src.config import STAGE_ORDER, build_config, load_config, parse_config_text
from src.errors import ConfigError
from src.models import FluxKind, PotentialFamily

CONFIGS = Path(__file__).parent.parent / "configs"
ENV_KEYS = ["LMA_GRID", "LMA_SEED", "LMA_THREADS", "LMA_OUT", "LOG_LEVEL"]


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)


def test_parse_flat_file():
    values = parse_config_text("""
        # comment line
        potential = skew   # trailing comment
        eps = 0.25
        heights = 0.02, 0.04 0.08
    """)
    assert values == {"potential": "skew", "eps": "0.25", "heights": ["0.02", "0.04", "0.08"]}
    cfg = build_config(values)
    assert cfg.potential == PotentialFamily.SKEW
    assert cfg.eps == 0.25
    assert cfg.heights == [0.02, 0.04, 0.08]


@pytest.mark.parametrize("text,fragment", [
    ("grid 65", "expected 'key = value'"),
    ("colour = red", "unknown key"),
    ("grid = 65\ngrid = 33", "duplicate key"),
])
def test_parse_rejects(text, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text, "bad.cfg")
    assert fragment in str(info.value)
    assert str(info.value).startswith("bad.cfg:")


@pytest.mark.parametrize("values", [
    {"lambda_lo": 2.0, "lambda_hi": 1.0},
    {"potential": "gridtxt"},
    {"potential": "gridtxt", "potential_path": "missing.gridtxt", "lambda_lo": 1.0, "lambda_hi": 1.0},
    {"stages": ["validate", "plot"]},
    {"eps_ladder": [0.5, 5.0]},
    {"heights": [0.1, -0.1]},
    {"q": 2.0},
    {"grid": 8},
    {"potential": "banana"},
])
def test_invalid_configs(values):
    with pytest.raises(ConfigError):
        build_config(values)


def test_stages_follow_pipeline_order():
    cfg = build_config({"stages": ["regularity", "validate", "solve"]})
    assert cfg.stages == ["validate", "solve", "regularity"]
    assert build_config({}).stages == STAGE_ORDER


def test_environment_defaults(monkeypatch):
    monkeypatch.setenv("LMA_GRID", "33")
    monkeypatch.setenv("LMA_SEED", "7")
    cfg = load_config()
    assert cfg.grid == 33
    assert cfg.seed == 7


def test_file_and_overrides_layer_over_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("LMA_GRID", "33")
    path = tmp_path / "run.cfg"
    path.write_text("grid = 97\nflux = constant\nflux_x = 0.5\n")
    cfg = load_config(str(path))
    assert cfg.grid == 97
    assert cfg.flux == FluxKind.CONSTANT
    cfg = load_config(str(path), {"grid": 129, "seed": None})
    assert cfg.grid == 129
    assert cfg.seed == 0


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.cfg"))


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
def test_shipped_configs_load(name):
    cfg = load_config(str(CONFIGS / name))
    assert cfg.stages
    assert cfg.out.startswith("out/")

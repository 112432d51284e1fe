import numpy as np
import pytest

from ncdoa.config import ConfigError, ScenarioConfig, load_config, load_preset, parse_config, preset_names
from ncdoa.covio import format_covariances, load_covariances, parse_covariances, save_covariances
from ncdoa.geometry import benchmark_array
from ncdoa.signals import (CovarianceSet, NoiseModel, SourceModel, generate_snapshots,
                           sample_covariances)


def test_covariance_round_trip_bit_exact(tmp_path):
    arr = benchmark_array([2.6, 0.0])
    cs = sample_covariances(generate_snapshots(arr, SourceModel([0.1, -0.4], [1, 2]),
                                               NoiseModel(0.37), 13, 5))
    path = tmp_path / "c.txt"
    save_covariances(path, cs, arr)
    back, geom = load_covariances(path)
    assert back.n_snapshots == 13 and back.kind == "sample"
    for a, b in zip(cs.matrices, back.matrices):
        assert np.array_equal(a, b)
    for s, t in zip(arr.subarrays, geom.subarrays):
        assert np.array_equal(s.relative_positions, t.relative_positions)
    assert format_covariances(back, geom) == path.read_text()


def test_covariance_file_without_positions():
    text = "ncdoa-covariance 1\nkind true\nK 1\nN 0\nM 1\n2.5 0.0  # comment\n"
    cs, geom = parse_covariances(text)
    assert geom is None and cs.n_snapshots is None and cs.matrices[0][0, 0] == 2.5


@pytest.mark.parametrize("text", [
    "",
    "ncdoa-covariance 2\n",
    "ncdoa-covariance 1\nkind sample\nK 1\nN 5\nM 2\n1 0 0 0\n",
    "ncdoa-covariance 1\nkind sample\nK 1\nN 5\nM 1\n1 0\nextra\n",
    "ncdoa-covariance 1\nkind sample\nK 1\nN 5\nM 1\n1 0 2\n",
])
def test_malformed_covariance_files(text):
    with pytest.raises(ValueError):
        parse_covariances(text)


def test_presets_load():
    names = preset_names()
    assert {"fig2_s1", "fig2_s2", "fig4", "fig5", "fig6"} <= set(names)
    for n in names:
        cfg = load_preset(n)
        assert cfg.array().n_subarrays == 12


def test_sweep_points():
    cfg = load_preset("fig6")
    assert cfg.point(2)["doas_deg"] == [15.0, -15.0, 30.0]
    cfg = load_preset("fig5")
    pts = [cfg.point(i) for i in range(len(cfg.sweep_values()))]
    assert all(p["snr_db"] == -2.0 for p in pts)


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"geometry": "ring"},
    {"estimators": ["mle"]},
    {"sweep": "snr", "snapshots": [10, 20]},
    {"doas_deg": [95.0]},
    {"correlation": 0.5, "doas_deg": [1.0, 2.0, 3.0]},
    {"correlation": 1.5},
    {"trials": 0},
    {"geometry": "custom"},
    {"sweep": "sources"},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("snr_db = [1,\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    good = tmp_path / "custom.toml"
    good.write_text('geometry = "custom"\noffsets = [[[0, 0], [1, 0]], [[0, 0], [0, 2]]]\n'
                    "doas_deg = [10.0]\nsnr_db = 5\n")
    cfg = load_config(good)
    assert cfg.name == "custom" and cfg.snr_db == [5] and cfg.array().sizes == [2, 2]
    assert isinstance(cfg, ScenarioConfig)

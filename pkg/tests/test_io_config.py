import numpy.testing as npt
import pytest

from rpia.config import (
    ExperimentConfig,
    SweepGrid,
    config_from_mapping,
    load_config,
)
from rpia.datasets import boy_surface, rose_curve
from rpia.errors import IncompleteGrid, InvalidConfig, ParseError
from rpia.pointsio import load_grid, load_points, save_grid, save_points


class TestPointsRoundTrip:
    def test_curve_round_trip_is_bit_exact(self, tmp_path):
        points = rose_curve(100).points
        path = tmp_path / "curve.csv"
        save_points(path, points)
        npt.assert_array_equal(load_points(path), points)

    def test_parse_error_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n1.0,2.0\n3.0,oops\n")
        with pytest.raises(ParseError, match="line 3"):
            load_points(path)

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n1.0,2.0,3.0\n")
        with pytest.raises(ParseError, match="line 2"):
            load_points(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1.0,2.0\n")
        with pytest.raises(ParseError, match="line 1"):
            load_points(path)

    def test_grid_round_trip_is_bit_exact(self, tmp_path):
        grid = boy_surface(6, 5).grid
        path = tmp_path / "grid.csv"
        save_grid(path, grid)
        npt.assert_array_equal(load_grid(path), grid)

    def test_incomplete_grid(self, tmp_path):
        grid = boy_surface(3, 3).grid
        path = tmp_path / "grid.csv"
        save_grid(path, grid)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")  # drop one cell
        with pytest.raises(IncompleteGrid):
            load_grid(path)

    def test_duplicate_cell(self, tmp_path):
        path = tmp_path / "grid.csv"
        path.write_text(
            "row,col,x,y,z\n0,0,1,1,1\n0,0,2,2,2\n0,1,1,1,1\n1,0,1,1,1\n1,1,1,1,1\n"
        )
        with pytest.raises(IncompleteGrid, match="duplicate"):
            load_grid(path)


class TestConfig:
    def test_defaults_and_seed_fallbacks(self):
        curve_cfg = ExperimentConfig()
        assert curve_cfg.seeds == tuple(range(10))
        surface_cfg = ExperimentConfig(problem="surface", generator="boy", p=8, n_ctrl_v=4)
        assert surface_cfg.seeds == tuple(range(3))

    def test_mapping_aliases_and_lambda_parsing(self):
        cfg = config_from_mapping(
            {"lambda": "estimate", "m": 50, "n_ctrl": 10, "seeds": [4, 2]}
        )
        assert cfg.lam == "estimate"
        assert cfg.seeds == (4, 2)
        cfg = config_from_mapping({"lambda": 1.5e-6})
        assert cfg.lam == 1.5e-6
        cfg = config_from_mapping({"lambda": {"sweep": {"lo": 1e-9, "hi": 1e-3, "points": 25}}})
        assert isinstance(cfg.lam, SweepGrid)
        assert cfg.lam.points == 25

    def test_rejects_unknown_keys_and_bad_values(self):
        with pytest.raises(InvalidConfig):
            config_from_mapping({"no_such_key": 1})
        with pytest.raises(InvalidConfig):
            config_from_mapping({"lambda": "noise"})
        with pytest.raises(InvalidConfig):
            config_from_mapping({"lambda": -0.5})
        with pytest.raises(InvalidConfig):
            config_from_mapping({"seeds": []})
        with pytest.raises(InvalidConfig):
            config_from_mapping({"problem": "volume"})
        with pytest.raises(InvalidConfig):
            config_from_mapping({"generator": "file"})  # needs input_path
        with pytest.raises(InvalidConfig):
            config_from_mapping({"generator": "boy", "problem": "curve"})
        with pytest.raises(InvalidConfig):
            config_from_mapping({"generator": "rose", "problem": "surface",
                                 "p": 10, "n_ctrl_v": 4})
        with pytest.raises(InvalidConfig):
            config_from_mapping({"lambda": {"sweep": {"lo": 1e-9, "hi": 1e-3, "points": 1}}})

    def test_sweep_grid_values(self):
        grid = SweepGrid(1e-9, 1e-3, 25)
        values = grid.values()
        assert values.size == 25
        npt.assert_allclose(values[0], 1e-9)
        npt.assert_allclose(values[-1], 1e-3)
        ratios = values[1:] / values[:-1]
        npt.assert_allclose(ratios, ratios[0])
        degenerate = SweepGrid(1e-6, 1e-6, 1)
        npt.assert_allclose(degenerate.values(), [1e-6])

    def test_yaml_loading(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text(
            "problem: curve\ngenerator: blob\nm: 80\nn_ctrl: 12\nlambda: 1.0e-7\nseeds: [1, 2]\n"
        )
        cfg = load_config(path)
        assert cfg.generator == "blob"
        assert cfg.lam == 1e-7
        assert cfg.seeds == (1, 2)
        bad = tmp_path / "bad.yaml"
        bad.write_text("problem: [unclosed\n")
        with pytest.raises(InvalidConfig):
            load_config(bad)

    def test_overrides(self):
        cfg = ExperimentConfig(m=100, n_ctrl=10)
        updated = cfg.with_overrides(m=200, block_size=None)
        assert updated.m == 200
        assert updated.block_size == cfg.block_size

    def test_shipped_configs_parse(self):
        from pathlib import Path

        config_dir = Path(__file__).resolve().parents[1] / "configs"
        found = sorted(config_dir.glob("*.yaml"))
        assert found
        for path in found:
            load_config(path)

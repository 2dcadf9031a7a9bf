"""
Tests for the synthetic world generator.
"""

import json

import numpy as np
import pytest

from fixtures_world import small_config, small_world
from sparse_mfm.domain.errors import ConfigError
from sparse_mfm.domain.panel import load_ff5, load_factor_meta, load_panel, load_security_meta
from sparse_mfm.domain.simulate import SimulationConfig, simulate_world, write_world
from sparse_mfm.domain.taxonomy import FF5_IDS


class TestSimulationConfig:
    """Tests for SimulationConfig validation."""

    def test_defaults_are_valid(self):
        """The default world validates."""
        assert SimulationConfig().validate() == []

    def test_errors_are_collected(self):
        """All problems are reported together."""
        with pytest.raises(ConfigError) as info:
            SimulationConfig(securities=0, noise=0.0, block_corr=1.0)
        message = str(info.value)
        assert "securities" in message and "noise" in message and "block_corr" in message

    def test_sparsity_bounded_by_universe(self):
        """More planted factors than ETFs is invalid."""
        with pytest.raises(ConfigError):
            small_config(sparsity=100)


class TestSimulateWorld:
    """Tests for simulate_world."""

    def test_same_seed_same_world(self):
        """The seed fully determines the world."""
        a, b = small_world(), small_world()
        assert a.securities.frame.equals(b.securities.frame)
        assert a.ground_truth == b.ground_truth
        assert not small_world(seed=8).securities.frame.equals(a.securities.frame)

    def test_shapes_and_metadata(self):
        """Panels, tickers and metadata line up with the config."""
        world = small_world()
        config = world.config
        assert world.securities.frame.shape == (config.weeks, config.securities)
        assert world.etfs.frame.shape == (config.weeks, config.categories * config.factors_per_category)
        assert world.ff5.names == list(FF5_IDS)
        assert set(world.factor_meta) == set(world.etfs.names)
        assert set(world.security_meta) == set(world.securities.names)
        assert all(not m.validate() for m in world.factor_meta.values())

    def test_planted_support(self):
        """Every security has exactly ``sparsity`` planted ETF loadings."""
        world = small_world()
        assert world.mean_support() == world.config.sparsity
        assert all(set(v) <= set(world.etfs.names) for v in world.planted.values())

    def test_null_world_plants_nothing(self):
        """A null world has no ETF exposures."""
        assert small_world(null_world=True).mean_support() == 0.0

    def test_noise_level(self):
        """Residuals after removing the planted structure have the configured scale."""
        world = simulate_world(SimulationConfig(seed=3, securities=50, weeks=156, categories=4, factors_per_category=4,
                                                blocks=3, sparsity=2, noise=0.02))
        rf = world.rf.series
        etf_excess = world.etfs.frame.sub(rf, axis=0)
        residuals = []
        for ticker, truth in world.ground_truth["securities"].items():
            y = world.securities.column(ticker) - rf - truth["alpha"]
            y = y - world.ff5.frame[list(FF5_IDS)].to_numpy() @ np.array([truth["ff5_betas"][f] for f in FF5_IDS])
            for etf, beta in truth["etf_betas"].items():
                y = y - beta * etf_excess[etf]
            residuals.append(y.to_numpy())
        sd = float(np.std(np.concatenate(residuals), ddof=1))
        assert sd == pytest.approx(0.02, rel=0.05)

    def test_within_block_correlation(self):
        """ETFs sharing a block are highly correlated once the market is removed."""
        world = small_world()
        blocks = world.ground_truth["blocks"]
        names = sorted(blocks)
        market = world.ff5.column("mkt_rf").to_numpy()
        same = [n for n in names if blocks[n] == blocks[names[0]]][:2]
        residual = []
        for name in same:
            x = world.etfs.column(name).to_numpy() - world.rf.values
            x = x - market * (x @ market) / (market @ market)
            residual.append(x)
        assert abs(np.corrcoef(residual[0], residual[1])[0, 1]) > 0.8

    def test_missing_fraction(self):
        """missing_frac blanks roughly that share of security returns."""
        world = small_world(missing_frac=0.1)
        share = float(world.securities.frame.isna().to_numpy().mean())
        assert 0.06 < share < 0.14


class TestWriteWorld:
    """Tests for write_world."""

    def test_files_load_back(self, tmp_path):
        """Written files are valid loader inputs."""
        world = small_world()
        paths = write_world(world, tmp_path)
        securities = load_panel(paths["securities"])
        assert securities.names == world.securities.names
        assert securities.values == pytest.approx(world.securities.values, abs=1e-9)
        ff5, rf = load_ff5(paths["ff5"])
        assert ff5.values == pytest.approx(world.ff5.values, abs=1e-9)
        assert rf.values == pytest.approx(world.rf.values, abs=1e-9)
        assert load_security_meta(paths["security_meta"]).keys() == world.security_meta.keys()
        assert len(load_factor_meta(paths["factor_meta"])) == len(world.factor_meta)
        truth = json.loads(paths["ground_truth"].read_text())
        assert truth["config"]["seed"] == world.config.seed

    def test_output_is_byte_identical(self, tmp_path):
        """Two writes of the same seed produce identical files."""
        first = write_world(small_world(), tmp_path / "a")
        second = write_world(small_world(), tmp_path / "b")
        for name, path in first.items():
            assert path.read_bytes() == second[name].read_bytes()

"""
End-to-end tests of the command-line front end on a small simulated dataset.
"""

import json

import pandas as pd
import pytest

from sparse_mfm.cli.main import EXIT_OK, EXIT_USAGE, build_parser, main

SIM_ARGS = [
    "--seed", "5",
    "--sim_securities", "12",
    "--sim_weeks", "120",
    "--sim_categories", "4",
    "--sim_factors_per_category", "4",
    "--sim_blocks", "3",
    "--sim_sparsity", "2",
    "--sim_signal", "0.8",
    "--sim_noise", "0.01",
]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["simulate", "--output_dir", str(data), *SIM_ARGS]) == EXIT_OK
    config = root / "run.conf"
    config.write_text(
        "\n".join(
            f"{key} = {data / f'{key}.csv'}"
            for key in ("securities", "etfs", "ff5", "risk_free", "security_meta", "factor_meta")
        )
        + "\nwindow_weeks = 52\nmin_window_weeks = 52\nbacktest_weeks = 4\nbacktest_quantiles = 0.4,0.1\n"
    )
    return root, config


def run(command, config, out, *extra):
    return main([command, "--config", str(config), "--output-dir", str(out), *extra])


class TestSimulate:
    """Tests for the simulate command."""

    def test_writes_inputs(self, dataset):
        """The dataset has every input file and the ground truth."""
        root, _ = dataset
        names = {p.name for p in (root / "data").iterdir()}
        assert {"securities.csv", "etfs.csv", "ff5.csv", "risk_free.csv",
                "security_meta.csv", "factor_meta.csv", "ground_truth.json"} <= names


class TestPipelineCommands:
    """reduce, fit, test and backtest on the simulated dataset."""

    def test_reduce(self, dataset, tmp_path):
        """The reduced universe and dendrograms are written."""
        _, config = dataset
        assert run("reduce", config, tmp_path) == EXIT_OK
        payload = json.loads((tmp_path / "reduced_universe.json").read_text())
        assert payload["reduced"]["p2"] == len(payload["reduced"]["final_reps"]) > 0
        assert payload["config"]["window_weeks"] == 52
        assert (tmp_path / "dendrograms.json").exists()

    def test_fit(self, dataset, tmp_path):
        """Models and significance tables are written; G columns sum to 100%."""
        _, config = dataset
        assert run("fit", config, tmp_path) == EXIT_OK
        models = json.loads((tmp_path / "models.json").read_text())
        assert len(models["models"]) + len(models["excluded"]) == 12
        percent = pd.read_csv(tmp_path / "significance_percent.csv", index_col=0)
        significance = json.loads((tmp_path / "significance.json").read_text())
        titles = significance["group_titles"]
        assert list(percent.columns) == [f"{code} {titles[code]}" for code in significance["security_classes"]]
        for code, column in zip(significance["security_classes"], percent.columns):
            if code not in significance["empty_columns"]:
                assert percent[column].sum() == pytest.approx(100.0, abs=1e-6)
        assert (tmp_path / "factor_counts.csv").exists()

    def test_fit_is_reproducible(self, dataset, tmp_path):
        """Running fit twice produces byte-identical outputs."""
        _, config = dataset
        assert run("fit", config, tmp_path) == EXIT_OK
        first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
        assert run("fit", config, tmp_path, "--workers", "3") == EXIT_OK
        second = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
        for name in ("factor_counts.csv", "significance_counts.csv", "significance_percent.csv"):
            assert first[name] == second[name]
        assert run("fit", config, tmp_path) == EXIT_OK
        third = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
        assert first == third

    def test_studies(self, dataset, tmp_path):
        """Intercept and F studies are written with percentages summing to 100."""
        _, config = dataset
        assert run("test", config, tmp_path) == EXIT_OK
        table = pd.read_csv(tmp_path / "intercept_study.csv", index_col=0)
        assert list(table.columns) == ["ff5_p", "ff5_bh_q", "mfm_p", "mfm_bhy_q", "ff5_bhy_q", "mfm_bh_q"]
        assert table.sum().to_numpy() == pytest.approx([100.0] * 6, abs=1e-6)
        f_study = json.loads((tmp_path / "f_study.json").read_text())
        assert "adj_r2" in f_study and f_study["securities"]

    def test_backtest(self, dataset, tmp_path):
        """The ledger covers the requested weeks and the sweep writes one ledger per quantile."""
        _, config = dataset
        assert run("backtest", config, tmp_path) == EXIT_OK
        ledger = pd.read_csv(tmp_path / "ledger.csv")
        summary = json.loads((tmp_path / "backtest_summary.json").read_text())
        assert len(ledger) + len(summary["gaps"]) == 4
        assert ledger["cumulative"].to_numpy() == pytest.approx(ledger["net_change"].cumsum().to_numpy())
        assert (tmp_path / "ledger_q0.4.csv").exists() and (tmp_path / "ledger_q0.1.csv").exists()

    def test_backtest_with_frozen_universe(self, dataset, tmp_path):
        """freeze_universe reuses one universe for every refit."""
        _, config = dataset
        assert run("backtest", config, tmp_path, "--freeze_universe", "true", "--backtest_weeks", "2") == EXIT_OK
        assert json.loads((tmp_path / "backtest_summary.json").read_text())["config"]["freeze_universe"] is True


class TestExitCodes:
    """Usage and configuration errors exit with status 2."""

    def test_missing_metadata_file(self, dataset, tmp_path):
        """A missing input file is a usage error."""
        _, config = dataset
        assert run("fit", config, tmp_path, "--security_meta", str(tmp_path / "missing.csv")) == EXIT_USAGE

    def test_unknown_command(self):
        """argparse failures map to status 2."""
        assert main(["explode"]) == EXIT_USAGE

    def test_invalid_setting(self, dataset, tmp_path):
        """Out-of-range values are configuration errors."""
        _, config = dataset
        assert run("fit", config, tmp_path, "--corr_cap", "3") == EXIT_USAGE

    @pytest.mark.parametrize("freeze", ["false", "true"])
    def test_backtest_start_after_the_data(self, dataset, tmp_path, freeze):
        """A backtest with no out-of-sample weeks is a configuration error, frozen or not."""
        _, config = dataset
        code = run("backtest", config, tmp_path, "--backtest_start", "2030-01-04", "--freeze_universe", freeze)
        assert code == EXIT_USAGE
        assert not (tmp_path / "ledger.csv").exists()

    def test_missing_required_input(self, tmp_path):
        """Commands that read data need the input paths."""
        assert main(["fit", "--output_dir", str(tmp_path)]) == EXIT_USAGE

    def test_dashed_aliases(self):
        """Underscore keys also accept dashed flags."""
        args = build_parser().parse_args(["fit", "--s-max", "4"])
        assert args.s_max == "4"

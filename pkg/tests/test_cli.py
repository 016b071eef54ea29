"""End-to-end runs of the ``quadhedge`` command on small scenarios."""

import json
import math

import pandas as pd
import pytest

from quadhedge.app.cli import EXIT_ALL_CELLS_FAILED, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, main
from quadhedge.app.core.config import get_settings
from quadhedge.app.schemas.ledger import ledger_columns
from quadhedge.app.services import scenario_service

SMALL = {
    "grid.n_steps": "4",
    "simulation.n_paths": "20",
    "pricing.mc_paths": "200",
    "pricing.mc_steps": "4",
}


@pytest.fixture
def workdir(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    for key, value in {
        "QUADHEDGE_WORKERS": "2",
        "QUADHEDGE_PATH_BLOCK": "512",
        "QUADHEDGE_LEDGER_PATH_CAP": "2",
        "QUADHEDGE_LOG_LEVEL": "WARNING",
    }.items():
        monkeypatch.setenv(key, value)
    get_settings.cache_clear()
    yield tmp_path
    get_settings.cache_clear()


def _scenario(directory, entries, name="scenario.env"):
    path = directory / name
    path.write_text("".join(f"{key}={value}\n" for key, value in entries.items()))
    return path


class TestPrice:
    @pytest.mark.parametrize(
        "model, quantities",
        [
            ("binomial", ["value", "delta", "p_up", "risk_neutral_p", "closed_form"]),
            ("diffusion", ["value", "delta", "gamma", "theta"]),
            ("sv", ["value", "dx", "dy", "std_error"]),
            ("vov", ["value", "dx", "dy", "dz", "std_error"]),
            ("jump", ["value", "dx1", "dx2", "displaced", "rn_delta1", "rn_delta2", "std_error"]),
        ],
    )
    def test_every_model(self, workdir, model, quantities):
        config = _scenario(workdir, {"model": model, **SMALL})
        out = workdir / "out"
        assert main(["price", "--config", str(config), "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out / "price.csv")
        assert list(frame.columns) == ["model", "quantity", "value"]
        assert list(frame["quantity"]) == quantities
        assert (frame["model"] == model).all()

    def test_defaults_without_config(self, workdir, capsys):
        assert main(["price", "--out", str(workdir / "out")]) == EXIT_OK
        assert "closed_form" in capsys.readouterr().out

    def test_negative_volatility_names_the_field(self, workdir, capsys):
        config = _scenario(workdir, {"market.volatility": "-0.2"})
        assert main(["price", "--config", str(config)]) == EXIT_INPUT
        assert "market.volatility" in capsys.readouterr().err

    def test_unknown_key(self, workdir, capsys):
        config = _scenario(workdir, {"market.colour": "blue"})
        assert main(["price", "--config", str(config)]) == EXIT_INPUT
        assert "colour" in capsys.readouterr().err

    def test_missing_config_file(self, workdir, capsys):
        assert main(["price", "--config", str(workdir / "absent.env")]) == EXIT_INPUT
        assert "not found" in capsys.readouterr().err

    def test_degenerate_tree_is_a_numerical_failure(self, workdir, capsys):
        config = _scenario(
            workdir, {"market.volatility": "3.0", "market.p_up": "0.5", "grid.n_steps": "1"}
        )
        assert main(["price", "--config", str(config)]) == EXIT_NUMERICAL
        assert "down" in capsys.readouterr().err

    def test_diffusion_zero_payoff_is_a_zero_table(self, workdir):
        config = _scenario(
            workdir,
            {"model": "diffusion", "payoff.kind": "zero", "pricing.n_space": "50", "pricing.n_time": "20"},
        )
        out = workdir / "out"
        assert main(["price", "--config", str(config), "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out / "price.csv")
        assert list(frame["quantity"]) == ["value", "delta", "gamma", "theta"]
        assert (frame["value"] == 0.0).all()

    @pytest.mark.parametrize("error", [ZeroDivisionError("float division by zero"), FloatingPointError("overflow")])
    def test_arithmetic_failure_is_a_numerical_exit(self, workdir, monkeypatch, capsys, error):
        def failing(config, settings=None):
            raise error

        monkeypatch.setattr(scenario_service, "run_price", failing)
        assert main(["price", "--out", str(workdir / "out")]) == EXIT_NUMERICAL
        assert "numerical_error" in capsys.readouterr().err

    def test_bad_model_choice(self, workdir):
        with pytest.raises(SystemExit) as exc:
            main(["price", "--model", "heston"])
        assert exc.value.code == 2


class TestHedge:
    @pytest.mark.parametrize("model", ["binomial", "diffusion", "sv", "vov", "jump"])
    def test_writes_ledger_and_summary(self, workdir, model):
        config = _scenario(workdir, {"model": model, **SMALL})
        out = workdir / "out"
        assert main(["hedge", "--config", str(config), "--out", str(out)]) == EXIT_OK
        ledger = pd.read_csv(out / "ledger.csv")
        assert list(ledger.columns) == ledger_columns(model)
        assert len(ledger) == 2 * 4
        summary = json.loads((out / "summary.json").read_text())
        assert summary["model"] == model
        assert summary["n_paths"] == 20
        assert len(summary["steps"]["std"]) == 4

    def test_rerun_is_byte_identical(self, workdir):
        config = _scenario(workdir, {"grid.n_steps": "10", "simulation.n_paths": "1500"})
        first, second = workdir / "a", workdir / "b"
        assert main(["hedge", "--config", str(config), "--out", str(first), "--seed", "5"]) == EXIT_OK
        assert main(["hedge", "--config", str(config), "--out", str(second), "--seed", "5", "--workers", "1"]) == EXIT_OK
        assert (first / "summary.json").read_bytes() == (second / "summary.json").read_bytes()
        assert (first / "ledger.csv").read_bytes() == (second / "ledger.csv").read_bytes()

    def test_seed_flag_changes_draws(self, workdir):
        config = _scenario(workdir, {"grid.n_steps": "10", "simulation.n_paths": "100"})
        assert main(["hedge", "--config", str(config), "--out", str(workdir / "a"), "--seed", "1"]) == EXIT_OK
        assert main(["hedge", "--config", str(config), "--out", str(workdir / "b"), "--seed", "2"]) == EXIT_OK
        a = json.loads((workdir / "a" / "summary.json").read_text())
        b = json.loads((workdir / "b" / "summary.json").read_text())
        assert (a["seed"], b["seed"]) == (1, 2)
        assert a["terminal"] != b["terminal"]


class TestCalibrate:
    def test_single_row_series(self, workdir, capsys):
        prices = workdir / "prices.csv"
        prices.write_text("date,close\n2020-01-02,100\n")
        assert main(["calibrate", "--prices", str(prices)]) == EXIT_INPUT
        assert "insufficient observations" in capsys.readouterr().err

    def test_needs_a_price_series(self, workdir, capsys):
        assert main(["calibrate"]) == EXIT_INPUT
        assert "calibration.prices" in capsys.readouterr().err

    def test_writes_calibration(self, workdir, gbm_series):
        gbm_series.to_frame().to_csv(workdir / "prices.csv", index=False)
        config = _scenario(
            workdir,
            {
                "calibration.prices": "prices.csv",
                "calibration.maturity_days": "10",
                "calibration.max_iter": "3",
            },
        )
        out = workdir / "out"
        assert main(["calibrate", "--config", str(config), "--out", str(out), "--paths", "300"]) == EXIT_OK
        result = json.loads((out / "calibration.json").read_text())
        assert 0.0 <= result["gamma"] <= 10.0
        assert result["observed_source"] == "slippage"
        assert len(result["taus"]) == 10


class TestSurface:
    def test_psi_surface_only(self, workdir):
        out = workdir / "out"
        assert main(["surface", "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out / "psi_surface.csv")
        assert list(frame.columns) == ["gamma", "tau_days", "value"]
        assert len(frame) == 10 * 8
        row = frame[(frame["gamma"] == 1.0) & (frame["tau_days"] == 160)]
        assert float(row["value"].iloc[0]) == pytest.approx(1.0 - math.exp(-1.0), rel=1e-10)
        assert not (out / "gamma_surface.csv").exists()

    def test_every_gamma_cell_failing(self, workdir):
        prices = workdir / "prices.csv"
        prices.write_text("date,close\n2020-01-02,100\n2020-01-03,101\n")
        config = _scenario(workdir, {"surface.moneyness": "0.9,1.0", "surface.maturity_days": "30"})
        out = workdir / "out"
        code = main(["surface", "--config", str(config), "--prices", str(prices), "--out", str(out)])
        assert code == EXIT_ALL_CELLS_FAILED
        frame = pd.read_csv(out / "gamma_surface.csv")
        assert list(frame.columns) == ["moneyness", "maturity_days", "value"]
        assert frame["value"].isna().all()
        assert (out / "psi_surface.csv").exists()

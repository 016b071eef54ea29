import math

import numpy as np
import pytest
from pydantic import ValidationError

from quadhedge.app.core.errors import ConfigError, DomainError
from quadhedge.app.schemas.diffusion import DiffusionModel
from quadhedge.app.schemas.ledger import ledger_columns
from quadhedge.app.schemas.market import PayoffSpec, TimeGrid
from quadhedge.app.schemas.risk import RiskAversionSchedule
from quadhedge.app.services.diffusion import (
    bs_price,
    bs_price_schedule,
    closed_form_surface,
    delta_optimal_diffusion,
    pde_price_grid,
    simulate_hedge_diffusion,
    unhedged_coefficients,
)
from quadhedge.app.services.risk_aversion import psi_eval


@pytest.fixture
def model():
    return DiffusionModel(drift=0.08, volatility=0.2, rate=0.01, spot=100.0)


class TestClosedForm:
    def test_textbook_values(self):
        call = bs_price(100.0, 100.0, 0.2, 0.05, 1.0, "call")
        put = bs_price(100.0, 100.0, 0.2, 0.05, 1.0, "put")
        assert call.value == pytest.approx(10.4506, abs=1e-4)
        assert put.value == pytest.approx(5.5735, abs=1e-4)

    def test_put_call_parity(self):
        spots = np.array([70.0, 95.0, 100.0, 130.0])
        call = bs_price(spots, 100.0, 0.25, 0.03, 0.7, "call")
        put = bs_price(spots, 100.0, 0.25, 0.03, 0.7, "put")
        np.testing.assert_allclose(call.value - put.value, spots - 100.0 * math.exp(-0.03 * 0.7), rtol=1e-12)
        np.testing.assert_allclose(call.delta - put.delta, 1.0, rtol=1e-12)

    def test_theta_satisfies_pricing_equation(self):
        g = bs_price(105.0, 100.0, 0.2, 0.01, 0.5)
        residual = g.theta + 0.01 * 105.0 * g.delta + 0.5 * 0.04 * 105.0**2 * g.gamma - 0.01 * g.value
        assert residual == pytest.approx(0.0, abs=1e-12)

    def test_expiry_is_intrinsic(self):
        g = bs_price(np.array([90.0, 110.0]), 100.0, 0.2, 0.01, 0.0, "call")
        np.testing.assert_array_equal(g.value, [0.0, 10.0])
        np.testing.assert_array_equal(g.delta, [0.0, 1.0])

    def test_rejects_exotic_kind(self):
        with pytest.raises(DomainError, match="call and put"):
            bs_price(100.0, 100.0, 0.2, 0.01, 1.0, "digital")

    def test_schedule_uses_average_variance(self):
        model = DiffusionModel(drift=0.08, volatility="0:0.2;0.5:0.3", rate=0.01, spot=100.0)
        g = bs_price_schedule(model, PayoffSpec.call(100.0), 100.0, 0.0, 1.0)
        flat = bs_price(100.0, 100.0, math.sqrt(0.065), 0.01, 1.0)
        assert g.value == pytest.approx(flat.value, rel=1e-12)

    def test_surface_needs_vanilla(self, model):
        with pytest.raises(DomainError):
            closed_form_surface(model, PayoffSpec.zero(), 1.0)

    def test_model_needs_drift_above_rate(self):
        with pytest.raises(ValidationError, match="drift > rate"):
            DiffusionModel(drift=0.01, volatility=0.2, rate=0.02, spot=100.0)


class TestFiniteDifferences:
    def test_matches_closed_form(self, model, atm_call):
        grid_surface = pde_price_grid(model, atm_call, 1.0, n_space=400, n_time=400)
        exact = bs_price(100.0, 100.0, 0.2, 0.01, 1.0)
        point = grid_surface.evaluate(np.array([100.0]), 0.0)
        assert float(point.value[0]) == pytest.approx(exact.value, rel=1e-3)
        assert float(point.dx[0]) == pytest.approx(exact.delta, abs=5e-3)

    def test_put_with_time_varying_volatility(self):
        model = DiffusionModel(drift=0.08, volatility="0:0.2;0.5:0.3", rate=0.01, spot=100.0)
        put = PayoffSpec.put(100.0)
        surface = pde_price_grid(model, put, 1.0, n_space=400, n_time=400)
        exact = bs_price_schedule(model, put, 100.0, 0.0, 1.0)
        assert float(surface.evaluate(np.array([100.0]), 0.0).value[0]) == pytest.approx(exact.value, rel=2e-3)

    def test_terminal_row_is_payoff(self, model, atm_call):
        surface = pde_price_grid(model, atm_call, 1.0, n_space=100, n_time=50)
        np.testing.assert_allclose(surface.values[-1], np.maximum(surface.x_grid - 100.0, 0.0))
        assert 100.0 in surface.x_grid

    @pytest.mark.parametrize(
        "kwargs, field",
        [
            ({"n_space": 2}, "space grid"),
            ({"x_max_multiple": 4.0}, "x_max"),
            ({"n_time": 0}, "time grid"),
        ],
    )
    def test_grid_errors(self, model, atm_call, kwargs, field):
        with pytest.raises(ConfigError, match=field):
            pde_price_grid(model, atm_call, 1.0, **kwargs)

    def test_non_uniform_grid(self, model, atm_call):
        with pytest.raises(ConfigError, match="uniform"):
            pde_price_grid(model, atm_call, 1.0, x_grid=np.array([0.0, 1.0, 3.0, 4.0, 10.0]))

    def test_evaluate_outside_horizon(self, model, atm_call):
        surface = pde_price_grid(model, atm_call, 1.0, n_space=50, n_time=20)
        with pytest.raises(DomainError):
            surface.evaluate(np.array([100.0]), 1.5)


class TestOptimalDelta:
    def test_tilt_over_risk_neutral_delta(self, model, atm_call):
        surface = closed_form_surface(model, atm_call, 1.0)
        schedule = RiskAversionSchedule.exponential(1.0, 1.0)
        spots = np.array([80.0, 100.0, 120.0])
        for t in (0.0, 0.3, 0.9):
            delta = delta_optimal_diffusion(surface, model, schedule, spots, t)
            rn = bs_price(spots, 100.0, 0.2, 0.01, 1.0 - t).delta
            np.testing.assert_allclose(delta - rn, psi_eval(schedule, 1.0 - t), rtol=0, atol=1e-12)

    def test_zero_schedule_is_risk_neutral(self, model, atm_call):
        surface = closed_form_surface(model, atm_call, 1.0)
        delta = delta_optimal_diffusion(surface, model, RiskAversionSchedule.zero(1.0), 100.0, 0.5)
        assert delta == pytest.approx(bs_price(100.0, 100.0, 0.2, 0.01, 0.5).delta, rel=1e-14)

    def test_time_outside_maturity(self, model, atm_call):
        surface = closed_form_surface(model, atm_call, 1.0)
        with pytest.raises(DomainError):
            delta_optimal_diffusion(surface, model, RiskAversionSchedule.zero(1.0), 100.0, 1.2)

    def test_schedule_shorter_than_horizon(self, model, atm_call):
        surface = closed_form_surface(model, atm_call, 1.0)
        schedule = RiskAversionSchedule.exponential(1.0, 0.5)
        with pytest.raises(DomainError, match="shorter") as info:
            delta_optimal_diffusion(surface, model, schedule, 100.0, 0.0)
        assert info.value.field == "schedule"

    def test_unhedged_coefficients(self, model):
        schedule = RiskAversionSchedule.exponential(1.0, 1.0)
        drift, diffusion = unhedged_coefficients(model, schedule, 100.0, 0.25, 1.0)
        psi = psi_eval(schedule, 0.75)
        assert drift == pytest.approx(psi * 100.0 * 0.07)
        assert diffusion == pytest.approx(psi * 100.0 * 0.2)


class TestHedgeSimulation:
    def test_horizon_mismatch(self, model, atm_call, settings):
        surface = closed_form_surface(model, atm_call, 1.0)
        with pytest.raises(ConfigError, match="horizon"):
            simulate_hedge_diffusion(
                model, surface, RiskAversionSchedule.zero(0.5), TimeGrid(n_steps=10, horizon=0.5), 10, 1, settings
            )

    def test_residual_mean_follows_drift_term(self, model, atm_call, year_grid, settings):
        surface = closed_form_surface(model, atm_call, 1.0)
        run = simulate_hedge_diffusion(
            model, surface, RiskAversionSchedule.exponential(1.0, 1.0), year_grid, 4000, 5, settings
        )
        assert run.summary.within_3se_mean >= 0.9
        assert run.summary.premium == pytest.approx(bs_price(100.0, 100.0, 0.2, 0.01, 1.0).value)

    def test_risk_neutral_replication_improves_with_steps(self, model, atm_call, settings):
        surface = closed_form_surface(model, atm_call, 1.0)
        schedule = RiskAversionSchedule.zero(1.0)
        coarse = simulate_hedge_diffusion(model, surface, schedule, TimeGrid(n_steps=50, horizon=1.0), 2000, 8, settings)
        fine = simulate_hedge_diffusion(model, surface, schedule, TimeGrid(n_steps=400, horizon=1.0), 2000, 8, settings)
        assert fine.summary.replication.rms <= 0.7 * coarse.summary.replication.rms

    def test_grid_surface_hedge(self, model, atm_call, settings):
        surface = pde_price_grid(model, atm_call, 1.0, n_space=200, n_time=160)
        run = simulate_hedge_diffusion(
            model, surface, RiskAversionSchedule.zero(1.0), TimeGrid(n_steps=160, horizon=1.0), 1000, 4, settings
        )
        assert run.summary.extra["surface"] == "grid"
        assert run.summary.replication_rms_relative < 0.15

    def test_same_output_for_any_worker_count(self, model, atm_call, settings_factory):
        surface = closed_form_surface(model, atm_call, 1.0)
        schedule = RiskAversionSchedule.exponential(0.5, 1.0)
        grid = TimeGrid(n_steps=30, horizon=1.0)
        one = simulate_hedge_diffusion(model, surface, schedule, grid, 2000, 3, settings_factory(QUADHEDGE_WORKERS=1))
        many = simulate_hedge_diffusion(model, surface, schedule, grid, 2000, 3, settings_factory(QUADHEDGE_WORKERS=3))
        assert one.summary.model_dump_json() == many.summary.model_dump_json()

    def test_ledger(self, model, atm_call, settings):
        surface = closed_form_surface(model, atm_call, 1.0)
        run = simulate_hedge_diffusion(
            model, surface, RiskAversionSchedule.exponential(1.0, 1.0), TimeGrid(n_steps=12, horizon=1.0), 50, 2,
            settings, keep_residuals=True,
        )
        frame = run.ledgers[1].to_frame()
        assert list(frame.columns) == ledger_columns("diffusion")
        assert (frame["model"] == "diffusion").all()
        assert frame["spot"].iloc[0] == 100.0
        assert run.residuals.shape == (50, 12)

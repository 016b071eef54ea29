import math

import numpy as np
import pytest

from quadhedge.app.core.errors import (
    ArbitrageStepModelError,
    ConfigError,
    DegenerateDownFactorError,
    DomainError,
)
from quadhedge.app.schemas.ledger import ledger_columns
from quadhedge.app.schemas.market import MarketParams, PayoffSpec, TimeGrid
from quadhedge.app.schemas.risk import RiskAversionSchedule
from quadhedge.app.services.binomial import (
    build_lattice,
    build_lattice_from_step,
    crr_probability,
    delta_at_node,
    delta_eq4,
    delta_one_step,
    ksrf_step_model,
    risk_neutral_probability,
    simulate_hedge,
    step_model_from_factors,
)
from quadhedge.app.services.diffusion import bs_price
from quadhedge.app.services.risk_aversion import psi_eval, risk_aversion_from_psi


def _lattice(market, n_steps, payoff, horizon=1.0):
    grid = TimeGrid(n_steps=n_steps, horizon=horizon)
    return build_lattice(market, grid, crr_probability(market.drift, market.volatility, grid.step), payoff)


class TestStepModel:
    def test_crr_probability(self):
        assert crr_probability(0.08, 0.2, 0.01) == pytest.approx(0.5 + (0.08 - 0.02) / 0.4 * 0.1)

    def test_ksrf_moments(self, market):
        h = 1 / 160
        step = ksrf_step_model(market, h, 0.55)
        assert step.mean_factor == pytest.approx(1.0 + market.drift * h, rel=1e-14)
        variance = step.p_up * (1 - step.p_up) * step.spread**2
        assert variance == pytest.approx(market.volatility**2 * h, rel=1e-12)

    def test_probability_outside_unit_interval(self, market):
        with pytest.raises(DomainError, match="p_up"):
            ksrf_step_model(market, 0.01, 1.0)

    def test_degenerate_down_factor(self):
        wild = MarketParams(drift=0.08, volatility=3.0, riskless_rate=0.01, spot=100.0)
        with pytest.raises(DegenerateDownFactorError):
            ksrf_step_model(wild, 1.0, 0.5)

    def test_arbitrage_step_model(self):
        step = step_model_from_factors(0.5, 1.1, 1.05, 1.0)
        with pytest.raises(ArbitrageStepModelError):
            risk_neutral_probability(step, 0.01)

    def test_market_needs_drift_above_rate(self):
        with pytest.raises(ValueError, match="drift must exceed"):
            MarketParams(drift=0.005, volatility=0.2, riskless_rate=0.01, spot=100.0)


class TestPricing:
    def test_converges_to_black_scholes(self, market, atm_call):
        closed = bs_price(100.0, 100.0, 0.2, 0.01, 1.0).value
        lattice = _lattice(market, 1000, atm_call)
        assert lattice.premium == pytest.approx(closed, rel=5e-3)

    def test_error_halves_when_steps_double(self, market, atm_call):
        closed = bs_price(100.0, 100.0, 0.2, 0.01, 1.0).value
        errors = [abs(_lattice(market, n, atm_call).premium - closed) for n in (250, 500, 1000)]
        assert errors[0] / errors[1] == pytest.approx(2.0, abs=0.4)
        assert errors[1] / errors[2] == pytest.approx(2.0, abs=0.4)

    def test_put_call_parity(self, market):
        call = _lattice(market, 200, PayoffSpec.call(105.0)).premium
        put = _lattice(market, 200, PayoffSpec.put(105.0)).premium
        assert call - put == pytest.approx(100.0 - 105.0 * math.exp(-0.01), rel=1e-9)

    def test_zero_payoff(self, market):
        lattice = _lattice(market, 50, PayoffSpec.zero())
        assert lattice.premium == 0.0
        assert all(np.all(d == 0.0) for d in lattice.rn_deltas)

    def test_tree_size_limit(self, market, atm_call):
        grid = TimeGrid(n_steps=160, horizon=1.0)
        with pytest.raises(ConfigError, match="exceeds the limit"):
            build_lattice(market, grid, 0.5, atm_call, max_steps=100)


class TestDeltas:
    def test_one_step_worked_example(self):
        step = step_model_from_factors(0.5, 1.2, 0.8, 1.0)
        lattice = build_lattice_from_step(step, 100.0, 0.0, PayoffSpec.call(100.0), 1, max_steps=10)
        assert lattice.risk_neutral_p == pytest.approx(0.5)
        assert lattice.premium == pytest.approx(10.0)
        assert float(lattice.rn_deltas[0][0]) == pytest.approx(0.5)
        assert delta_one_step(100.0, step, 20.0, 0.0, math.inf) == pytest.approx(0.5)
        assert delta_one_step(100.0, step, 20.0, 0.0, 1.0) == pytest.approx(0.625)
        assert delta_one_step(100.0, step, 20.0, 0.0, 2.0) == pytest.approx(0.5625)

    def test_one_step_delta_scales_with_inverse_risk_aversion(self):
        step = step_model_from_factors(0.5, 1.2, 0.9, 1.0)
        rn = delta_one_step(100.0, step, 20.0, 0.0, math.inf)
        assert rn == pytest.approx(20.0 / 30.0)
        tilt_one = delta_one_step(100.0, step, 20.0, 0.0, 1.0) - rn
        tilt_half = delta_one_step(100.0, step, 20.0, 0.0, 0.5) - rn
        assert tilt_one == pytest.approx(1.05 / 4.5)
        assert tilt_half == pytest.approx(2.0 * tilt_one)

    def test_drift_form_matches_psi_form_on_random_nodes(self, market, atm_call):
        lattice = _lattice(market, 160, atm_call)
        schedule = RiskAversionSchedule.exponential(1.0, 1.0)
        step = lattice.step_model
        rng = np.random.default_rng(17)
        for _ in range(100):
            k = int(rng.integers(0, lattice.n_steps))
            j = int(rng.integers(0, k + 1))
            spot = float(lattice.node_prices[k][j])
            psi = psi_eval(schedule, lattice.grid.tau_at(k))
            risk = risk_aversion_from_psi(psi, spot, market.drift, market.volatility)
            f_up = float(lattice.option_values[k + 1][j + 1])
            f_down = float(lattice.option_values[k + 1][j])
            direct = delta_eq4(spot, step, f_up, f_down, risk, market.drift, market.volatility)
            assert direct == pytest.approx(delta_at_node(lattice, k, j, schedule), rel=1e-10, abs=1e-12)

    def test_node_index_checked(self, market, atm_call):
        lattice = _lattice(market, 10, atm_call)
        with pytest.raises(DomainError, match="node index"):
            delta_at_node(lattice, 3, 4, RiskAversionSchedule.zero(1.0))


class TestHedgeSimulation:
    def test_zero_family_replicates(self, market, atm_call, settings):
        lattice = _lattice(market, 160, atm_call)
        run = simulate_hedge(lattice, RiskAversionSchedule.zero(1.0), 2000, 5, market=market, settings=settings)
        assert run.summary.max_abs_residual <= 1e-9 * lattice.premium
        assert run.summary.terminal.rms <= 1e-9 * lattice.premium

    def test_delayed_family_is_exact_inside_the_delay(self, market, atm_call, settings):
        lattice = _lattice(market, 100, atm_call)
        schedule = RiskAversionSchedule.delayed(3.0, 0.0505, 1.0)
        run = simulate_hedge(lattice, schedule, 2000, 5, market=market, settings=settings)
        stds = run.summary.steps.std
        assert max(stds[-5:]) <= 1e-9 * lattice.premium
        assert stds[-6] > 0.0

    def test_residual_law_matches_theory(self, market, atm_call, settings):
        lattice = _lattice(market, 40, atm_call)
        run = simulate_hedge(
            lattice, RiskAversionSchedule.exponential(1.0, 1.0), 20_000, 11, market=market, settings=settings
        )
        assert run.summary.within_3se_mean >= 0.9
        assert run.summary.within_3se_std >= 0.9

    @pytest.mark.integration
    def test_residual_law_at_desk_scale(self, market, atm_call, settings):
        lattice = _lattice(market, 160, atm_call)
        run = simulate_hedge(
            lattice, RiskAversionSchedule.exponential(1.0, 1.0), 100_000, 11, market=market, settings=settings
        )
        assert run.summary.within_3se_mean >= 0.95
        assert run.summary.within_3se_std >= 0.95

    def test_normalized_residuals_follow_the_step_law(self, market, atm_call, settings):
        lattice = _lattice(market, 80, atm_call)
        run = simulate_hedge(
            lattice, RiskAversionSchedule.exponential(1.0, 1.0), 5000, 3, market=market, settings=settings
        )
        stats = run.summary.extra["normalized_residual"]
        assert stats["std"] == pytest.approx(stats["theory_std"], rel=0.02)
        assert stats["mean"] == pytest.approx(stats["theory_mean"], abs=1.5e-4)

    def test_terminal_error_shrinks_with_step(self, market, atm_call, settings):
        schedule = RiskAversionSchedule.exponential(1.0, 1.0)
        coarse = simulate_hedge(_lattice(market, 100, atm_call), schedule, 4000, 9, market=market, settings=settings)
        fine = simulate_hedge(_lattice(market, 400, atm_call), schedule, 4000, 9, market=market, settings=settings)
        assert fine.summary.terminal.rms <= 0.55 * coarse.summary.terminal.rms

    def test_same_output_for_any_worker_count(self, market, atm_call, settings_factory):
        lattice = _lattice(market, 40, atm_call)
        schedule = RiskAversionSchedule.exponential(0.8, 1.0)
        one = simulate_hedge(lattice, schedule, 3000, 21, market=market, settings=settings_factory(QUADHEDGE_WORKERS=1))
        many = simulate_hedge(lattice, schedule, 3000, 21, market=market, settings=settings_factory(QUADHEDGE_WORKERS=4))
        assert one.summary.model_dump_json() == many.summary.model_dump_json()

    def test_ledger_rows(self, market, atm_call, settings):
        lattice = _lattice(market, 20, atm_call)
        run = simulate_hedge(
            lattice, RiskAversionSchedule.exponential(1.0, 1.0), 100, 2, market=market, settings=settings,
            keep_residuals=True,
        )
        assert len(run.ledgers) == settings.ledger_path_cap
        frame = run.ledgers[0].to_frame()
        assert list(frame.columns) == ledger_columns("binomial")
        assert len(frame) == 20
        np.testing.assert_allclose(frame["portfolio"], frame["delta"] * frame["spot"] - frame["option"], rtol=1e-12)
        weights = np.exp(0.01 * (1.0 - lattice.grid.times()[1:]))
        assert run.ledgers[0].replication_error == pytest.approx(float(frame["residual"] @ weights), rel=1e-9, abs=1e-9)
        assert run.residuals.shape == (100, 20)
        assert run.ledgers[0].terminal_hedge_error == run.residuals[0, -1]

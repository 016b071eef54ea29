import math

import numpy as np
import pytest
from pydantic import ValidationError

from quadhedge.app.core.errors import DomainError, InputError
from quadhedge.app.schemas.market import (
    ParamSchedule,
    PayoffSpec,
    StateFunction,
    TimeGrid,
    days_to_years,
    riskless_numeraire,
)
from quadhedge.app.schemas.risk import RiskAversion, RiskAversionSchedule
from quadhedge.app.services.ledger import MomentAccumulator, merge_all
from quadhedge.app.services.risk_aversion import (
    absolute_from_relative,
    inverse_absolute,
    psi_eval,
    psi_small_tau_asymptotic,
    relative_from_absolute,
    risk_aversion_from_psi,
)
from quadhedge.app.services.rng import path_blocks, run_ordered, stream


class TestTimeGrid:
    def test_times_and_taus(self):
        grid = TimeGrid(n_steps=4, horizon=2.0)
        assert grid.step == pytest.approx(0.5)
        np.testing.assert_allclose(grid.times(), [0.0, 0.5, 1.0, 1.5, 2.0])
        np.testing.assert_allclose(grid.taus(), [2.0, 1.5, 1.0, 0.5, 0.0])
        assert grid.tau_at(1) == pytest.approx(1.5)

    def test_from_days(self):
        grid = TimeGrid.from_days(126, 126)
        assert grid.horizon == pytest.approx(0.5)
        assert days_to_years(252) == 1.0

    def test_rejects_empty_grid(self):
        with pytest.raises(ValidationError):
            TimeGrid(n_steps=0, horizon=1.0)


class TestParamSchedule:
    def test_number_and_string_forms(self):
        assert ParamSchedule.model_validate(0.05).constant() == 0.05
        assert ParamSchedule.model_validate("0.05").constant() == 0.05
        sched = ParamSchedule.model_validate("0:0.01;0.5:0.03")
        assert sched(0.2) == 0.01
        assert sched(0.7) == 0.03

    def test_integral_and_average(self):
        sched = ParamSchedule.model_validate("0:0.01;0.5:0.03")
        assert sched.integral(0.0, 1.0) == pytest.approx(0.02)
        assert sched.average(0.25, 0.75) == pytest.approx(0.02)

    def test_time_varying_has_no_constant(self):
        with pytest.raises(DomainError, match="time-varying"):
            ParamSchedule.model_validate("0:0.01;0.5:0.03").constant()

    def test_knots_must_start_at_zero(self):
        with pytest.raises(ValidationError, match="first knot"):
            ParamSchedule.model_validate("0.1:0.01")

    def test_riskless_numeraire(self):
        assert riskless_numeraire(1.0, ParamSchedule.of(0.05), 2.0) == pytest.approx(math.exp(0.1))


class TestStateFunction:
    def test_library(self):
        assert StateFunction(kind="sqrt")(0.04) == pytest.approx(0.2)
        assert StateFunction(kind="power", exponent=0.25)(16.0) == pytest.approx(2.0)
        assert StateFunction(kind="log")(math.e) == pytest.approx(1.0)
        assert StateFunction(kind="constant", scale=0.3)(5.0) == pytest.approx(0.3)

    def test_log_guarded_above_one(self):
        with pytest.raises(DomainError, match="above 1"):
            StateFunction(kind="log").check_domain([0.5, 2.0])

    def test_power_exponent_range(self):
        with pytest.raises(ValidationError, match="exponent"):
            StateFunction(kind="power", exponent=1.5)


class TestPayoff:
    def test_vanilla(self):
        np.testing.assert_allclose(PayoffSpec.call(100)(np.array([90.0, 110.0])), [0.0, 10.0])
        np.testing.assert_allclose(PayoffSpec.put(100)(np.array([90.0, 110.0])), [10.0, 0.0])

    def test_constant_must_be_non_negative(self):
        with pytest.raises(DomainError):
            PayoffSpec.constant(-1.0)

    def test_zero_and_asset(self):
        assert PayoffSpec.zero()(np.array([5.0])).tolist() == [0.0]
        assert PayoffSpec.asset(1)(np.array([1.0]), np.array([7.0])).tolist() == [7.0]


class TestPsiSchedules:
    def test_exponential_at_horizon(self):
        sched = RiskAversionSchedule.exponential(1.0, 160 / 252)
        assert psi_eval(sched, 160 / 252) == pytest.approx(1.0 - math.exp(-1.0))

    def test_zero_at_maturity(self):
        for sched in (
            RiskAversionSchedule.exponential(2.0, 1.0),
            RiskAversionSchedule.delayed(3.0, 0.2, 1.0),
            RiskAversionSchedule.zero(1.0),
        ):
            assert psi_eval(sched, 0.0) == 0.0

    def test_delayed_is_zero_inside_the_delay(self):
        sched = RiskAversionSchedule.delayed(3.0, 0.2, 1.0)
        np.testing.assert_array_equal(psi_eval(sched, np.array([0.0, 0.1, 0.2])), 0.0)
        assert psi_eval(sched, 0.5) == pytest.approx(0.2 - 0.2 * math.exp(-3.0 * 0.3))

    def test_non_decreasing_in_tau(self):
        rng = np.random.default_rng(3)
        for sched in (RiskAversionSchedule.exponential(1.7, 1.0), RiskAversionSchedule.delayed(2.0, 0.3, 1.0)):
            taus = np.sort(rng.uniform(0.0, 1.0, 500))
            assert np.all(np.diff(psi_eval(sched, taus)) >= 0.0)

    def test_small_tau_asymptotic(self):
        sched = RiskAversionSchedule.exponential(0.8, 1.0)
        tau = 1e-4
        assert psi_eval(sched, tau) == pytest.approx(psi_small_tau_asymptotic(sched, tau), rel=1e-3)

    def test_tau_outside_horizon(self):
        with pytest.raises(DomainError, match="tau must lie"):
            psi_eval(RiskAversionSchedule.exponential(1.0, 1.0), 1.5)

    def test_delay_only_for_delayed_family(self):
        with pytest.raises(ValidationError, match="delay applies"):
            RiskAversionSchedule(family="exponential", gamma=1.0, delay=0.1, horizon=1.0)


class TestRiskAversion:
    @pytest.mark.parametrize("absolute", [1e-6, 0.3, 1.0, 42.0, 1e3])
    def test_relative_round_trip(self, absolute):
        assert absolute_from_relative(relative_from_absolute(absolute)) == pytest.approx(absolute, rel=1e-12)

    def test_infinite_maps_to_one(self):
        assert relative_from_absolute(math.inf) == 1.0
        assert math.isinf(absolute_from_relative(1.0))

    def test_relative_out_of_range(self):
        with pytest.raises(DomainError):
            absolute_from_relative(1.5)

    def test_zero_psi_is_infinite_risk_aversion(self):
        risk = risk_aversion_from_psi(0.0, 100.0, 0.08, 0.2)
        assert risk.is_infinite
        assert risk.relative == 1.0
        assert inverse_absolute(risk) == 0.0

    def test_psi_inversion(self):
        risk = risk_aversion_from_psi(0.5, 100.0, 0.08, 0.2)
        assert risk.absolute == pytest.approx(0.08 / (2 * 0.5 * 100.0 * 0.04))
        assert 0.08 * risk.inverse / (2 * 100.0 * 0.04) == pytest.approx(0.5)

    def test_negative_psi_rejected(self):
        with pytest.raises(DomainError, match="psi"):
            risk_aversion_from_psi(-0.1, 100.0, 0.08, 0.2)

    def test_zero_drift_rejected(self):
        with pytest.raises(DomainError, match="drift") as info:
            risk_aversion_from_psi(0.5, 100.0, 0.0, 0.2)
        assert info.value.field == "drift"

    def test_value_object(self):
        assert RiskAversion.infinite().inverse == 0.0
        assert RiskAversion(absolute=4.0, relative=0.8).inverse == 0.25


class TestRng:
    def test_streams_are_reproducible_and_distinct(self):
        a = stream(11, "binomial.paths", 0).random(5)
        b = stream(11, "binomial.paths", 0).random(5)
        c = stream(11, "binomial.paths", 1).random(5)
        d = stream(11, "diffusion.paths", 0).random(5)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, d)

    def test_negative_seed(self):
        with pytest.raises(InputError, match="seed"):
            stream(-1, "x")

    def test_blocks_cover_paths(self):
        blocks = path_blocks(1000, 300)
        assert [(b.start, b.stop) for b in blocks] == [(0, 300), (300, 600), (600, 900), (900, 1000)]

    def test_run_ordered_keeps_item_order(self):
        assert run_ordered(lambda x: x * x, range(10), 4) == [x * x for x in range(10)]


class TestMomentAccumulator:
    def test_merge_matches_pooled_sample(self):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((1000, 3)) * [1.0, 2.0, 0.5] + [0.0, 1.0, -2.0]
        parts = [MomentAccumulator.from_samples(data[i : i + 137]) for i in range(0, 1000, 137)]
        merged = merge_all(parts)
        full = MomentAccumulator.from_samples(data)
        assert merged.count == 1000
        for name in ("mean", "m2", "m3", "m4"):
            np.testing.assert_allclose(getattr(merged, name), getattr(full, name), rtol=1e-9, atol=1e-9)

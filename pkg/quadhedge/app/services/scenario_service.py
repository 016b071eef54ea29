"""Scenario files and engine dispatch shared by the CLI and the HTTP routes."""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np
from dotenv import dotenv_values

from quadhedge.app.core.config import Settings, get_settings
from quadhedge.app.core.errors import ConfigError
from quadhedge.app.schemas.calibration import (
    CalibrationOption,
    CalibrationResult,
    PriceSeries,
    SolverParams,
    SurfaceGrid,
)
from quadhedge.app.schemas.diffusion import DiffusionModel
from quadhedge.app.schemas.jump import JumpModel, JumpState
from quadhedge.app.schemas.market import MarketParams, PayoffSpec, TimeGrid
from quadhedge.app.schemas.multifactor import McPriceModel, SvModel, VovModel
from quadhedge.app.schemas.scenario import PriceRow, PriceTable, ScenarioConfig
from quadhedge.app.services import binomial, calibration, diffusion, jumpdiff, multifactor
from quadhedge.app.services.ledger import HedgeRun

logger = logging.getLogger(__name__)


def unflatten(flat: Mapping[str, str | None]) -> dict[str, Any]:
    """``{"market.volatility": "0.2"}`` -> ``{"market": {"volatility": "0.2"}}``."""
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        if value is None:
            raise ConfigError(f"scenario key '{key}' has no value", field=key)
        parts = [p.strip() for p in key.split(".")]
        if any(not p for p in parts):
            raise ConfigError(f"malformed scenario key '{key}'", field=key)
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"scenario key '{key}' conflicts with '{part}'", field=key)
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigError(f"scenario key '{key}' conflicts with a section", field=key)
        node[parts[-1]] = value
    return nested


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}", field="config")
    config = ScenarioConfig.model_validate(unflatten(dotenv_values(path)))
    prices = config.calibration.prices
    if prices is not None and not prices.is_absolute():
        config = with_section(config, "calibration", prices=path.parent / prices)
    return config


def with_section(config: ScenarioConfig, section: str, **values: Any) -> ScenarioConfig:
    updated = getattr(config, section).model_copy(update=values)
    return config.model_copy(update={section: updated})


def with_overrides(
    config: ScenarioConfig,
    *,
    seed: int | None = None,
    n_paths: int | None = None,
    model: str | None = None,
    prices: Path | None = None,
) -> ScenarioConfig:
    """Command-line flags win over the file; values are re-validated."""
    data = config.model_dump()
    if seed is not None:
        data["simulation"]["seed"] = seed
    if n_paths is not None:
        data["simulation"]["n_paths"] = n_paths
        data["calibration"]["n_paths"] = n_paths
    if model is not None:
        data["model"] = model
    if prices is not None:
        data["calibration"]["prices"] = prices
    return ScenarioConfig.model_validate(data)


def resolve_seed(config: ScenarioConfig, settings: Settings) -> int:
    seed = config.simulation.seed
    return settings.default_seed if seed is None else seed


# --- model builders ---------------------------------------------------------------------


def binomial_market(config: ScenarioConfig) -> MarketParams:
    m = config.market
    return MarketParams(drift=m.drift.constant(), volatility=m.volatility.constant(), riskless_rate=m.rate.constant(), spot=m.spot)


def binomial_p_up(config: ScenarioConfig, market: MarketParams, grid: TimeGrid) -> float:
    if config.market.p_up == "crr":
        return binomial.crr_probability(market.drift, market.volatility, grid.step)
    return float(config.market.p_up)


def diffusion_model(config: ScenarioConfig) -> DiffusionModel:
    m = config.market
    return DiffusionModel(drift=m.drift, volatility=m.volatility, rate=m.rate, spot=m.spot)


def sv_model(config: ScenarioConfig) -> SvModel:
    m, sv = config.market, config.sv
    return SvModel(
        drift=m.drift,
        vol_drift=sv.vol_drift,
        vol_vol=sv.vol_vol,
        rate=m.rate,
        rho=sv.rho,
        h_fn=sv.h_fn,
        spot=m.spot,
        vol_state=sv.vol_state,
    )


def vov_model(config: ScenarioConfig) -> VovModel:
    m, sv, vov = config.market, config.sv, config.vov
    return VovModel(
        drift=m.drift,
        vol_drift=sv.vol_drift,
        rate=m.rate,
        rho=sv.rho,
        h_fn=sv.h_fn,
        spot=m.spot,
        vol_state=sv.vol_state,
        vov_drift=vov.vov_drift,
        vov_vol=vov.vov_vol,
        g_fn=vov.g_fn,
        rho_w=vov.rho_w,
        rho_vw=vov.rho_vw,
        vov_state=vov.vov_state,
    )


def jump_model(config: ScenarioConfig) -> JumpModel:
    m, j = config.market, config.jump
    return JumpModel(
        drift1=m.drift,
        drift2=j.drift2,
        vol1=m.volatility,
        vol2=j.vol2,
        jump1=j.jump1,
        jump2=j.jump2,
        intensity=j.intensity,
        rate=m.rate,
        spot1=m.spot,
        spot2=j.spot2,
        maturity2=j.maturity2_years,
        displacement=j.displacement,
    )


def mc_pricing(config: ScenarioConfig, seed: int) -> McPriceModel:
    return McPriceModel(n_paths=config.pricing.mc_paths, n_steps=config.pricing.mc_steps, seed=seed)


def pricing_surface(config: ScenarioConfig, model: DiffusionModel, payoff: PayoffSpec, horizon: float):
    p = config.pricing
    if p.method == "grid" or not payoff.is_vanilla:
        return diffusion.pde_price_grid(model, payoff, horizon, p.n_space, p.n_time, p.x_max_multiple)
    return diffusion.closed_form_surface(model, payoff, horizon)


def multifactor_pricer(config: ScenarioConfig, model: SvModel, payoff: PayoffSpec, grid: TimeGrid, seed: int):
    choice = config.pricing.pricer
    if choice == "auto":
        choice = "black-scholes" if model.h_fn.kind == "constant" and payoff.is_vanilla else "nested-mc"
    if choice == "black-scholes":
        return multifactor.BlackScholesClaimPricer.for_model(model, payoff, grid.horizon)
    return multifactor.NestedMonteCarloPricer(model, payoff, grid, mc_pricing(config, seed))


def jump_claim(config: ScenarioConfig, model: JumpModel, horizon: float, seed: int) -> jumpdiff.TwoAssetClaim:
    payoff = config.payoff
    if payoff.kind == "linear":
        return jumpdiff.linear_claim(model, payoff.weight1, payoff.weight2)
    if payoff.kind == "product":
        return jumpdiff.product_claim(model, horizon)
    return jumpdiff.MonteCarloClaim(model, payoff.spec(), horizon, mc_pricing(config, seed))


# --- commands ---------------------------------------------------------------------------


def _table(model: str, rows: dict[str, float | None]) -> PriceTable:
    return PriceTable(
        model=model,
        rows=[PriceRow(quantity=k, value=None if v is None else float(v)) for k, v in rows.items()],
    )


def run_price(config: ScenarioConfig, settings: Settings | None = None) -> PriceTable:
    """Value and first-order partials at t = 0 for the configured model."""
    settings = settings or get_settings()
    seed = resolve_seed(config, settings)
    grid = config.grid.time_grid()
    horizon = grid.horizon

    if config.model == "binomial":
        market = binomial_market(config)
        payoff = config.payoff.spec()
        lattice = binomial.build_lattice(market, grid, binomial_p_up(config, market, grid), payoff, settings.max_tree_steps)
        rows = {
            "value": lattice.premium,
            "delta": float(lattice.rn_deltas[0][0]),
            "p_up": lattice.step_model.p_up,
            "risk_neutral_p": lattice.risk_neutral_p,
        }
        if payoff.is_vanilla:
            rows["closed_form"] = diffusion.bs_price(
                market.spot, payoff.strike, market.volatility, market.riskless_rate, horizon, payoff.kind
            ).value
        return _table("binomial", rows)

    if config.model == "diffusion":
        model = diffusion_model(config)
        point = pricing_surface(config, model, config.payoff.spec(), horizon).evaluate(model.spot, 0.0)
        return _table(
            "diffusion",
            {
                "value": float(point.value),
                "delta": float(point.dx),
                "gamma": float(point.dxx),
                "theta": float(point.dt),
            },
        )

    if config.model in ("sv", "vov"):
        model = sv_model(config) if config.model == "sv" else vov_model(config)
        values = multifactor.mc_price_and_partials(
            model,
            config.payoff.spec(),
            mc_pricing(config, seed),
            multifactor.initial_state(model),
            0.0,
            horizon,
            settings,
        )
        rows = {"value": values.value, "dx": values.dx, "dy": values.dy}
        if values.dz is not None:
            rows["dz"] = values.dz
        rows["std_error"] = values.std_error
        return _table(config.model, rows)

    model = jump_model(config)
    state = JumpState(model.spot1, model.spot2)
    if config.payoff.kind in ("linear", "product"):
        data = jump_claim(config, model, horizon, seed).evaluate(state, 0.0)
    else:
        data = jumpdiff.jump_price(model, config.payoff.spec(), mc_pricing(config, seed), state, 0.0, horizon, settings)
    rn1, rn2 = jumpdiff.rn_deltas_jump(model, data, state, 0.0)
    return _table(
        "jump",
        {
            "value": data.value,
            "dx1": data.dx1,
            "dx2": data.dx2,
            "displaced": data.displaced,
            "rn_delta1": rn1,
            "rn_delta2": rn2,
            "std_error": data.std_error,
        },
    )


def run_hedge(config: ScenarioConfig, settings: Settings | None = None) -> HedgeRun:
    settings = settings or get_settings()
    seed = resolve_seed(config, settings)
    grid = config.grid.time_grid()
    schedule = config.schedule.schedule(grid.horizon)
    n_paths = config.simulation.n_paths
    keep = config.simulation.keep_residuals
    logger.info("Hedging %s: %d paths x %d steps, seed %d", config.model, n_paths, grid.n_steps, seed)

    if config.model == "binomial":
        market = binomial_market(config)
        lattice = binomial.build_lattice(
            market, grid, binomial_p_up(config, market, grid), config.payoff.spec(), settings.max_tree_steps
        )
        return binomial.simulate_hedge(lattice, schedule, n_paths, seed, market=market, settings=settings, keep_residuals=keep)

    if config.model == "diffusion":
        model = diffusion_model(config)
        surface = pricing_surface(config, model, config.payoff.spec(), grid.horizon)
        return diffusion.simulate_hedge_diffusion(model, surface, schedule, grid, n_paths, seed, settings, keep)

    if config.model in ("sv", "vov"):
        model = sv_model(config) if config.model == "sv" else vov_model(config)
        pricer = multifactor_pricer(config, model, config.payoff.spec(), grid, seed)
        return multifactor.simulate_hedge_multifactor(
            model, pricer, schedule, grid, n_paths, seed, settings, keep, literal_dc=config.sv.literal_dc
        )

    model = jump_model(config)
    claim = jump_claim(config, model, grid.horizon, seed)
    return jumpdiff.simulate_hedge_jump(model, claim, schedule, grid, n_paths, seed, settings, keep)


def load_series(config: ScenarioConfig) -> PriceSeries:
    if config.calibration.prices is None:
        raise ConfigError("no price series given (calibration.prices or --prices)", field="calibration.prices")
    return calibration.load_price_series(config.calibration.prices)


def solver_params(config: ScenarioConfig, settings: Settings) -> SolverParams:
    c = config.calibration
    return SolverParams(
        gamma_init=c.gamma_init,
        tol=c.tol,
        max_iter=c.max_iter,
        damping=c.damping,
        n_paths=c.n_paths,
        seed=resolve_seed(config, settings),
    )


def run_calibrate(config: ScenarioConfig, settings: Settings | None = None) -> CalibrationResult:
    settings = settings or get_settings()
    c = config.calibration
    series = load_series(config)
    option = CalibrationOption(kind=c.kind, moneyness=c.moneyness, maturity_days=c.maturity_days)
    grid = TimeGrid.from_days(c.maturity_days, c.maturity_days, settings.trading_days)
    solver = solver_params(config, settings)
    observed = None
    if c.reference_gamma is not None:
        observed = calibration.reference_residual_std(
            series, option, grid, c.reference_gamma, solver.n_paths, solver.seed, c.rate, settings
        )
    return calibration.calibrate_gamma(series, option, grid, solver, c.rate, observed_std=observed, settings=settings)


def run_psi_surface(config: ScenarioConfig, settings: Settings | None = None) -> SurfaceGrid:
    settings = settings or get_settings()
    s = config.surface
    return calibration.psi_surface(s.gammas, s.taus_days, s.horizon_days, settings.trading_days)


def run_gamma_surface(config: ScenarioConfig, settings: Settings | None = None) -> SurfaceGrid:
    settings = settings or get_settings()
    s = config.surface
    series = load_series(config)
    return calibration.gamma_surface(
        series, s.moneyness, s.maturity_days, solver_params(config, settings), config.calibration.rate, settings
    )


def all_cells_failed(surface: SurfaceGrid) -> bool:
    return not np.any(np.isfinite(surface.values()))


def price_rows(table: PriceTable) -> dict[str, float]:
    return {row.quantity: math.nan if row.value is None else row.value for row in table.rows}


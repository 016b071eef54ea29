"""Generalized binomial lattice: valuation, deltas and hedge simulation."""

from __future__ import annotations

import logging
import math
import time

import numpy as np

from quadhedge.app.core.config import Settings, effective_path_block, effective_workers, get_settings
from quadhedge.app.core.errors import (
    ArbitrageStepModelError,
    ConfigError,
    DegenerateDownFactorError,
    DomainError,
)
from quadhedge.app.schemas.lattice import BinomialLattice, KsrfStepModel
from quadhedge.app.schemas.ledger import HedgeLedger
from quadhedge.app.schemas.market import MarketParams, PayoffSpec, TimeGrid
from quadhedge.app.schemas.risk import RiskAversion, RiskAversionSchedule
from quadhedge.app.services.ledger import HedgeRun, MomentAccumulator, assemble_run, block_result
from quadhedge.app.services.risk_aversion import inverse_absolute, psi_eval
from quadhedge.app.services.rng import PathBlock, path_blocks, run_ordered, stream

logger = logging.getLogger(__name__)


def crr_probability(drift: float, volatility: float, step: float) -> float:
    """Up-probability that makes the generalized tree coincide with CRR as h -> 0."""
    return 0.5 + (drift - 0.5 * volatility**2) / (2.0 * volatility) * math.sqrt(step)


def ksrf_step_model(market: MarketParams, step: float, p_up: float) -> KsrfStepModel:
    if not 0.0 < p_up < 1.0:
        raise DomainError("p_up must lie in (0, 1)", field="p_up")
    vol_term = market.volatility * math.sqrt(step)
    up = 1.0 + market.drift * step + math.sqrt((1.0 - p_up) / p_up) * vol_term
    down = 1.0 + market.drift * step - math.sqrt(p_up / (1.0 - p_up)) * vol_term
    if down <= 0.0:
        raise DegenerateDownFactorError(
            f"down factor {down:.6g} is not positive; reduce the step or p_up", field="p_up"
        )
    return KsrfStepModel(p_up=p_up, up_factor=up, down_factor=down, step=step)


def step_model_from_factors(p_up: float, up: float, down: float, step: float) -> KsrfStepModel:
    if down <= 0.0:
        raise DegenerateDownFactorError("down factor must be positive", field="down_factor")
    return KsrfStepModel(p_up=p_up, up_factor=up, down_factor=down, step=step)


def risk_neutral_probability(step_model: KsrfStepModel, rate: float) -> float:
    growth = math.exp(rate * step_model.step)
    q = (growth - step_model.down_factor) / step_model.spread
    if not 0.0 < q < 1.0:
        raise ArbitrageStepModelError(
            f"risk-neutral probability {q:.6g} outside (0, 1): exp(rh) must lie between d and u",
            field="riskless_rate",
        )
    return q


def build_lattice_from_step(
    step_model: KsrfStepModel,
    spot: float,
    rate: float,
    payoff: PayoffSpec,
    n_steps: int,
    max_steps: int | None = None,
) -> BinomialLattice:
    if step_model.down_factor <= 0.0:
        raise DegenerateDownFactorError("down factor must be positive", field="down_factor")
    limit = max_steps if max_steps is not None else get_settings().max_tree_steps
    if n_steps > limit:
        raise ConfigError(f"lattice with {n_steps} steps exceeds the limit of {limit}", field="n_steps")
    q = risk_neutral_probability(step_model, rate)
    u, d = step_model.up_factor, step_model.down_factor
    discount = math.exp(-rate * step_model.step)

    prices = []
    for k in range(n_steps + 1):
        ups = np.arange(k + 1)
        prices.append(spot * np.power(u, ups) * np.power(d, k - ups))

    values: list[np.ndarray] = [np.empty(0)] * (n_steps + 1)
    deltas: list[np.ndarray] = [np.empty(0)] * n_steps
    values[n_steps] = np.asarray(payoff(prices[n_steps]), dtype=float).reshape(n_steps + 1)
    for k in range(n_steps - 1, -1, -1):
        upper = values[k + 1][1:]
        lower = values[k + 1][:-1]
        values[k] = discount * (q * upper + (1.0 - q) * lower)
        deltas[k] = (upper - lower) / (prices[k] * (u - d))

    return BinomialLattice(
        step_model=step_model,
        grid=TimeGrid(n_steps=n_steps, horizon=step_model.step * n_steps),
        spot=spot,
        rate=rate,
        risk_neutral_p=q,
        payoff=payoff,
        node_prices=tuple(prices),
        option_values=tuple(values),
        rn_deltas=tuple(deltas),
    )


def build_lattice(
    market: MarketParams,
    grid: TimeGrid,
    p_up: float,
    payoff: PayoffSpec,
    max_steps: int | None = None,
) -> BinomialLattice:
    step_model = ksrf_step_model(market, grid.step, p_up)
    lattice = build_lattice_from_step(
        step_model, market.spot, market.riskless_rate, payoff, grid.n_steps, max_steps=max_steps
    )
    logger.debug(
        "Built %d-step lattice: u=%.8f d=%.8f q=%.6f premium=%.6f",
        grid.n_steps,
        step_model.up_factor,
        step_model.down_factor,
        lattice.risk_neutral_p,
        lattice.premium,
    )
    return lattice.model_copy(update={"grid": grid})


def delta_one_step(
    spot: float,
    step_model: KsrfStepModel,
    f_up: float,
    f_down: float,
    risk: RiskAversion | float,
) -> float:
    """Mean-variance delta of a single binomial step (gross-return numerator)."""
    p = step_model.p_up
    spread = step_model.spread
    rn_delta = (f_up - f_down) / (spot * spread)
    adjustment = step_model.mean_factor / (2.0 * p * (1.0 - p) * spot * spread**2)
    return adjustment * inverse_absolute(risk) + rn_delta


def delta_eq4(
    spot: float,
    step_model: KsrfStepModel,
    f_up: float,
    f_down: float,
    risk: RiskAversion | float,
    drift: float,
    volatility: float,
) -> float:
    """Node delta written with the drift and volatility of the step model."""
    p = step_model.p_up
    tilt = drift * inverse_absolute(risk) / (2.0 * spot * volatility**2)
    hedge = (f_up - f_down) * math.sqrt(p * (1.0 - p)) / (spot * volatility * math.sqrt(step_model.step))
    return tilt + hedge


def _check_node(lattice: BinomialLattice, k: int, j: int) -> None:
    if not 0 <= k < lattice.n_steps:
        raise DomainError(f"step index {k} outside [0, {lattice.n_steps})", field="k")
    if not 0 <= j <= k:
        raise DomainError(f"node index {j} outside [0, {k}]", field="j")


def delta_at_node(lattice: BinomialLattice, k: int, j: int, schedule: RiskAversionSchedule) -> float:
    _check_node(lattice, k, j)
    psi = psi_eval(schedule, lattice.grid.tau_at(k))
    return psi + float(lattice.rn_deltas[k][j])


def _simulate_block(
    lattice: BinomialLattice,
    market: MarketParams | None,
    psi: np.ndarray,
    block: PathBlock,
    seed: int,
    ledger_cap: int,
    keep_residuals: bool,
    weights: np.ndarray,
):
    n = lattice.n_steps
    h = lattice.grid.step
    growth = math.exp(lattice.rate * h) - 1.0
    rng = stream(seed, "binomial.paths", block.index)
    ups = rng.random((block.size, n)) < lattice.step_model.p_up

    size = block.size
    j = np.zeros(size, dtype=np.int64)
    spot = np.full(size, lattice.spot)
    option = np.full(size, lattice.premium)
    residual = np.empty((size, n))
    cond_mean = np.empty((size, n))
    cond_var = np.empty((size, n))
    normalized = []
    keep = max(0, min(size, ledger_cap - block.start))
    cols = {name: np.empty((keep, n)) for name in ("t", "tau", "spot", "delta", "option", "portfolio", "residual", "accrual")}

    if market is not None:
        excess = (market.drift - market.riskless_rate) * h
        var_unit = market.volatility**2 * h
    else:
        excess = lattice.step_model.mean_factor - 1.0 - growth
        p = lattice.step_model.p_up
        var_unit = p * (1.0 - p) * lattice.step_model.spread**2

    for k in range(n):
        delta = psi[k] + lattice.rn_deltas[k][j]
        portfolio = delta * spot - option
        accrual = growth * portfolio
        j_next = j + ups[:, k]
        spot_next = lattice.node_prices[k + 1][j_next]
        option_next = lattice.option_values[k + 1][j_next]
        u_k = delta * (spot_next - spot) - (option_next - option) - accrual
        residual[:, k] = u_k
        cond_mean[:, k] = psi[k] * spot * excess
        cond_var[:, k] = psi[k] ** 2 * spot**2 * var_unit
        if psi[k] > 0.0:
            normalized.append((spot_next - spot) / spot - growth)
        if keep:
            cols["t"][:, k] = lattice.grid.time_at(k)
            cols["tau"][:, k] = lattice.grid.tau_at(k)
            cols["spot"][:, k] = spot[:keep]
            cols["delta"][:, k] = delta[:keep]
            cols["option"][:, k] = option[:keep]
            cols["portfolio"][:, k] = portfolio[:keep]
            cols["residual"][:, k] = u_k[:keep]
            cols["accrual"][:, k] = accrual[:keep]
        j, spot, option = j_next, spot_next, option_next

    replication = residual @ weights
    ledgers = [
        HedgeLedger(
            path=block.start + i,
            model="binomial",
            columns={name: values[i].copy() for name, values in cols.items()},
            terminal_hedge_error=float(residual[i, -1]),
            replication_error=float(replication[i]),
        )
        for i in range(keep)
    ]
    extra = {}
    if normalized:
        extra["normalized"] = MomentAccumulator.from_samples(np.concatenate(normalized)[:, None])
    return block_result(residual, cond_mean, cond_var, replication, ledgers, keep_residuals, extra)


def simulate_hedge(
    lattice: BinomialLattice,
    schedule: RiskAversionSchedule,
    n_paths: int,
    seed: int,
    market: MarketParams | None = None,
    settings: Settings | None = None,
    keep_residuals: bool = False,
) -> HedgeRun:
    """Hedge the short claim along simulated lattice paths under the p_up measure.

    Args:
        lattice: built tree; paths move up with the step model's p_up.
        schedule: psi schedule giving the tilt psi(tau_k) over the risk-neutral delta.
        n_paths: number of simulated paths.
        seed: top-level seed; path blocks draw from independent Philox streams.
        market: when given, theoretical residual moments use (mu - r) h and sigma^2 h;
            otherwise the exact one-step moments of the step model.
        settings: execution settings (workers, block size, ledger cap).
        keep_residuals: also return the full (paths x steps) residual panel.
    """
    settings = settings or get_settings()
    started = time.perf_counter()
    grid = lattice.grid
    psi = np.asarray(psi_eval(schedule, np.minimum(grid.taus()[:-1], schedule.horizon)), dtype=float)
    weights = np.exp(lattice.rate * (grid.horizon - grid.times()[1:]))
    blocks = path_blocks(n_paths, effective_path_block(settings))
    results = run_ordered(
        lambda block: _simulate_block(
            lattice, market, psi, block, seed, settings.ledger_path_cap, keep_residuals, weights
        ),
        blocks,
        effective_workers(settings),
    )
    extra: dict = {"p_up": lattice.step_model.p_up, "risk_neutral_p": lattice.risk_neutral_p}
    normalized = [r.extra["normalized"] for r in results if "normalized" in r.extra]
    if normalized:
        pooled = normalized[0]
        for part in normalized[1:]:
            pooled = pooled.merge(part)
        if market is not None:
            theory_mean = (market.drift - market.riskless_rate) * grid.step
            theory_std = market.volatility * math.sqrt(grid.step)
        else:
            p = lattice.step_model.p_up
            theory_mean = lattice.step_model.mean_factor - math.exp(lattice.rate * grid.step)
            theory_std = math.sqrt(p * (1.0 - p)) * lattice.step_model.spread
        extra["normalized_residual"] = {
            "mean": float(pooled.mean[0]),
            "std": float(pooled.std(ddof=1)[0]),
            "theory_mean": theory_mean,
            "theory_std": theory_std,
        }
    run = assemble_run(
        model="binomial",
        blocks=results,
        grid=grid,
        schedule=schedule,
        premium=lattice.premium,
        seed=seed,
        extra=extra,
    )
    logger.debug("Binomial hedge finished in %.2fs", time.perf_counter() - started)
    return run

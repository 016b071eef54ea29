"""Continuous-diffusion engine: BSM pricing, optimal delta and Euler hedge simulation."""

from __future__ import annotations

import logging
import math
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_banded
from scipy.stats import norm

from quadhedge.app.core.config import Settings, effective_path_block, effective_workers, get_settings
from quadhedge.app.core.errors import ConfigError, DomainError
from quadhedge.app.schemas.diffusion import DiffusionModel, PricingSurface, SurfacePoint
from quadhedge.app.schemas.ledger import HedgeLedger
from quadhedge.app.schemas.market import PayoffSpec, TimeGrid
from quadhedge.app.schemas.risk import RiskAversionSchedule
from quadhedge.app.services.ledger import HedgeRun, assemble_run, block_result, replication_weights
from quadhedge.app.services.risk_aversion import psi_eval
from quadhedge.app.services.rng import PathBlock, path_blocks, run_ordered, stream

logger = logging.getLogger(__name__)

SPOT_FLOOR = 1e-12


class BsGreeks(NamedTuple):
    value: np.ndarray | float
    delta: np.ndarray | float
    gamma: np.ndarray | float
    theta: np.ndarray | float


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _bs_core(spot, strike, vol, rate, tau, kind, rate_now=None, vol_now=None) -> BsGreeks:
    """Closed form with effective (rate, vol) over tau; theta uses the current rate/vol."""
    if kind not in ("call", "put"):
        raise DomainError("closed form supports call and put only", field="payoff.kind")
    s = np.asarray(spot, dtype=float)
    if np.any(s <= 0) or strike <= 0 or vol <= 0 or tau < 0:
        raise DomainError("need spot, strike, vol > 0 and tau >= 0", field="spot")
    if tau == 0.0:
        if kind == "call":
            value = np.maximum(s - strike, 0.0)
            delta = np.where(s > strike, 1.0, np.where(s == strike, 0.5, 0.0))
        else:
            value = np.maximum(strike - s, 0.0)
            delta = np.where(s < strike, -1.0, np.where(s == strike, -0.5, 0.0))
        zeros = np.zeros_like(s)
        return BsGreeks(_scalar(value), _scalar(delta), _scalar(zeros), _scalar(zeros))

    r_now = rate if rate_now is None else rate_now
    v_now = vol if vol_now is None else vol_now
    sqrt_tau = math.sqrt(tau)
    d1 = (np.log(s / strike) + (rate + 0.5 * vol * vol) * tau) / (vol * sqrt_tau)
    d2 = d1 - vol * sqrt_tau
    discount = math.exp(-rate * tau)
    if kind == "call":
        value = s * norm.cdf(d1) - strike * discount * norm.cdf(d2)
        delta = norm.cdf(d1)
    else:
        value = strike * discount * norm.cdf(-d2) - s * norm.cdf(-d1)
        delta = norm.cdf(d1) - 1.0
    gamma = norm.pdf(d1) / (s * vol * sqrt_tau)
    # dV/dt from the pricing PDE with the instantaneous coefficients
    theta = r_now * value - r_now * s * delta - 0.5 * v_now * v_now * s * s * gamma
    return BsGreeks(_scalar(value), _scalar(delta), _scalar(gamma), _scalar(theta))


def bs_price(spot, strike: float, vol: float, rate: float, tau: float, kind: str = "call") -> BsGreeks:
    """European call/put value, delta, gamma and theta (dV/dt, calendar time)."""
    return _bs_core(spot, strike, vol, rate, tau, kind)


def bs_price_schedule(model: DiffusionModel, payoff: PayoffSpec, spot, t: float, horizon: float) -> BsGreeks:
    """Closed form under time-varying schedules via integrated rate and variance."""
    tau = max(horizon - t, 0.0)
    if tau == 0.0:
        return _bs_core(spot, payoff.strike, float(model.volatility(t)), float(model.rate(t)), 0.0, payoff.kind)
    rate_bar = model.rate.average(t, horizon)
    var_bar = model.volatility.squared().average(t, horizon)
    return _bs_core(
        spot,
        payoff.strike,
        math.sqrt(var_bar),
        rate_bar,
        tau,
        payoff.kind,
        rate_now=float(model.rate(t)),
        vol_now=float(model.volatility(t)),
    )


def closed_form_surface(model: DiffusionModel, payoff: PayoffSpec, horizon: float) -> PricingSurface:
    if not payoff.is_vanilla:
        raise DomainError("closed-form surface needs a call or put payoff", field="payoff.kind")

    def evaluator(spot: np.ndarray, t: float) -> SurfacePoint:
        g = bs_price_schedule(model, payoff, spot, t, horizon)
        return SurfacePoint(*(np.asarray(v, dtype=float) for v in g))

    return PricingSurface(method="closed-form", horizon=horizon, payoff=payoff, evaluator=evaluator)


def _space_grid(model: DiffusionModel, payoff: PayoffSpec, n_space: int, x_max_multiple: float) -> np.ndarray:
    if n_space < 3:
        raise ConfigError("space grid needs at least 3 intervals", field="n_space")
    if x_max_multiple < 5.0:
        raise ConfigError("x_max must be at least 5 times the spot", field="x_max_multiple")
    dx = x_max_multiple * model.spot / n_space
    if payoff.is_vanilla and payoff.strike >= dx:
        # keep the strike on a node
        dx = payoff.strike / math.floor(payoff.strike / dx)
    return dx * np.arange(n_space + 1)


def pde_price_grid(
    model: DiffusionModel,
    payoff: PayoffSpec,
    horizon: float,
    n_space: int = 400,
    n_time: int = 400,
    x_max_multiple: float = 5.0,
    x_grid: np.ndarray | None = None,
) -> PricingSurface:
    """Fully implicit finite differences for the BSM equation, central in space."""
    if n_time < 1:
        raise ConfigError("time grid needs at least one step", field="n_time")
    x = np.asarray(x_grid, dtype=float) if x_grid is not None else _space_grid(model, payoff, n_space, x_max_multiple)
    if x.ndim != 1 or len(x) < 4 or np.any(np.diff(x) <= 0) or x[0] != 0.0:
        raise ConfigError("space grid must start at 0 and be strictly increasing", field="x_grid")
    spacing = np.diff(x)
    if not np.allclose(spacing, spacing[0], rtol=1e-9, atol=0.0):
        raise ConfigError("space grid must be uniform", field="x_grid")
    dx = spacing[0]
    m = len(x) - 1
    t_grid = horizon * np.arange(n_time + 1) / n_time
    dt = horizon / n_time

    values = np.empty((n_time + 1, m + 1))
    values[n_time] = np.asarray(payoff(x), dtype=float)
    g0 = float(np.asarray(payoff(np.array([0.0])), dtype=float)[0])
    idx = np.arange(1, m)
    for j in range(n_time - 1, -1, -1):
        t0, t1 = t_grid[j], t_grid[j + 1]
        r = model.rate.average(t0, t1)
        var = model.volatility.squared().average(t0, t1)
        a = 0.5 * var * idx**2
        b = 0.5 * r * idx
        lower = -dt * (a - b)
        diag = 1.0 + dt * (2.0 * a + r)
        upper = -dt * (a + b)
        discount = math.exp(-model.rate.integral(t0, horizon))
        growth = math.exp(model.rate.integral(t0, horizon))
        v_low = g0 * discount
        v_high = discount * float(np.asarray(payoff(np.array([x[-1] * growth])), dtype=float)[0])
        rhs = values[j + 1][1:m].copy()
        rhs[0] -= lower[0] * v_low
        rhs[-1] -= upper[-1] * v_high
        banded = np.zeros((3, m - 1))
        banded[0, 1:] = upper[:-1]
        banded[1, :] = diag
        banded[2, :-1] = lower[1:]
        values[j, 1:m] = solve_banded((1, 1), banded, rhs)
        values[j, 0] = v_low
        values[j, m] = v_high

    dvdx = np.gradient(values, dx, axis=1)
    d2vdx2 = np.zeros_like(values)
    d2vdx2[:, 1:-1] = (values[:, 2:] - 2.0 * values[:, 1:-1] + values[:, :-2]) / dx**2
    dvdt = np.gradient(values, dt, axis=0)

    def evaluator(spot: np.ndarray, t: float) -> SurfacePoint:
        if t < 0 or t > horizon:
            raise DomainError("t outside the surface horizon", field="t")
        pos = t / dt
        j0 = min(int(math.floor(pos)), n_time - 1)
        w = pos - j0
        out = []
        for grid_values in (values, dvdx, d2vdx2, dvdt):
            row = (1.0 - w) * grid_values[j0] + w * grid_values[j0 + 1]
            out.append(np.interp(spot, x, row))
        return SurfacePoint(*out)

    logger.debug("PDE grid solved: %d x %d, dx=%.6g", m, n_time, dx)
    return PricingSurface(
        method="grid",
        horizon=horizon,
        payoff=payoff,
        evaluator=evaluator,
        x_grid=x,
        t_grid=t_grid,
        values=values,
    )


def delta_optimal_diffusion(
    surface: PricingSurface,
    model: DiffusionModel,
    schedule: RiskAversionSchedule,
    spot,
    t: float,
):
    """psi(T - t) plus the risk-neutral delta dV/dx."""
    if t < 0 or t > surface.horizon:
        raise DomainError("t outside [0, T]", field="t")
    if schedule.horizon < surface.horizon:
        raise DomainError("psi schedule is shorter than the pricing horizon", field="schedule")
    point = surface.evaluate(spot, t)
    tau = min(surface.horizon - t, schedule.horizon)
    return _scalar(psi_eval(schedule, tau) + point.dx)


def unhedged_coefficients(model: DiffusionModel, schedule: RiskAversionSchedule, spot, t: float, horizon: float):
    """Drift and diffusion coefficients of dU with mu/(2 R sigma^2) written as psi*S."""
    psi = psi_eval(schedule, min(horizon - t, schedule.horizon))
    scale = psi * np.asarray(spot, dtype=float)
    return _scalar(scale * (model.drift(t) - model.rate(t))), _scalar(scale * model.volatility(t))


def _step_coefficients(model: DiffusionModel, grid: TimeGrid):
    times = grid.times()
    mu = np.array([model.drift.average(times[k], times[k + 1]) for k in range(grid.n_steps)])
    var = np.array([model.volatility.squared().average(times[k], times[k + 1]) for k in range(grid.n_steps)])
    growth = np.array([math.exp(model.rate.integral(times[k], times[k + 1])) - 1.0 for k in range(grid.n_steps)])
    rate = np.array([model.rate.average(times[k], times[k + 1]) for k in range(grid.n_steps)])
    return mu, np.sqrt(var), growth, rate


def _simulate_block(model, surface, grid, psi, coeffs, block: PathBlock, seed, cap, keep_residuals, weights):
    mu, sigma, growth, rate = coeffs
    n, h = grid.n_steps, grid.step
    rng = stream(seed, "diffusion.paths", block.index)
    normals = rng.standard_normal((block.size, n))
    size = block.size
    spot = np.full(size, model.spot)
    option = surface.evaluate(spot, 0.0).value
    residual = np.empty((size, n))
    cond_mean = np.empty((size, n))
    cond_var = np.empty((size, n))
    keep = max(0, min(size, cap - block.start))
    cols = {name: np.empty((keep, n)) for name in ("t", "tau", "spot", "delta", "option", "portfolio", "residual", "accrual")}
    for k in range(n):
        t = grid.time_at(k)
        delta = psi[k] + surface.evaluate(spot, t).dx
        portfolio = delta * spot - option
        accrual = growth[k] * portfolio
        spot_next = np.maximum(spot * (1.0 + mu[k] * h + sigma[k] * math.sqrt(h) * normals[:, k]), SPOT_FLOOR)
        if k + 1 == n:
            option_next = np.asarray(surface.payoff(spot_next), dtype=float)
        else:
            option_next = surface.evaluate(spot_next, grid.time_at(k + 1)).value
        u_k = delta * (spot_next - spot) - (option_next - option) - accrual
        residual[:, k] = u_k
        cond_mean[:, k] = psi[k] * spot * (mu[k] - rate[k]) * h
        cond_var[:, k] = (psi[k] * spot * sigma[k]) ** 2 * h
        if keep:
            cols["t"][:, k] = t
            cols["tau"][:, k] = grid.tau_at(k)
            for name, arr in (("spot", spot), ("delta", delta), ("option", option), ("portfolio", portfolio), ("residual", u_k), ("accrual", accrual)):
                cols[name][:, k] = arr[:keep]
        spot, option = spot_next, option_next
    replication = residual @ weights
    ledgers = [
        HedgeLedger(
            path=block.start + i,
            model="diffusion",
            columns={name: values[i].copy() for name, values in cols.items()},
            terminal_hedge_error=float(residual[i, -1]),
            replication_error=float(replication[i]),
        )
        for i in range(keep)
    ]
    return block_result(residual, cond_mean, cond_var, replication, ledgers, keep_residuals)


def simulate_hedge_diffusion(
    model: DiffusionModel,
    surface: PricingSurface,
    schedule: RiskAversionSchedule,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    settings: Settings | None = None,
    keep_residuals: bool = False,
) -> HedgeRun:
    settings = settings or get_settings()
    if abs(grid.horizon - surface.horizon) > 1e-12 * surface.horizon:
        raise ConfigError("hedge grid and pricing surface must share the horizon", field="grid.horizon")
    psi = np.asarray(psi_eval(schedule, np.minimum(grid.taus()[:-1], schedule.horizon)), dtype=float)
    coeffs = _step_coefficients(model, grid)
    weights = replication_weights(grid, model.rate)
    blocks = path_blocks(n_paths, effective_path_block(settings))
    results = run_ordered(
        lambda block: _simulate_block(
            model, surface, grid, psi, coeffs, block, seed, settings.ledger_path_cap, keep_residuals, weights
        ),
        blocks,
        effective_workers(settings),
    )
    premium = float(np.asarray(surface.evaluate(np.array([model.spot]), 0.0).value)[0])
    return assemble_run(
        model="diffusion",
        blocks=results,
        grid=grid,
        schedule=schedule,
        premium=premium,
        seed=seed,
        extra={"surface": surface.method},
    )

"""Empirical gamma calibration: p_h estimation, the damped gamma fixed point and plot grids."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy.optimize import minimize_scalar

from quadhedge.app.core.config import Settings, effective_workers, get_settings
from quadhedge.app.core.errors import (
    ConfigError,
    DegenerateProbabilityError,
    DomainError,
    HedgingError,
    InputError,
    InsufficientDataError,
)
from quadhedge.app.schemas.calibration import (
    GAMMA_MAX,
    GAMMA_MIN,
    CalibrationOption,
    CalibrationResult,
    IterationRecord,
    PhEstimate,
    PriceSeries,
    SolverParams,
    SurfaceGrid,
)
from quadhedge.app.schemas.lattice import BinomialLattice
from quadhedge.app.schemas.market import MarketParams, PayoffSpec, TimeGrid, days_to_years
from quadhedge.app.schemas.risk import RiskAversionSchedule
from quadhedge.app.services.binomial import build_lattice, simulate_hedge
from quadhedge.app.services.risk_aversion import psi_eval
from quadhedge.app.services.rng import run_ordered, stream

logger = logging.getLogger(__name__)

MIN_OBSERVATIONS = 30
MIN_RESIDUALS = 100
# smallest gamma simulated; psi must be positive to read off the residual scale
PROBE_GAMMA = 1e-2


def load_price_series(path: str | Path) -> PriceSeries:
    """Read a ``date,close`` CSV with ISO dates."""
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as exc:
        raise InputError(f"price file not found: {path}", field="prices") from exc
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise InputError(f"price file is not a readable CSV: {exc}", field="prices") from exc
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    missing = {"date", "close"} - set(frame.columns)
    if missing:
        raise ConfigError(f"price file lacks column(s): {', '.join(sorted(missing))}", field="prices")
    try:
        dates = pd.to_datetime(frame["date"], format="ISO8601").dt.date
        closes = pd.to_numeric(frame["close"], errors="raise").astype(float)
    except (ValueError, TypeError) as exc:
        raise InputError(f"bad date or close value: {exc}", field="prices") from exc
    try:
        return PriceSeries(dates=tuple(dates), closes=tuple(closes))
    except ValidationError as exc:
        raise InputError(exc.errors()[0]["msg"], field="prices") from exc


def generate_gbm_series(
    drift: float,
    volatility: float,
    spot: float,
    n_days: int,
    seed: int,
    start: str = "2015-01-02",
    trading_days: int = 252,
) -> PriceSeries:
    """Business-day closes of a geometric Brownian motion."""
    if n_days < 1:
        raise DomainError("n_days must be positive", field="n_days")
    rng = stream(seed, "calibration.gbm", 0)
    h = 1.0 / trading_days
    steps = (drift - 0.5 * volatility**2) * h + volatility * math.sqrt(h) * rng.standard_normal(n_days - 1)
    closes = spot * np.exp(np.concatenate(([0.0], np.cumsum(steps))))
    dates = pd.bdate_range(start=start, periods=n_days).date
    return PriceSeries(dates=tuple(dates), closes=tuple(float(c) for c in closes))


def estimate_ph(series: PriceSeries, trading_days: int = 252) -> PhEstimate:
    """Share of up days, and the annualized mean and std of daily log returns."""
    if len(series) < MIN_OBSERVATIONS:
        raise InsufficientDataError(
            f"insufficient observations: {len(series)} < {MIN_OBSERVATIONS}", field="prices"
        )
    returns = series.log_returns()
    sigma_daily = float(np.std(returns, ddof=1))
    if sigma_daily == 0.0:
        raise DomainError("price series has zero return variance", field="prices")
    p_hat = float(np.count_nonzero(returns > 0)) / len(returns)
    if not 0.0 < p_hat < 1.0:
        raise DegenerateProbabilityError(f"degenerate up-probability p_hat={p_hat}", field="prices")
    return PhEstimate(
        p_hat=p_hat,
        mu_hat=float(np.mean(returns)) * trading_days,
        sigma_hat=sigma_daily * math.sqrt(trading_days),
        n_returns=len(returns),
    )


def fit_residual_normal(residuals) -> tuple[float, float]:
    """Normal MLE: sample mean and the 1/n standard deviation."""
    values = np.asarray(residuals, dtype=float).ravel()
    if values.size < MIN_RESIDUALS:
        raise InsufficientDataError(
            f"insufficient observations: {values.size} residuals < {MIN_RESIDUALS}", field="residuals"
        )
    return float(np.mean(values)), float(np.std(values))


def fit_gamma_to_psi(taus, psi_hat, horizon: float) -> float:
    """Least-squares gamma of the exponential family on [0, 10]."""
    taus = np.asarray(taus, dtype=float)
    psi_hat = np.asarray(psi_hat, dtype=float)
    if taus.size == 0 or not np.any(psi_hat > 0):
        return 0.0

    def loss(gamma: float) -> float:
        model = gamma - gamma * np.exp(-gamma * taus / horizon)
        return float(np.sum((model - psi_hat) ** 2))

    result = minimize_scalar(loss, bounds=(GAMMA_MIN, GAMMA_MAX), method="bounded", options={"xatol": 1e-8})
    return float(min(max(result.x, GAMMA_MIN), GAMMA_MAX))


def calibration_market(estimate: PhEstimate, rate: float, spot: float) -> MarketParams:
    try:
        return MarketParams(
            drift=estimate.mu_hat + 0.5 * estimate.sigma_hat**2,
            volatility=estimate.sigma_hat,
            riskless_rate=rate,
            spot=spot,
        )
    except ValidationError as exc:
        raise DomainError(
            f"estimated dynamics unusable for the lattice: {exc.errors()[0]['msg']}", field="prices"
        ) from exc


def build_calibration_lattice(
    series: PriceSeries, option: CalibrationOption, grid: TimeGrid, rate: float, trading_days: int = 252
) -> tuple[BinomialLattice, MarketParams, PhEstimate]:
    estimate = estimate_ph(series, trading_days)
    market = calibration_market(estimate, rate, option.spot)
    payoff = PayoffSpec(kind=option.kind, strike=option.strike)
    return build_lattice(market, grid, estimate.p_hat, payoff), market, estimate


def hedge_slippage_panel(series: PriceSeries, lattice: BinomialLattice, trading_days: int = 252) -> np.ndarray:
    """Per-step residuals of the risk-neutral lattice hedge run along rolling windows of closes.

    Each window starts on a trading day, is rescaled to the lattice spot and is
    sampled every ``step * trading_days`` days; deltas and option values come from
    the lattice level at that step, interpolated in the spot.
    """
    stride = lattice.grid.step * trading_days
    if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
        raise ConfigError("lattice step must be a whole number of trading days", field="grid.n_steps")
    stride = int(round(stride))
    n = lattice.n_steps
    prices = series.prices()
    span = n * stride
    n_windows = len(prices) - span
    if n_windows < MIN_RESIDUALS:
        raise InsufficientDataError(
            f"insufficient observations: {n_windows} hedge windows < {MIN_RESIDUALS}", field="prices"
        )
    starts = np.arange(n_windows)
    offsets = stride * np.arange(n + 1)
    paths = lattice.spot * prices[starts[:, None] + offsets[None, :]] / prices[starts][:, None]
    growth = math.exp(lattice.rate * lattice.grid.step) - 1.0
    panel = np.empty((n_windows, n))
    option = np.interp(paths[:, 0], lattice.node_prices[0], lattice.option_values[0])
    for k in range(n):
        spot = paths[:, k]
        delta = np.interp(spot, lattice.node_prices[k], lattice.rn_deltas[k])
        spot_next = paths[:, k + 1]
        if k + 1 == n:
            option_next = np.asarray(lattice.payoff(spot_next), dtype=float)
        else:
            option_next = np.interp(spot_next, lattice.node_prices[k + 1], lattice.option_values[k + 1])
        panel[:, k] = delta * (spot_next - spot) - (option_next - option) - growth * (delta * spot - option)
        option = option_next
    return panel


def _observed_std(panel: np.ndarray) -> np.ndarray:
    return np.array([fit_residual_normal(panel[:, k])[1] for k in range(panel.shape[1])])


def reference_residual_std(
    series: PriceSeries,
    option: CalibrationOption,
    grid: TimeGrid,
    gamma: float,
    n_paths: int,
    seed: int,
    rate: float = 0.01,
    settings: Settings | None = None,
) -> np.ndarray:
    """Per-step residual std of the lattice hedge run at a known gamma, for use as ``observed_std``."""
    settings = settings or get_settings()
    lattice, market, _ = build_calibration_lattice(series, option, grid, rate, settings.trading_days)
    schedule = RiskAversionSchedule.exponential(gamma, grid.horizon)
    reference_seed = int(stream(seed, "calibration.reference", 0).integers(0, 2**62))
    run = simulate_hedge(lattice, schedule, n_paths, reference_seed, market=market, settings=settings)
    return np.asarray(run.summary.steps.fitted_std)


def calibrate_gamma(
    series: PriceSeries,
    option: CalibrationOption,
    grid: TimeGrid,
    solver: SolverParams | None = None,
    rate: float = 0.01,
    observed_std=None,
    settings: Settings | None = None,
) -> CalibrationResult:
    """Damped fixed point gamma <- gamma + damping * (gamma_end - gamma).

    Each round simulates the lattice hedge at the current gamma, reads the
    implied psi(tau_k) = psi(tau_k; gamma) * std_observed / std_simulated and
    refits gamma_end to it. ``observed_std`` (per step) replaces the residuals
    of the rolling-window hedge on the series.
    """
    settings = settings or get_settings()
    solver = solver or SolverParams()
    lattice, market, estimate = build_calibration_lattice(series, option, grid, rate, settings.trading_days)
    taus = grid.taus()[:-1]
    source = "panel"
    if observed_std is None:
        observed_std = _observed_std(hedge_slippage_panel(series, lattice, settings.trading_days))
        source = "slippage"
    observed_std = np.asarray(observed_std, dtype=float)
    if observed_std.shape != (grid.n_steps,):
        raise ConfigError(
            f"observed_std needs one value per step ({grid.n_steps}), got {observed_std.shape}", field="observed_std"
        )

    def result(gamma: float, converged: bool, iterations: list[IterationRecord]) -> CalibrationResult:
        schedule = RiskAversionSchedule.exponential(gamma, grid.horizon)
        return CalibrationResult(
            gamma=gamma,
            converged=converged,
            iterations=iterations,
            taus=[float(t) for t in taus],
            psi_at_grid=[float(p) for p in np.atleast_1d(psi_eval(schedule, taus))],
            p_hat=estimate.p_hat,
            mu_hat=estimate.mu_hat,
            sigma_hat=estimate.sigma_hat,
            observed_source=source,
        )

    if not np.any(observed_std > 0):
        logger.info("No residual risk observed; gamma = 0")
        return result(0.0, True, [])

    gamma = solver.gamma_init
    iterations: list[IterationRecord] = []
    for it in range(solver.max_iter):
        schedule = RiskAversionSchedule.exponential(max(gamma, PROBE_GAMMA), grid.horizon)
        run = simulate_hedge(lattice, schedule, solver.n_paths, solver.seed, market=market, settings=settings)
        sim_std = np.asarray(run.summary.steps.fitted_std)
        psi = np.atleast_1d(psi_eval(schedule, taus))
        usable = (psi > 0) & (sim_std > 0)
        implied = np.where(usable, psi * observed_std / np.where(usable, sim_std, 1.0), 0.0)
        gamma_end = fit_gamma_to_psi(taus[usable], implied[usable], grid.horizon)
        iterations.append(
            IterationRecord(
                gamma_initial=gamma,
                gamma_end=gamma_end,
                fitted_mean=list(run.summary.steps.fitted_mean),
                fitted_std=[float(s) for s in sim_std],
            )
        )
        logger.info("gamma iteration %d: %.6g -> %.6g", it + 1, gamma, gamma_end)
        if not np.any(implied > 0):
            return result(0.0, True, iterations)
        if abs(gamma_end - gamma) <= solver.tol:
            return result(gamma_end, True, iterations)
        gamma = min(max(gamma + solver.damping * (gamma_end - gamma), GAMMA_MIN), GAMMA_MAX)

    logger.warning("gamma iteration did not converge after %d rounds (last %.6g)", solver.max_iter, gamma)
    return result(gamma, False, iterations)


def _cell_seed(seed: int, index: int) -> int:
    return int(stream(seed, "calibration.cell", index).integers(0, 2**62))


def gamma_surface(
    series: PriceSeries,
    moneyness: list[float],
    maturities_days: list[int],
    solver: SolverParams | None = None,
    rate: float = 0.01,
    settings: Settings | None = None,
) -> SurfaceGrid:
    """calibrate_gamma per (moneyness, maturity) cell with daily rebalancing; failed cells hold NaN."""
    settings = settings or get_settings()
    solver = solver or SolverParams()
    cell_settings = settings.model_copy(update={"workers": 1})
    cells = [(i, j, m, d) for i, m in enumerate(moneyness) for j, d in enumerate(maturities_days)]

    def run_cell(cell):
        i, j, m, days = cell
        index = i * len(maturities_days) + j
        try:
            option = CalibrationOption(moneyness=m, maturity_days=int(days))
            grid = TimeGrid(n_steps=int(days), horizon=days_to_years(days, settings.trading_days))
            cell_solver = solver.model_copy(update={"seed": _cell_seed(solver.seed, index)})
            result = calibrate_gamma(series, option, grid, cell_solver, rate, settings=cell_settings)
        except HedgingError as exc:
            logger.warning("gamma cell (moneyness %g, %s days) failed: %s", m, days, exc.message)
            return math.nan, f"error:{exc.error_code}"
        except ValidationError as exc:
            logger.warning("gamma cell (moneyness %g, %s days) invalid: %s", m, days, exc.errors()[0]["msg"])
            return math.nan, "error:validation_error"
        if not result.converged:
            logger.warning("gamma cell (moneyness %g, %s days) did not converge", m, days)
            return math.nan, "not_converged"
        return result.gamma, "ok"

    outcomes = run_ordered(run_cell, cells, effective_workers(settings))
    values = [[math.nan] * len(maturities_days) for _ in moneyness]
    status = [[""] * len(maturities_days) for _ in moneyness]
    for (i, j, _, _), (value, state) in zip(cells, outcomes):
        values[i][j] = value
        status[i][j] = state
    surface = SurfaceGrid(
        row_name="moneyness",
        col_name="maturity_days",
        rows=[float(m) for m in moneyness],
        cols=[float(d) for d in maturities_days],
        cells=values,
        status=status,
    )
    check_moneyness_monotone(surface)
    return surface


def check_moneyness_monotone(surface: SurfaceGrid) -> list[str]:
    """Logs (does not raise) where gamma falls as moneyness rises within a maturity."""
    grid = surface.values()
    violations = []
    for j, days in enumerate(surface.cols):
        column = grid[:, j]
        for i in range(len(column) - 1):
            a, b = column[i], column[i + 1]
            if np.isfinite(a) and np.isfinite(b) and b < a:
                violations.append(
                    f"maturity {days:g}d: gamma {a:.4g} at moneyness {surface.rows[i]:g} > {b:.4g} at {surface.rows[i + 1]:g}"
                )
    for message in violations:
        logger.warning("gamma not increasing in moneyness: %s", message)
    return violations


def psi_surface(
    gammas: list[float], taus_days: list[float], horizon_days: float, trading_days: int = 252
) -> SurfaceGrid:
    if not gammas or not taus_days:
        raise DomainError("psi surface needs non-empty gamma and tau grids", field="gammas")
    if max(taus_days) > horizon_days:
        raise DomainError("tau values must not exceed the horizon", field="taus_days")
    horizon = days_to_years(horizon_days, trading_days)
    taus = np.array([days_to_years(t, trading_days) for t in taus_days])
    cells = [
        [float(v) for v in np.atleast_1d(psi_eval(RiskAversionSchedule.exponential(g, horizon), taus))]
        for g in gammas
    ]
    return SurfaceGrid(
        row_name="gamma",
        col_name="tau_days",
        rows=[float(g) for g in gammas],
        cols=[float(t) for t in taus_days],
        cells=cells,
    )

"""Stochastic-volatility and vol-of-vol engines.

Holdings formulas are pure functions of (model, partials, state, R, t). Claim
values C(S, v[, w], t) and their partials come from a risk-neutral Monte-Carlo
pricer with common random numbers across the bumped states.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from quadhedge.app.core.config import Settings, effective_path_block, effective_workers, get_settings
from quadhedge.app.core.errors import ConfigError, DomainError, NearSingularCorrelationError
from quadhedge.app.schemas.ledger import HedgeLedger
from quadhedge.app.schemas.market import PayoffSpec, StateFunction, TimeGrid
from quadhedge.app.schemas.multifactor import (
    DETERMINANT_FLOOR,
    RHO_GUARD,
    ClaimValues,
    FactorPaths,
    FactorState,
    McPriceModel,
    SvModel,
    VovModel,
)
from quadhedge.app.schemas.risk import RiskAversion, RiskAversionSchedule
from quadhedge.app.services.diffusion import bs_price
from quadhedge.app.services.ledger import HedgeRun, assemble_run, block_result, replication_weights
from quadhedge.app.services.risk_aversion import inverse_absolute, psi_eval, schedule_risk_aversion
from quadhedge.app.services.rng import PathBlock, path_blocks, run_ordered, stream

logger = logging.getLogger(__name__)

# ln(x) is only a volatility above 1
LOG_STATE_FLOOR = 1.0 + 1e-9


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _is_vov(model: SvModel) -> bool:
    return isinstance(model, VovModel)


def _vol_of(fn: StateFunction, states):
    x = np.asarray(states, dtype=float)
    if fn.kind == "log":
        x = np.maximum(x, LOG_STATE_FLOOR)
    return fn(x)


def _check_state(model: SvModel, state: FactorState) -> None:
    for name, value in (("spot", state.spot), ("vol_state", state.vol)):
        arr = np.asarray(value, dtype=float)
        if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
            raise DomainError(f"{name} must be positive and finite", field=name)
    model.h_fn.check_domain(state.vol)
    if _is_vov(model):
        if state.vov is None:
            raise DomainError("vol-of-vol model needs a vov state", field="vov_state")
        arr = np.asarray(state.vov, dtype=float)
        if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
            raise DomainError("vov_state must be positive and finite", field="vov_state")
        model.g_fn.check_domain(state.vov)


def initial_state(model: SvModel) -> FactorState:
    return FactorState(model.spot, model.vol_state, model.vov_state if _is_vov(model) else None)


def _check_rho(value: float, name: str) -> None:
    if abs(value) > RHO_GUARD:
        raise NearSingularCorrelationError(
            f"|{name}| = {abs(value):.6g} exceeds the guard {RHO_GUARD}", field=name
        )


def det3(m) -> float | np.ndarray:
    """Cofactor expansion along the first row; entries may be arrays."""
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def _replace_column(m, col: int, values):
    return [[values[i] if j == col else m[i][j] for j in range(3)] for i in range(3)]


def correlation_matrix(model: SvModel) -> np.ndarray:
    if _is_vov(model):
        for name in ("rho", "rho_w", "rho_vw"):
            _check_rho(getattr(model, name), name)
        corr = np.array(
            [
                [1.0, model.rho, model.rho_w],
                [model.rho, 1.0, model.rho_vw],
                [model.rho_w, model.rho_vw, 1.0],
            ]
        )
        det = det3(corr)
        if det <= DETERMINANT_FLOOR:
            raise NearSingularCorrelationError(
                f"correlation determinant {det:.3g} is below {DETERMINANT_FLOOR}", field="rho"
            )
        return corr
    _check_rho(model.rho, "rho")
    return np.array([[1.0, model.rho], [model.rho, 1.0]])


def correlation_cholesky(model: SvModel) -> np.ndarray:
    try:
        return np.linalg.cholesky(correlation_matrix(model))
    except np.linalg.LinAlgError as exc:
        raise NearSingularCorrelationError("correlation matrix is not positive definite", field="rho") from exc


# --- holdings -----------------------------------------------------------------


def _sv_adjustments(model: SvModel, state: FactorState, inv, t: float):
    """(a - a^ir, b - b^ir) for a given 1/R, elementwise over paths."""
    _check_rho(model.rho, "rho")
    beta = model.vol_vol(t)
    if not beta > 0:
        raise DomainError("vol_vol must be positive", field="vol_vol")
    s = np.asarray(state.spot, dtype=float)
    v = np.asarray(state.vol, dtype=float)
    h = _vol_of(model.h_fn, v)
    mu, alpha, rho = model.drift(t), model.vol_drift(t), model.rho
    k = 1.0 / (1.0 - rho * rho)
    a_adj = k * mu / (2.0 * h * h * s) - rho * k * alpha / (2.0 * beta * h * s)
    b_adj = k * alpha / (2.0 * beta * beta * v) - rho * k * mu / (2.0 * h * beta * v)
    return inv * a_adj, inv * b_adj


def sv_holdings(
    model: SvModel,
    partials: tuple[float, float],
    state: FactorState,
    risk: RiskAversion | float,
    t: float,
) -> tuple[float, float]:
    """Optimal units (a of S, b of v); infinite R gives the riskless (dC/dx, dC/dy)."""
    _check_state(model, state)
    inv = inverse_absolute(risk)
    a_adj, b_adj = _sv_adjustments(model, state, inv, t)
    return _scalar(partials[0] + a_adj), _scalar(partials[1] + b_adj)


def sv_risk_premium(model: SvModel, state: FactorState, risk: RiskAversion | float, t: float) -> float:
    _check_state(model, state)
    _check_rho(model.rho, "rho")
    inv = inverse_absolute(risk)
    h = _vol_of(model.h_fn, state.vol)
    mu, alpha, beta, rho = model.drift(t), model.vol_drift(t), model.vol_vol(t), model.rho
    if not beta > 0:
        raise DomainError("vol_vol must be positive", field="vol_vol")
    bracket = mu / (h * h) + alpha / (beta * beta) - rho * (mu + alpha) / (h * beta)
    return _scalar(inv * bracket / (2.0 * (1.0 - rho * rho)))


def sv_premium_drift(model: SvModel, state: FactorState, risk: RiskAversion | float, t: float) -> float:
    """Instantaneous excess drift (mu - r) x + (alpha - r) y of the excess dollar holdings x, y."""
    _check_state(model, state)
    a_adj, b_adj = _sv_adjustments(model, state, inverse_absolute(risk), t)
    r = model.rate(t)
    x = a_adj * np.asarray(state.spot, dtype=float)
    y = b_adj * np.asarray(state.vol, dtype=float)
    return _scalar((model.drift(t) - r) * x + (model.vol_drift(t) - r) * y)


def cramer_determinants(corr, rhs):
    """(D, D_1, D_2, D_3) for corr @ m = rhs; column i of corr replaced by rhs in D_i."""
    corr = [[float(c) for c in row] for row in np.asarray(corr, dtype=float)]
    dets = [det3(corr)]
    for col in range(3):
        dets.append(det3(_replace_column(corr, col, rhs)))
    return tuple(_scalar(d) for d in dets)


def _vov_rhs(model: VovModel, state: FactorState, t: float):
    vov_vol = model.vov_vol(t)
    if not vov_vol > 0:
        raise DomainError("vov_vol must be positive", field="vov_vol")
    h = _vol_of(model.h_fn, state.vol)
    g = _vol_of(model.g_fn, state.vov)
    return (model.drift(t) / h, model.vol_drift(t) / g, model.vov_drift(t) / vov_vol), h, g, vov_vol


def _vov_determinants(model: VovModel, state: FactorState, t: float, literal_dc: bool, relative_c):
    corr = correlation_matrix(model)
    rhs, h, g, vov_vol = _vov_rhs(model, state, t)
    d, d_a, d_b, d_c = cramer_determinants(corr, rhs)
    if literal_dc:
        if relative_c is None:
            raise ConfigError("the literal D_c form needs the relative risk aversion C", field="relative_c")
        literal = ((1.0 - relative_c) * rhs[0], rhs[1], rhs[2])
        d_c = _scalar(det3(_replace_column(corr.tolist(), 2, literal)))
    return (d, d_a, d_b, d_c), h, g, vov_vol


def vov_determinants(
    model: VovModel,
    state: FactorState,
    t: float,
    literal_dc: bool = False,
    relative_c: float | None = None,
):
    """(D, D_a, D_b, D_c) of the correlation system with right-hand side (mu/h, alpha/g, gamma/delta).

    ``literal_dc`` multiplies the first entry of D_c's replaced column by (1 - C).
    """
    _check_state(model, state)
    dets, *_ = _vov_determinants(model, state, t, literal_dc, relative_c)
    return dets


def _vov_adjustments(model: VovModel, state: FactorState, inv, t: float, literal_dc: bool = False):
    relative_c = 1.0 / (1.0 + inv) if literal_dc else None
    (d, d_a, d_b, d_c), h, g, vov_vol = _vov_determinants(model, state, t, literal_dc, relative_c)
    s = np.asarray(state.spot, dtype=float)
    v = np.asarray(state.vol, dtype=float)
    w = np.asarray(state.vov, dtype=float)
    return (
        inv * d_a / (2.0 * h * s * d),
        inv * d_b / (2.0 * g * v * d),
        inv * d_c / (2.0 * vov_vol * w * d),
    )


def vov_holdings(
    model: VovModel,
    partials: tuple[float, float, float],
    state: FactorState,
    risk: RiskAversion | float,
    t: float,
    literal_dc: bool = False,
) -> tuple[float, float, float]:
    _check_state(model, state)
    adj = _vov_adjustments(model, state, inverse_absolute(risk), t, literal_dc)
    return tuple(_scalar(p + a) for p, a in zip(partials, adj))


# --- risk-neutral pricing -------------------------------------------------------


def _bumped_states(model: SvModel, state: FactorState, pricing: McPriceModel):
    """Stack base and central-bump states along a new leading axis."""
    s = np.atleast_1d(np.asarray(state.spot, dtype=float))
    v = np.atleast_1d(np.asarray(state.vol, dtype=float))
    ds = pricing.spot_bump * s
    dv = pricing.vol_bump * v
    spots = [s, s + ds, s - ds, s, s]
    vols = [v, v, v, v + dv, v - dv]
    if not _is_vov(model):
        return np.stack(spots), np.stack(vols), None, (ds, dv, None)
    w = np.atleast_1d(np.asarray(state.vov, dtype=float))
    dw = pricing.vov_bump * w
    spots += [s, s]
    vols += [v, v]
    vovs = [w, w, w, w, w, w + dw, w - dw]
    return np.stack(spots), np.stack(vols), np.stack(vovs), (ds, dv, dw)


def _evolve_q(model: SvModel, chol: np.ndarray, spots, vols, vovs, normals, times):
    """Log-Euler under Q: every state drifts at r. Inputs (m, P); output (m, P, n_inner)."""
    log_s = np.log(spots)[..., None]
    log_v = np.log(vols)[..., None]
    log_w = np.log(vovs)[..., None] if vovs is not None else None
    for i, z in enumerate(normals):
        t0, t1 = float(times[i]), float(times[i + 1])
        dt = t1 - t0
        root = math.sqrt(dt)
        r = model.rate.average(t0, t1)
        corr_z = z @ chol.T
        hv = _vol_of(model.h_fn, np.exp(log_v))
        next_s = log_s + (r - 0.5 * hv * hv) * dt + hv * root * corr_z[:, 0]
        if log_w is None:
            beta = model.vol_vol.average(t0, t1)
            log_v = log_v + (r - 0.5 * beta * beta) * dt + beta * root * corr_z[:, 1]
        else:
            gw = _vol_of(model.g_fn, np.exp(log_w))
            vov_vol = model.vov_vol.average(t0, t1)
            log_v = log_v + (r - 0.5 * gw * gw) * dt + gw * root * corr_z[:, 1]
            log_w = log_w + (r - 0.5 * vov_vol * vov_vol) * dt + vov_vol * root * corr_z[:, 2]
        log_s = next_s
    return np.exp(log_s), np.exp(log_v), None if log_w is None else np.exp(log_w)


def _terminal_payoff(payoff: PayoffSpec, s, v, w) -> np.ndarray:
    states = (s, v) if w is None else (s, v, w)
    return np.asarray(payoff(*states), dtype=float)


def _partials_from_means(means, bumps, vov: bool):
    ds, dv, dw = bumps
    dx = (means[1] - means[2]) / (2.0 * ds)
    dy = (means[3] - means[4]) / (2.0 * dv)
    dz = (means[5] - means[6]) / (2.0 * dw) if vov else None
    return dx, dy, dz


def mc_price_and_partials(
    model: SvModel,
    payoff: PayoffSpec,
    pricing: McPriceModel,
    state: FactorState,
    t: float,
    horizon: float,
    settings: Settings | None = None,
) -> ClaimValues:
    """Discounted Q-expectation of G and its central-difference partials.

    All bumped states share the same normals; paths run in blocks with their own
    Philox streams and block sums are merged in block order.
    """
    settings = settings or get_settings()
    if not 0.0 <= t < horizon:
        raise DomainError("need 0 <= t < horizon", field="t")
    _check_state(model, state)
    chol = correlation_cholesky(model)
    n_factors = model.n_factors
    times = t + (horizon - t) * np.arange(pricing.n_steps + 1) / pricing.n_steps
    discount = math.exp(-model.rate.integral(t, horizon))
    spots, vols, vovs, bumps = _bumped_states(model, state, pricing)
    n_states = spots.shape[0]

    def run(block: PathBlock):
        rng = stream(pricing.seed, "multifactor.price", block.index)
        normals = (rng.standard_normal((block.size, n_factors)) for _ in range(pricing.n_steps))
        s_t, v_t, w_t = _evolve_q(model, chol, spots, vols, vovs, normals, times)
        values = discount * _terminal_payoff(payoff, s_t, v_t, w_t).reshape(n_states, block.size)
        sums = np.array([row.sum() for row in values])
        return sums, float(np.sum(values[0] * values[0]))

    blocks = path_blocks(pricing.n_paths, effective_path_block(settings))
    parts = run_ordered(run, blocks, effective_workers(settings))
    sums = np.zeros(n_states)
    sum_sq = 0.0
    for part_sums, part_sq in parts:
        sums = sums + part_sums
        sum_sq += part_sq
    n = pricing.n_paths
    means = sums / n
    variance = max(sum_sq / n - means[0] ** 2, 0.0) * n / (n - 1)
    dx, dy, dz = _partials_from_means(means, bumps, _is_vov(model))
    logger.debug("MC price %.6g (se %.3g) from %d paths x %d steps", means[0], math.sqrt(variance / n), n, pricing.n_steps)
    return ClaimValues(
        value=float(means[0]),
        dx=float(dx[0]),
        dy=float(dy[0]),
        dz=None if dz is None else float(dz[0]),
        std_error=math.sqrt(variance / n),
    )


class ClaimPricer(Protocol):
    """C(S, v[, w], t) and partials evaluated for arrays of path states at one time."""

    payoff: PayoffSpec

    def __call__(self, state: FactorState, t: float) -> ClaimValues: ...


@dataclass(frozen=True)
class BlackScholesClaimPricer:
    """Closed form for a degenerate model whose h is constant; dC/dv = 0."""

    payoff: PayoffSpec
    volatility: float
    rate: object
    horizon: float
    vov: bool = False

    @classmethod
    def for_model(cls, model: SvModel, payoff: PayoffSpec, horizon: float) -> "BlackScholesClaimPricer":
        if model.h_fn.kind != "constant":
            raise DomainError("closed-form claim pricing needs a constant h", field="h_fn")
        if not payoff.is_vanilla:
            raise DomainError("closed-form claim pricing needs a call or put", field="payoff.kind")
        return cls(payoff=payoff, volatility=model.h_fn.scale, rate=model.rate, horizon=horizon, vov=_is_vov(model))

    def __call__(self, state: FactorState, t: float) -> ClaimValues:
        tau = max(self.horizon - t, 0.0)
        rate = self.rate.average(t, self.horizon) if tau > 0 else self.rate(t)
        greeks = bs_price(state.spot, self.payoff.strike, self.volatility, rate, tau, self.payoff.kind)
        zeros = np.zeros_like(np.asarray(state.spot, dtype=float))
        return ClaimValues(
            value=greeks.value, dx=greeks.delta, dy=zeros, dz=zeros if self.vov else None
        )


@dataclass
class NestedMonteCarloPricer:
    """Revalues the claim at every hedge date from one shared inner normal panel.

    Inner paths step on the hedge grid; a valuation at t_k uses the panel's
    steps k..n-1, so the same normals serve every outer path and every bump.
    """

    model: SvModel
    payoff: PayoffSpec
    grid: TimeGrid
    pricing: McPriceModel = field(default_factory=McPriceModel)
    _panel: np.ndarray = field(init=False, repr=False)
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._chol = correlation_cholesky(self.model)
        rng = stream(self.pricing.seed, "multifactor.inner", 0)
        self._panel = rng.standard_normal((self.grid.n_steps, self.pricing.n_paths, self.model.n_factors))

    def __call__(self, state: FactorState, t: float) -> ClaimValues:
        k = int(round(t / self.grid.step))
        if abs(self.grid.time_at(k) - t) > 1e-9 * self.grid.horizon or not 0 <= k < self.grid.n_steps:
            raise DomainError("nested pricer only values on hedge dates before maturity", field="t")
        times = self.grid.times()[k:]
        discount = math.exp(-self.model.rate.integral(t, self.grid.horizon))
        spots, vols, vovs, bumps = _bumped_states(self.model, state, self.pricing)
        s_t, v_t, w_t = _evolve_q(self.model, self._chol, spots, vols, vovs, self._panel[k:], times)
        values = discount * _terminal_payoff(self.payoff, s_t, v_t, w_t)
        means = values.mean(axis=-1)
        dx, dy, dz = _partials_from_means(means, bumps, _is_vov(self.model))
        shape = np.shape(state.spot)
        return ClaimValues(
            value=means[0].reshape(shape),
            dx=dx.reshape(shape),
            dy=dy.reshape(shape),
            dz=None if dz is None else dz.reshape(shape),
        )


# --- physical-measure paths and hedging -----------------------------------------


def _simulate_p_paths(model: SvModel, grid: TimeGrid, n_paths: int, rng: np.random.Generator) -> FactorPaths:
    chol = correlation_cholesky(model)
    n = grid.n_steps
    vov = _is_vov(model)
    log_s = np.empty((n_paths, n + 1))
    log_v = np.empty((n_paths, n + 1))
    log_w = np.empty((n_paths, n + 1)) if vov else None
    log_s[:, 0] = math.log(model.spot)
    log_v[:, 0] = math.log(model.vol_state)
    if vov:
        log_w[:, 0] = math.log(model.vov_state)
    times = grid.times()
    for k in range(n):
        t0, t1 = float(times[k]), float(times[k + 1])
        dt = t1 - t0
        root = math.sqrt(dt)
        z = rng.standard_normal((n_paths, model.n_factors)) @ chol.T
        hv = _vol_of(model.h_fn, np.exp(log_v[:, k]))
        log_s[:, k + 1] = log_s[:, k] + (model.drift.average(t0, t1) - 0.5 * hv * hv) * dt + hv * root * z[:, 0]
        alpha = model.vol_drift.average(t0, t1)
        if vov:
            gw = _vol_of(model.g_fn, np.exp(log_w[:, k]))
            vov_vol = model.vov_vol.average(t0, t1)
            log_v[:, k + 1] = log_v[:, k] + (alpha - 0.5 * gw * gw) * dt + gw * root * z[:, 1]
            log_w[:, k + 1] = (
                log_w[:, k] + (model.vov_drift.average(t0, t1) - 0.5 * vov_vol * vov_vol) * dt + vov_vol * root * z[:, 2]
            )
        else:
            beta = model.vol_vol.average(t0, t1)
            log_v[:, k + 1] = log_v[:, k] + (alpha - 0.5 * beta * beta) * dt + beta * root * z[:, 1]
    return FactorPaths(np.exp(log_s), np.exp(log_v), None if log_w is None else np.exp(log_w))


def simulate_sv_paths(model: SvModel, grid: TimeGrid, n_paths: int, rng: np.random.Generator) -> FactorPaths:
    """Physical-measure log-Euler paths of (S, v), shape (n_paths, n_steps + 1)."""
    if _is_vov(model):
        raise ConfigError("use simulate_vov_paths for a vol-of-vol model", field="model")
    return _simulate_p_paths(model, grid, n_paths, rng)


def simulate_vov_paths(model: VovModel, grid: TimeGrid, n_paths: int, rng: np.random.Generator) -> FactorPaths:
    if not _is_vov(model):
        raise ConfigError("simulate_vov_paths needs a vol-of-vol model", field="model")
    return _simulate_p_paths(model, grid, n_paths, rng)


def _leg_vols(model: SvModel, state: FactorState, t: float):
    h = _vol_of(model.h_fn, state.vol)
    if _is_vov(model):
        return h, _vol_of(model.g_fn, state.vov), model.vov_vol(t)
    return h, model.vol_vol(t), None


def _simulate_block(model, pricer, grid, psi, block: PathBlock, seed, cap, keep_residuals, weights, literal_dc):
    n, h = grid.n_steps, grid.step
    vov = _is_vov(model)
    corr = correlation_matrix(model)
    rng = stream(seed, "multifactor.paths", block.index)
    paths = simulate_vov_paths(model, grid, block.size, rng) if vov else simulate_sv_paths(model, grid, block.size, rng)
    size = block.size
    times = grid.times()
    residual = np.empty((size, n))
    cond_mean = np.empty((size, n))
    cond_var = np.empty((size, n))
    keep = max(0, min(size, cap - block.start))
    names = ("t", "tau", "spot", "delta", "option", "portfolio", "residual", "accrual",
             "vol_state", "vov_state", "b_holding", "c_holding")
    cols = {name: np.empty((keep, n)) for name in names}
    zeros = np.zeros(size)

    def state_at(k: int) -> FactorState:
        return FactorState(paths.spot[:, k], paths.vol[:, k], paths.vov[:, k] if vov else None)

    claim = pricer(state_at(0), 0.0)
    for k in range(n):
        t0, t1 = float(times[k]), float(times[k + 1])
        state = state_at(k)
        s, v = state.spot, state.vol
        w = state.vov if vov else zeros
        mu = model.drift(t0)
        h_v, vol_v, vol_w = _leg_vols(model, state, t0)
        inv = 2.0 * psi[k] * s * h_v * h_v / mu if psi[k] > 0.0 else zeros
        if vov:
            a_adj, b_adj, c_adj = _vov_adjustments(model, state, inv, t0, literal_dc)
        else:
            a_adj, b_adj = _sv_adjustments(model, state, inv, t0)
            c_adj = zeros
        a = claim.dx + a_adj
        b = claim.dy + b_adj
        c = (claim.dz + c_adj) if vov else zeros
        option = np.asarray(claim.value, dtype=float)
        portfolio = a * s + b * v + c * w - option
        growth = math.exp(model.rate.integral(t0, t1)) - 1.0
        accrual = growth * portfolio

        next_state = state_at(k + 1)
        if k + 1 == n:
            option_next = _terminal_payoff(pricer.payoff, next_state.spot, next_state.vol, next_state.vov)
            next_claim = None
        else:
            next_claim = pricer(next_state, t1)
            option_next = np.asarray(next_claim.value, dtype=float)
        w_next = next_state.vov if vov else zeros
        u_k = a * (next_state.spot - s) + b * (next_state.vol - v) + c * (w_next - w) - (option_next - option) - accrual
        residual[:, k] = u_k

        # excess dollar holdings and their one-step law
        x, y, z = a_adj * s, b_adj * v, c_adj * w
        carry = growth + 1.0
        mean = x * (math.exp(model.drift.integral(t0, t1)) - carry) + y * (math.exp(model.vol_drift.integral(t0, t1)) - carry)
        loads = [x * h_v, y * vol_v]
        if vov:
            mean = mean + z * (math.exp(model.vov_drift.integral(t0, t1)) - carry)
            loads.append(z * vol_w)
        var = sum(corr[i, j] * loads[i] * loads[j] for i in range(len(loads)) for j in range(len(loads)))
        cond_mean[:, k] = mean
        cond_var[:, k] = var * h

        if keep:
            cols["t"][:, k] = t0
            cols["tau"][:, k] = grid.tau_at(k)
            for name, arr in (
                ("spot", s), ("delta", a), ("option", option), ("portfolio", portfolio),
                ("residual", u_k), ("accrual", accrual), ("vol_state", v), ("b_holding", b), ("c_holding", c),
            ):
                cols[name][:, k] = arr[:keep]
            cols["vov_state"][:, k] = w[:keep] if vov else np.nan
        claim = next_claim

    replication = residual @ weights
    tag = "vov" if vov else "sv"
    ledgers = [
        HedgeLedger(
            path=block.start + i,
            model=tag,
            columns={name: values[i].copy() for name, values in cols.items()},
            terminal_hedge_error=float(residual[i, -1]),
            replication_error=float(replication[i]),
        )
        for i in range(keep)
    ]
    return block_result(residual, cond_mean, cond_var, replication, ledgers, keep_residuals)


def simulate_hedge_multifactor(
    model: SvModel,
    pricer: ClaimPricer,
    schedule: RiskAversionSchedule,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    settings: Settings | None = None,
    keep_residuals: bool = False,
    literal_dc: bool = False,
) -> HedgeRun:
    """Hedge the short claim with S, v (and w) under the physical dynamics.

    R_t is set from psi(tau) through the asset leg, R = mu / (2 psi S h(v)^2),
    for every leg.
    """
    settings = settings or get_settings()
    started = time.perf_counter()
    correlation_cholesky(model)
    psi = np.asarray(psi_eval(schedule, np.minimum(grid.taus()[:-1], schedule.horizon)), dtype=float)
    if np.any(psi > 0) and not np.all(model.drift.knot_values() > 0):
        raise DomainError("drift must be positive to map psi to a risk aversion", field="drift")
    weights = replication_weights(grid, model.rate)
    blocks = path_blocks(n_paths, effective_path_block(settings))
    results = run_ordered(
        lambda block: _simulate_block(
            model, pricer, grid, psi, block, seed, settings.ledger_path_cap, keep_residuals, weights, literal_dc
        ),
        blocks,
        effective_workers(settings),
    )
    start_state = initial_state(model)
    premium = float(np.asarray(pricer(FactorState(*(None if x is None else np.array([x]) for x in start_state)), 0.0).value)[0])
    extra: dict = {"pricer": type(pricer).__name__, "literal_dc": literal_dc}
    if not _is_vov(model) and psi[0] > 0:
        h0 = float(_vol_of(model.h_fn, model.vol_state))
        tau0 = min(grid.tau_at(0), schedule.horizon)
        risk0 = schedule_risk_aversion(schedule, tau0, model.spot, model.drift(0.0), h0)
        extra["risk_premium_t0"] = sv_risk_premium(model, start_state, risk0, 0.0)
        extra["premium_drift_t0"] = sv_premium_drift(model, start_state, risk0, 0.0)
    run = assemble_run(
        model="vov" if _is_vov(model) else "sv",
        blocks=results,
        grid=grid,
        schedule=schedule,
        premium=premium,
        seed=seed,
        extra=extra,
    )
    logger.debug("Multifactor hedge finished in %.2fs", time.perf_counter() - started)
    return run

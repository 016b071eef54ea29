"""Two-asset jump-diffusion engine: Q pricing, risk-neutral deltas, mean-variance corrections and hedging."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Protocol

import numpy as np

from quadhedge.app.core.config import Settings, effective_path_block, effective_workers, get_settings
from quadhedge.app.core.errors import ColinearRiskLoadingsError, DomainError
from quadhedge.app.schemas.jump import (
    SPANNING_EPS,
    JumpClaimData,
    JumpDeltas,
    JumpModel,
    JumpPaths,
    JumpState,
)
from quadhedge.app.schemas.ledger import HedgeLedger
from quadhedge.app.schemas.market import PayoffSpec, TimeGrid
from quadhedge.app.schemas.multifactor import McPriceModel
from quadhedge.app.schemas.risk import RiskAversion, RiskAversionSchedule
from quadhedge.app.services.ledger import HedgeRun, assemble_run, block_result, replication_weights
from quadhedge.app.services.risk_aversion import inverse_absolute, psi_eval, relative_from_absolute
from quadhedge.app.services.rng import PathBlock, path_blocks, run_ordered, stream

logger = logging.getLogger(__name__)

# relative gap above which printed corrections and the optimum are reported as different
ORACLE_RTOL = 1e-9


class JumpCoefficients(NamedTuple):
    mu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    intensity: float
    rate: float


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def coefficients(model: JumpModel, t: float) -> JumpCoefficients:
    return JumpCoefficients(
        mu=np.array([model.drift1(t), model.drift2(t)]),
        sigma=np.array([model.vol1(t), model.vol2(t)]),
        gamma=np.array([model.jump1(t), model.jump2(t)]),
        intensity=float(model.intensity(t)),
        rate=float(model.rate(t)),
    )


def check_spanning(model: JumpModel, t: float) -> float:
    """sigma1 gamma2 - gamma1 sigma2 at t; too small means the two assets cannot span B and N."""
    c = coefficients(model, t)
    det = c.sigma[0] * c.gamma[1] - c.gamma[0] * c.sigma[1]
    if abs(det) < SPANNING_EPS:
        raise ColinearRiskLoadingsError(
            f"co-linear risk loadings at t={t:.6g}: sigma1*gamma2 - gamma1*sigma2 = {det:.3g}", field="jump1"
        )
    return float(det)


def check_spanning_all(model: JumpModel) -> None:
    for t in model.knot_times():
        check_spanning(model, t)


def _check_state(state: JumpState) -> None:
    for name, value in (("spot1", state.spot1), ("spot2", state.spot2)):
        arr = np.asarray(value, dtype=float)
        if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
            raise DomainError(f"{name} must be positive and finite", field=name)


def displaced_state(model: JumpModel, state: JumpState, t: float) -> JumpState:
    c = coefficients(model, t)
    x1 = np.asarray(state.spot1, dtype=float)
    x2 = np.asarray(state.spot2, dtype=float)
    if model.displacement == "additive":
        return JumpState(x1 + c.gamma[0], x2 + c.gamma[1])
    return JumpState(x1 * (1.0 + c.gamma[0]), x2 * (1.0 + c.gamma[1]))


def _piecewise_integral(model: JumpModel, fn: Callable[[float], float], t0: float, t1: float) -> float:
    if t1 <= t0:
        return 0.0
    cuts = [t0] + [t for t in model.knot_times() if t0 < t < t1] + [t1]
    return float(sum(fn(a) * (b - a) for a, b in zip(cuts, cuts[1:])))


# --- claims ----------------------------------------------------------------------


class TwoAssetClaim(Protocol):
    payoff: PayoffSpec

    def evaluate(self, state: JumpState, t: float) -> JumpClaimData: ...


@dataclass(frozen=True)
class AnalyticClaim:
    """Claim with a known value function; partials supplied alongside."""

    model: JumpModel
    payoff: PayoffSpec
    value_fn: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    dx1_fn: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    dx2_fn: Callable[[np.ndarray, np.ndarray, float], np.ndarray]

    def evaluate(self, state: JumpState, t: float) -> JumpClaimData:
        x1 = np.asarray(state.spot1, dtype=float)
        x2 = np.asarray(state.spot2, dtype=float)
        jumped = displaced_state(self.model, state, t)
        return JumpClaimData(
            value=_scalar(self.value_fn(x1, x2, t)),
            dx1=_scalar(self.dx1_fn(x1, x2, t)),
            dx2=_scalar(self.dx2_fn(x1, x2, t)),
            displaced=_scalar(self.value_fn(np.asarray(jumped.spot1), np.asarray(jumped.spot2), t)),
        )


def linear_claim(model: JumpModel, w1: float = 1.0, w2: float = 0.0) -> AnalyticClaim:
    """w1 S1_T + w2 S2_T; worth w1 x1 + w2 x2 at every t because discounted prices are Q-martingales."""
    if w1 < 0 or w2 < 0:
        raise DomainError("linear claim weights must be non-negative", field="w1")
    payoff = PayoffSpec(kind="custom", label=f"linear:{w1!r},{w2!r}", terminal_fn=lambda x1, x2: w1 * np.asarray(x1) + w2 * np.asarray(x2))
    return AnalyticClaim(
        model=model,
        payoff=payoff,
        value_fn=lambda x1, x2, t: w1 * x1 + w2 * x2,
        dx1_fn=lambda x1, x2, t: np.full_like(x1, w1, dtype=float),
        dx2_fn=lambda x1, x2, t: np.full_like(x2, w2, dtype=float),
    )


def product_claim(model: JumpModel, horizon: float) -> AnalyticClaim:
    """S1_T * S2_T, worth x1 x2 exp(int_t^T (r + sigma1 sigma2 + lambda gamma1 gamma2) ds)."""

    def rate_of_growth(s: float) -> float:
        c = coefficients(model, s)
        return c.rate + c.sigma[0] * c.sigma[1] + c.intensity * c.gamma[0] * c.gamma[1]

    def growth(t: float) -> float:
        return math.exp(_piecewise_integral(model, rate_of_growth, t, horizon))

    payoff = PayoffSpec(kind="custom", label="product", terminal_fn=lambda x1, x2: np.asarray(x1) * np.asarray(x2))
    return AnalyticClaim(
        model=model,
        payoff=payoff,
        value_fn=lambda x1, x2, t: x1 * x2 * growth(t),
        dx1_fn=lambda x1, x2, t: x2 * growth(t),
        dx2_fn=lambda x1, x2, t: x1 * growth(t),
    )


# --- risk-neutral Monte Carlo ------------------------------------------------------


def _draws(model: JumpModel, rng: np.random.Generator, size: int, times: np.ndarray):
    """Normals and thinned Poisson counts per sub-step, drawn lazily in step order."""
    lam_max = float(np.max(model.intensity.knot_values()))
    for i in range(len(times) - 1):
        t0, t1 = float(times[i]), float(times[i + 1])
        dt = t1 - t0
        z = rng.standard_normal(size)
        candidates = rng.poisson(lam_max * dt, size)
        accept = min(model.intensity.average(t0, t1) / lam_max, 1.0)
        yield z, rng.binomial(candidates, accept)


def _evolve_q(model: JumpModel, s1, s2, draws, times):
    """Log-Euler under Q with compensated jumps; (m, P) inputs become (m, P, n)."""
    log1 = np.log(s1)[..., None]
    log2 = np.log(s2)[..., None]
    for i, (z, dn) in enumerate(draws):
        t0, t1 = float(times[i]), float(times[i + 1])
        dt = t1 - t0
        root = math.sqrt(dt)
        c = coefficients(model, t0)
        r = model.rate.average(t0, t1)
        lam = model.intensity.average(t0, t1)
        log1 = log1 + (r - lam * c.gamma[0] - 0.5 * c.sigma[0] ** 2) * dt + c.sigma[0] * root * z + dn * math.log1p(c.gamma[0])
        log2 = log2 + (r - lam * c.gamma[1] - 0.5 * c.sigma[1] ** 2) * dt + c.sigma[1] * root * z + dn * math.log1p(c.gamma[1])
    return np.exp(log1), np.exp(log2)


def _stacked_states(model: JumpModel, state: JumpState, pricing: McPriceModel, t: float):
    x1 = np.atleast_1d(np.asarray(state.spot1, dtype=float))
    x2 = np.atleast_1d(np.asarray(state.spot2, dtype=float))
    d1 = pricing.spot_bump * x1
    d2 = pricing.spot_bump * x2
    jumped = displaced_state(model, JumpState(x1, x2), t)
    if np.any(jumped.spot1 <= 0) or np.any(jumped.spot2 <= 0):
        raise DomainError("displaced state leaves the positive orthant", field="displacement")
    s1 = np.stack([x1, x1 + d1, x1 - d1, x1, x1, jumped.spot1])
    s2 = np.stack([x2, x2, x2, x2 + d2, x2 - d2, jumped.spot2])
    return s1, s2, (d1, d2)


def _claim_from_means(means, bumps) -> tuple:
    d1, d2 = bumps
    return means[0], (means[1] - means[2]) / (2.0 * d1), (means[3] - means[4]) / (2.0 * d2), means[5]


def _check_horizon(model: JumpModel, t: float, horizon: float) -> None:
    if not 0.0 <= t < horizon:
        raise DomainError("need 0 <= t < horizon", field="t")
    if horizon > model.maturity2:
        raise DomainError("asset 2 must outlive the claim (T2 > T)", field="maturity2")


def jump_price(
    model: JumpModel,
    payoff: PayoffSpec,
    pricing: McPriceModel,
    state: JumpState,
    t: float,
    horizon: float,
    settings: Settings | None = None,
) -> JumpClaimData:
    """E^Q of the discounted payoff with CRN bumps and a revaluation at the post-jump state."""
    settings = settings or get_settings()
    _check_horizon(model, t, horizon)
    check_spanning_all(model)
    _check_state(state)
    times = t + (horizon - t) * np.arange(pricing.n_steps + 1) / pricing.n_steps
    discount = math.exp(-model.rate.integral(t, horizon))
    s1, s2, bumps = _stacked_states(model, JumpState(float(state.spot1), float(state.spot2)), pricing, t)
    n_states = s1.shape[0]

    def run(block: PathBlock):
        rng = stream(pricing.seed, "jump.price", block.index)
        end1, end2 = _evolve_q(model, s1, s2, _draws(model, rng, block.size, times), times)
        values = discount * np.asarray(payoff(end1, end2), dtype=float).reshape(n_states, block.size)
        return np.array([row.sum() for row in values]), float(np.sum(values[0] * values[0]))

    parts = run_ordered(run, path_blocks(pricing.n_paths, effective_path_block(settings)), effective_workers(settings))
    sums = np.zeros(n_states)
    sum_sq = 0.0
    for part_sums, part_sq in parts:
        sums = sums + part_sums
        sum_sq += part_sq
    n = pricing.n_paths
    means = sums / n
    variance = max(sum_sq / n - means[0] ** 2, 0.0) * n / (n - 1)
    value, dx1, dx2, displaced = _claim_from_means(means, bumps)
    return JumpClaimData(
        value=float(value),
        dx1=float(dx1[0]),
        dx2=float(dx2[0]),
        displaced=float(displaced),
        std_error=math.sqrt(variance / n),
    )


@dataclass(frozen=True)
class MonteCarloClaim:
    """Claim valued by Q simulation; every evaluation reuses the same inner draws."""

    model: JumpModel
    payoff: PayoffSpec
    horizon: float
    pricing: McPriceModel = field(default_factory=McPriceModel)

    def evaluate(self, state: JumpState, t: float) -> JumpClaimData:
        _check_horizon(self.model, t, self.horizon)
        shape = np.shape(state.spot1)
        times = t + (self.horizon - t) * np.arange(self.pricing.n_steps + 1) / self.pricing.n_steps
        discount = math.exp(-self.model.rate.integral(t, self.horizon))
        s1, s2, bumps = _stacked_states(self.model, state, self.pricing, t)
        rng = stream(self.pricing.seed, "jump.inner", 0)
        end1, end2 = _evolve_q(self.model, s1, s2, _draws(self.model, rng, self.pricing.n_paths, times), times)
        means = (discount * np.asarray(self.payoff(end1, end2), dtype=float)).mean(axis=-1)
        value, dx1, dx2, displaced = _claim_from_means(means, bumps)
        return JumpClaimData(
            value=_scalar(value.reshape(shape)),
            dx1=_scalar(dx1.reshape(shape)),
            dx2=_scalar(dx2.reshape(shape)),
            displaced=_scalar(displaced.reshape(shape)),
        )


# --- deltas ----------------------------------------------------------------------------


def rn_deltas_jump(model: JumpModel, claim: JumpClaimData, state: JumpState, t: float):
    """Holdings that cancel both the dB and the dN coefficient of dP."""
    det = check_spanning(model, t)
    c = coefficients(model, t)
    x1 = np.asarray(state.spot1, dtype=float)
    x2 = np.asarray(state.spot2, dtype=float)
    brownian = np.asarray(claim.dx1) * c.sigma[0] * x1 + np.asarray(claim.dx2) * c.sigma[1] * x2
    jump = np.asarray(claim.displaced) - np.asarray(claim.value)
    delta1 = (c.gamma[1] * brownian - c.sigma[1] * jump) / (x1 * det)
    delta2 = (c.sigma[0] * jump - c.gamma[0] * brownian) / (x2 * det)
    return _scalar(delta1), _scalar(delta2)


def risk_coefficients(model: JumpModel, claim: JumpClaimData, deltas, state: JumpState, t: float):
    """(dB coefficient, dN coefficient) of Delta1 dS1 + Delta2 dS2 - df."""
    c = coefficients(model, t)
    x1 = np.asarray(state.spot1, dtype=float)
    x2 = np.asarray(state.spot2, dtype=float)
    d1, d2 = deltas
    brownian = d1 * c.sigma[0] * x1 + d2 * c.sigma[1] * x2 - (
        np.asarray(claim.dx1) * c.sigma[0] * x1 + np.asarray(claim.dx2) * c.sigma[1] * x2
    )
    jump = d1 * c.gamma[0] * x1 + d2 * c.gamma[1] * x2 - (np.asarray(claim.displaced) - np.asarray(claim.value))
    return _scalar(brownian), _scalar(jump)


def _optimal_direction(model: JumpModel, t: float) -> np.ndarray:
    """M^-1 (mu + lambda gamma) with M = sigma sigma' + lambda gamma gamma'."""
    c = coefficients(model, t)
    if not c.intensity > 0:
        raise DomainError("jump intensity must be positive", field="intensity")
    m = np.outer(c.sigma, c.sigma) + c.intensity * np.outer(c.gamma, c.gamma)
    return np.linalg.solve(m, c.mu + c.intensity * c.gamma)


def printed_corrections(model: JumpModel, state: JumpState, risk: RiskAversion | float, t: float):
    """E1 and E2 evaluated term by term as displayed, with 1/(R S_j) in front."""
    det = check_spanning(model, t)
    c = coefficients(model, t)
    inv = inverse_absolute(risk)
    (mu1, mu2), (s1, s2), (g1, g2), lam = c.mu, c.sigma, c.gamma, c.intensity
    if not lam > 0:
        raise DomainError("jump intensity must be positive", field="intensity")
    flipped = g1 * s2 - g2 * s1
    bracket1 = (
        s2 * (mu1 * s2 - mu2 * s1) / (lam * det**2)
        - s2 / det
        + g2 * (mu1 * g2 - mu2 * g1) / det**2
    )
    bracket2 = (
        s1 * (mu2 * s1 - mu1 * s2) / (lam * flipped**2)
        + lam * s1 * (s1 * g2 - s2 * g1) / (lam * flipped**2)
        + lam * g1 * (mu2 * g1 - mu1 * g2) / (lam * flipped**2)
    )
    e1 = inv * bracket1 / np.asarray(state.spot1, dtype=float)
    e2 = inv * bracket2 / np.asarray(state.spot2, dtype=float)
    return _scalar(e1), _scalar(e2)


def _relative(risk: RiskAversion | float) -> float:
    if isinstance(risk, RiskAversion):
        return risk.relative
    return relative_from_absolute(risk)


def one_step_moments(model: JumpModel, claim: JumpClaimData, deltas, state: JumpState, t: float, h: float):
    """Mean and variance of dP over [t, t + h] given the holdings; the risk-neutral part accrues at r."""
    c = coefficients(model, t)
    rn1, rn2 = rn_deltas_jump(model, claim, state, t)
    x1 = np.asarray(state.spot1, dtype=float)
    x2 = np.asarray(state.spot2, dtype=float)
    y1 = (deltas[0] - rn1) * x1
    y2 = (deltas[1] - rn2) * x2
    riskless = rn1 * x1 + rn2 * x2 - np.asarray(claim.value)
    drift = y1 * (c.mu[0] + c.intensity * c.gamma[0]) + y2 * (c.mu[1] + c.intensity * c.gamma[1])
    mean = (drift + c.rate * riskless) * h
    var = h * (y1 * c.sigma[0] + y2 * c.sigma[1]) ** 2 + c.intensity * h * (y1 * c.gamma[0] + y2 * c.gamma[1]) ** 2
    return _scalar(mean), _scalar(var)


def one_step_utility(
    model: JumpModel,
    claim: JumpClaimData,
    deltas,
    state: JumpState,
    risk: RiskAversion | float,
    t: float,
    h: float,
) -> float:
    """(1 - C) E(dP) - C var(dP)."""
    mean, var = one_step_moments(model, claim, deltas, state, t, h)
    relative = _relative(risk)
    return _scalar((1.0 - relative) * mean - relative * var)


def optimal_deltas_jump(
    model: JumpModel,
    claim: JumpClaimData,
    state: JumpState,
    risk: RiskAversion | float,
    t: float,
) -> JumpDeltas:
    """Risk-neutral deltas plus the quadratic-utility optimum; the printed corrections are kept for comparison."""
    _check_state(state)
    rn1, rn2 = rn_deltas_jump(model, claim, state, t)
    inv = inverse_absolute(risk)
    y = 0.5 * inv * _optimal_direction(model, t)
    oracle = (float(y[0] / float(state.spot1)), float(y[1] / float(state.spot2)))
    printed = printed_corrections(model, state, risk, t)
    scale = max(abs(oracle[0]), abs(oracle[1]), 1e-300)
    if max(abs(printed[0] - oracle[0]), abs(printed[1] - oracle[1])) > ORACLE_RTOL * scale:
        logger.warning(
            "Printed jump corrections (%.6g, %.6g) differ from the utility optimum (%.6g, %.6g); using the optimum",
            printed[0],
            printed[1],
            oracle[0],
            oracle[1],
        )
    return JumpDeltas(
        delta1=float(rn1 + oracle[0]),
        delta2=float(rn2 + oracle[1]),
        rn_delta1=float(rn1),
        rn_delta2=float(rn2),
        oracle=oracle,
        printed=printed,
    )


def oracle_check(model: JumpModel, state: JumpState, t: float, risk: float = 1.0) -> dict:
    """Printed corrections against the utility optimum at a reference risk aversion."""
    y = 0.5 * inverse_absolute(risk) * _optimal_direction(model, t)
    oracle = [float(y[0] / state.spot1), float(y[1] / state.spot2)]
    printed = [float(v) for v in printed_corrections(model, state, risk, t)]
    ratio = [p / o if o != 0 else math.nan for p, o in zip(printed, oracle)]
    return {
        "risk_aversion": risk,
        "printed": printed,
        "oracle": oracle,
        "ratio": ratio,
        "max_abs_diff": max(abs(p - o) for p, o in zip(printed, oracle)),
        "used": "oracle",
    }


# --- physical paths and hedging ---------------------------------------------------------


def simulate_jump_paths(model: JumpModel, grid: TimeGrid, n_paths: int, rng: np.random.Generator) -> JumpPaths:
    """P-dynamics paths with uncompensated jumps; ``jumps`` counts arrivals per step."""
    n = grid.n_steps
    times = grid.times()
    log1 = np.empty((n_paths, n + 1))
    log2 = np.empty((n_paths, n + 1))
    counts = np.empty((n_paths, n), dtype=np.int64)
    log1[:, 0] = math.log(model.spot1)
    log2[:, 0] = math.log(model.spot2)
    for k, (z, dn) in enumerate(_draws(model, rng, n_paths, times)):
        t0, t1 = float(times[k]), float(times[k + 1])
        dt = t1 - t0
        root = math.sqrt(dt)
        c = coefficients(model, t0)
        mu1, mu2 = model.drift1.average(t0, t1), model.drift2.average(t0, t1)
        log1[:, k + 1] = log1[:, k] + (mu1 - 0.5 * c.sigma[0] ** 2) * dt + c.sigma[0] * root * z + dn * math.log1p(c.gamma[0])
        log2[:, k + 1] = log2[:, k] + (mu2 - 0.5 * c.sigma[1] ** 2) * dt + c.sigma[1] * root * z + dn * math.log1p(c.gamma[1])
        counts[:, k] = dn
    return JumpPaths(np.exp(log1), np.exp(log2), counts)


def _simulate_block(model, claim, grid, psi, block: PathBlock, seed, cap, keep_residuals, weights):
    n, h = grid.n_steps, grid.step
    times = grid.times()
    paths = simulate_jump_paths(model, grid, block.size, stream(seed, "jump.paths", block.index))
    size = block.size
    residual = np.empty((size, n))
    cond_mean = np.empty((size, n))
    cond_var = np.empty((size, n))
    keep = max(0, min(size, cap - block.start))
    names = ("t", "tau", "spot", "delta", "option", "portfolio", "residual", "accrual", "spot2", "delta2", "jumps_count")
    cols = {name: np.empty((keep, n)) for name in names}
    zeros = np.zeros(size)

    current = claim.evaluate(JumpState(paths.spot1[:, 0], paths.spot2[:, 0]), 0.0)
    for k in range(n):
        t0, t1 = float(times[k]), float(times[k + 1])
        x1, x2 = paths.spot1[:, k], paths.spot2[:, k]
        state = JumpState(x1, x2)
        c = coefficients(model, t0)
        rn1, rn2 = rn_deltas_jump(model, current, state, t0)
        inv = 2.0 * psi[k] * x1 * c.sigma[0] ** 2 / c.mu[0] if psi[k] > 0.0 else zeros
        direction = _optimal_direction(model, t0)
        y1 = 0.5 * inv * direction[0]
        y2 = 0.5 * inv * direction[1]
        delta1 = rn1 + y1 / x1
        delta2 = rn2 + y2 / x2
        option = np.asarray(current.value, dtype=float)
        portfolio = delta1 * x1 + delta2 * x2 - option
        growth = math.exp(model.rate.integral(t0, t1)) - 1.0
        accrual = growth * portfolio

        n1, n2 = paths.spot1[:, k + 1], paths.spot2[:, k + 1]
        if k + 1 == n:
            option_next = np.asarray(claim.payoff(n1, n2), dtype=float)
            nxt = None
        else:
            nxt = claim.evaluate(JumpState(n1, n2), t1)
            option_next = np.asarray(nxt.value, dtype=float)
        u_k = delta1 * (n1 - x1) + delta2 * (n2 - x2) - (option_next - option) - accrual
        residual[:, k] = u_k

        lam_int = model.intensity.integral(t0, t1)
        carry = growth + 1.0
        mean1 = math.exp(model.drift1.integral(t0, t1) + c.gamma[0] * lam_int) - carry
        mean2 = math.exp(model.drift2.integral(t0, t1) + c.gamma[1] * lam_int) - carry
        cond_mean[:, k] = y1 * mean1 + y2 * mean2
        cond_var[:, k] = h * (y1 * c.sigma[0] + y2 * c.sigma[1]) ** 2 + lam_int * (y1 * c.gamma[0] + y2 * c.gamma[1]) ** 2

        if keep:
            cols["t"][:, k] = t0
            cols["tau"][:, k] = grid.tau_at(k)
            for name, arr in (
                ("spot", x1), ("delta", delta1), ("option", option), ("portfolio", portfolio),
                ("residual", u_k), ("accrual", accrual), ("spot2", x2), ("delta2", delta2),
                ("jumps_count", paths.jumps[:, k]),
            ):
                cols[name][:, k] = arr[:keep]
        current = nxt

    replication = residual @ weights
    ledgers = [
        HedgeLedger(
            path=block.start + i,
            model="jump",
            columns={name: values[i].copy() for name, values in cols.items()},
            terminal_hedge_error=float(residual[i, -1]),
            replication_error=float(replication[i]),
        )
        for i in range(keep)
    ]
    return block_result(residual, cond_mean, cond_var, replication, ledgers, keep_residuals)


def simulate_hedge_jump(
    model: JumpModel,
    claim: TwoAssetClaim,
    schedule: RiskAversionSchedule,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    settings: Settings | None = None,
    keep_residuals: bool = False,
) -> HedgeRun:
    """Hedge the short claim with both assets; R from psi through asset 1, R = mu1 / (2 psi S1 sigma1^2)."""
    settings = settings or get_settings()
    started = time.perf_counter()
    check_spanning_all(model)
    if grid.horizon > model.maturity2:
        raise DomainError("asset 2 must outlive the claim (T2 > T)", field="maturity2")
    psi = np.asarray(psi_eval(schedule, np.minimum(grid.taus()[:-1], schedule.horizon)), dtype=float)
    if np.any(psi > 0) and not np.all(model.drift1.knot_values() > 0):
        raise DomainError("drift1 must be positive to map psi to a risk aversion", field="drift1")
    weights = replication_weights(grid, model.rate)
    results = run_ordered(
        lambda block: _simulate_block(model, claim, grid, psi, block, seed, settings.ledger_path_cap, keep_residuals, weights),
        path_blocks(n_paths, effective_path_block(settings)),
        effective_workers(settings),
    )
    start = JumpState(model.spot1, model.spot2)
    premium = float(np.asarray(claim.evaluate(JumpState(np.array([model.spot1]), np.array([model.spot2])), 0.0).value)[0])
    check = oracle_check(model, start, 0.0)
    if check["max_abs_diff"] > ORACLE_RTOL * max(abs(v) for v in check["oracle"]):
        logger.warning(
            "Printed jump corrections differ from the utility optimum by ratio (%.6g, %.6g); hedging with the optimum",
            check["ratio"][0],
            check["ratio"][1],
        )
    run = assemble_run(
        model="jump",
        blocks=results,
        grid=grid,
        schedule=schedule,
        premium=premium,
        seed=seed,
        extra={"claim": claim.payoff.label or claim.payoff.kind, "displacement": model.displacement, "oracle_check": check},
    )
    logger.debug("Jump hedge finished in %.2fs", time.perf_counter() - started)
    return run

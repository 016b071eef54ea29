"""psi schedules and the psi <-> absolute risk aversion inversion."""

from __future__ import annotations

import math

import numpy as np

from quadhedge.app.core.errors import DomainError
from quadhedge.app.schemas.risk import RiskAversion, RiskAversionSchedule

# slack for tau values produced by grid arithmetic
_TAU_EPS = 1e-12


def _check_tau(schedule: RiskAversionSchedule, tau) -> np.ndarray:
    arr = np.asarray(tau, dtype=float)
    limit = schedule.horizon * (1.0 + _TAU_EPS)
    if np.any(~np.isfinite(arr)) or np.any(arr < -_TAU_EPS) or np.any(arr > limit):
        raise DomainError(
            f"tau must lie in [0, {schedule.horizon}] for this schedule", field="tau"
        )
    return np.clip(arr, 0.0, schedule.horizon)


def psi_eval(schedule: RiskAversionSchedule, tau):
    """psi(tau) for a scalar or an array of times to maturity."""
    arr = _check_tau(schedule, tau)
    g = schedule.gamma
    if schedule.family == "zero" or g == 0.0:
        out = np.zeros_like(arr)
    elif schedule.family == "exponential":
        out = g - g * np.exp(-g * arr / schedule.horizon)
    else:
        a = schedule.delay
        out = np.where(arr <= a, 0.0, a - a * np.exp(-g * (arr - a)))
    return float(out) if np.ndim(out) == 0 else out


def psi_small_tau_asymptotic(schedule: RiskAversionSchedule, tau):
    """First-order expansion gamma^2 * tau / T of the exponential family."""
    if schedule.family != "exponential":
        raise DomainError("small-tau asymptotic is defined for the exponential family", field="family")
    arr = np.asarray(tau, dtype=float)
    if np.any(arr < 0):
        raise DomainError("tau must be non-negative", field="tau")
    out = schedule.gamma**2 * arr / schedule.horizon
    return float(out) if np.ndim(out) == 0 else out


def relative_from_absolute(absolute: float) -> float:
    if math.isinf(absolute):
        return 1.0
    return absolute / (1.0 + absolute)


def absolute_from_relative(relative: float) -> float:
    if not 0.0 <= relative <= 1.0:
        raise DomainError("relative risk aversion must lie in [0, 1]", field="relative")
    if relative == 1.0:
        return math.inf
    return relative / (1.0 - relative)


def risk_aversion_from_psi(psi: float, spot: float, drift: float, volatility: float) -> RiskAversion:
    """R = mu / (2 psi S sigma^2); psi = 0 is infinite risk aversion."""
    if psi < 0 or not math.isfinite(psi):
        raise DomainError("psi must be a finite non-negative number", field="psi")
    if spot <= 0:
        raise DomainError("spot must be positive", field="spot")
    if volatility <= 0:
        raise DomainError("volatility must be positive", field="volatility")
    if psi == 0.0:
        return RiskAversion.infinite()
    absolute = drift / (2.0 * psi * spot * volatility**2)
    if absolute <= 0:
        raise DomainError("drift must be positive to invert psi", field="drift")
    return RiskAversion(absolute=absolute, relative=relative_from_absolute(absolute))


def inverse_absolute(risk: RiskAversion | float) -> float:
    """1/R with 1/inf = 0; every adjustment term is linear in it."""
    if isinstance(risk, RiskAversion):
        return risk.inverse
    if risk <= 0:
        raise DomainError("absolute risk aversion must be positive", field="R")
    return 0.0 if math.isinf(risk) else 1.0 / risk


def schedule_risk_aversion(
    schedule: RiskAversionSchedule, tau: float, spot: float, drift: float, volatility: float
) -> RiskAversion:
    return risk_aversion_from_psi(psi_eval(schedule, tau), spot, drift, volatility)

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from quadhedge.app.schemas.market import ParamSchedule, StateFunction

# guards on the 1/(1 - rho^2) and 1/D factors
RHO_GUARD = 0.999
DETERMINANT_FLOOR = 1e-6


class SvModel(BaseModel):
    """dS = mu S dt + h(v) S dB, dv = alpha v dt + beta v dB^v, corr(B, B^v) = rho."""

    model_config = ConfigDict(frozen=True)

    drift: ParamSchedule
    vol_drift: ParamSchedule
    vol_vol: ParamSchedule
    rate: ParamSchedule
    rho: float = Field(0.0, gt=-1, lt=1)
    h_fn: StateFunction = StateFunction()
    spot: float = Field(gt=0)
    vol_state: float = Field(gt=0)

    @property
    def n_factors(self) -> int:
        return 2


class VovModel(SvModel):
    """Adds dw = gamma w dt + delta w dB^w; the volatility of v becomes g(w).

    ``rho`` is corr(B, B^v), ``rho_w`` corr(B, B^w) and ``rho_vw`` corr(B^v, B^w).
    ``vol_vol`` is unused: g(w) takes its place.
    """

    vol_vol: ParamSchedule = ParamSchedule.of(0.0)
    vov_drift: ParamSchedule
    vov_vol: ParamSchedule
    g_fn: StateFunction = StateFunction()
    rho_w: float = Field(0.0, gt=-1, lt=1)
    rho_vw: float = Field(0.0, gt=-1, lt=1)
    vov_state: float = Field(gt=0)

    @property
    def n_factors(self) -> int:
        return 3


class McPriceModel(BaseModel):
    """Risk-neutral Monte-Carlo settings; bumps are relative to the state."""

    model_config = ConfigDict(frozen=True)

    n_paths: int = Field(20_000, gt=1)
    n_steps: int = Field(50, gt=0)
    seed: int = Field(0, ge=0)
    spot_bump: float = 0.01
    vol_bump: float = 0.01
    vov_bump: float = 0.01


class FactorState(NamedTuple):
    spot: np.ndarray | float
    vol: np.ndarray | float
    vov: np.ndarray | float | None = None


class ClaimValues(NamedTuple):
    value: np.ndarray | float
    dx: np.ndarray | float
    dy: np.ndarray | float
    dz: np.ndarray | float | None = None
    std_error: float | None = None


class FactorPaths(NamedTuple):
    spot: np.ndarray
    vol: np.ndarray
    vov: np.ndarray | None

from __future__ import annotations

from typing import Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from quadhedge.app.schemas.market import ParamSchedule

SPANNING_EPS = 1e-8


class JumpModel(BaseModel):
    """Two assets on one Brownian motion B and one Poisson process N:

    dS_j / S_j- = mu_j dt + sigma_j dB + gamma_j dN,  j = 1, 2.
    """

    model_config = ConfigDict(frozen=True)

    drift1: ParamSchedule
    drift2: ParamSchedule
    vol1: ParamSchedule
    vol2: ParamSchedule
    jump1: ParamSchedule
    jump2: ParamSchedule
    intensity: ParamSchedule
    rate: ParamSchedule
    spot1: float = Field(gt=0)
    spot2: float = Field(gt=0)
    maturity2: float = Field(gt=0)
    displacement: Literal["proportional", "additive"] = "proportional"

    @model_validator(mode="after")
    def _check_schedules(self) -> "JumpModel":
        for name in ("vol1", "vol2", "intensity"):
            if not np.all(getattr(self, name).knot_values() > 0):
                raise ValueError(f"{name} must be positive at every knot")
        for name in ("jump1", "jump2"):
            if not np.all(getattr(self, name).knot_values() > -1):
                raise ValueError(f"{name} must exceed -1 so prices stay positive")
        return self

    def knot_times(self) -> list[float]:
        schedules = (self.drift1, self.drift2, self.vol1, self.vol2, self.jump1, self.jump2, self.intensity, self.rate)
        return sorted({t for s in schedules for t, _ in s.knots})


class JumpState(NamedTuple):
    spot1: np.ndarray | float
    spot2: np.ndarray | float


class JumpClaimData(NamedTuple):
    """V, dV/dx1, dV/dx2 and V at the post-jump state, all at the same (x1, x2, t)."""

    value: np.ndarray | float
    dx1: np.ndarray | float
    dx2: np.ndarray | float
    displaced: np.ndarray | float
    std_error: float | None = None


class JumpDeltas(NamedTuple):
    delta1: float
    delta2: float
    rn_delta1: float
    rn_delta2: float
    oracle: tuple[float, float]
    printed: tuple[float, float]


class JumpPaths(NamedTuple):
    spot1: np.ndarray
    spot2: np.ndarray
    jumps: np.ndarray

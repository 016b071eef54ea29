from __future__ import annotations

from typing import Callable, Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from quadhedge.app.schemas.market import ParamSchedule, PayoffSpec


class DiffusionModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    drift: ParamSchedule
    volatility: ParamSchedule
    rate: ParamSchedule
    spot: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_knots(self) -> "DiffusionModel":
        times = sorted({t for s in (self.drift, self.volatility, self.rate) for t, _ in s.knots})
        for t in times:
            mu, sigma, r = self.drift(t), self.volatility(t), self.rate(t)
            if not sigma > 0:
                raise ValueError(f"volatility must be positive at t={t}")
            if not mu > r > 0:
                raise ValueError(f"need drift > rate > 0 at t={t}")
        return self


class SurfacePoint(NamedTuple):
    value: np.ndarray
    dx: np.ndarray
    dxx: np.ndarray
    dt: np.ndarray


class PricingSurface(BaseModel):
    """V(x, t) with its partials, evaluated on arrays of spots at one time."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    method: Literal["closed-form", "grid"]
    horizon: float
    payoff: PayoffSpec
    evaluator: Callable[[np.ndarray, float], SurfacePoint] = Field(exclude=True)
    x_grid: np.ndarray | None = None
    t_grid: np.ndarray | None = None
    values: np.ndarray | None = None

    def evaluate(self, spot, t: float) -> SurfacePoint:
        return self.evaluator(np.asarray(spot, dtype=float), float(t))

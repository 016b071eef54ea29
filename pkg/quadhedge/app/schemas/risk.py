from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class RiskAversionSchedule(BaseModel):
    """Delta tilt psi(tau) as a function of time to maturity.

    exponential: gamma - gamma * exp(-gamma * tau / T)
    delayed:     0 on [0, a], a - a * exp(-gamma * (tau - a)) beyond
    zero:        identically 0 (pure risk-neutral hedge)
    """

    model_config = ConfigDict(frozen=True)

    family: Literal["exponential", "delayed", "zero"] = "exponential"
    gamma: float = Field(0.0, ge=0)
    delay: float = Field(0.0, ge=0)
    horizon: float = Field(gt=0)

    @model_validator(mode="after")
    def _delay_only_for_delayed(self) -> "RiskAversionSchedule":
        if self.family != "delayed" and self.delay:
            raise ValueError("delay applies to the delayed family only")
        if self.family == "delayed" and self.delay > self.horizon:
            raise ValueError("delay must not exceed the horizon")
        return self

    @classmethod
    def zero(cls, horizon: float) -> "RiskAversionSchedule":
        return cls(family="zero", horizon=horizon)

    @classmethod
    def exponential(cls, gamma: float, horizon: float) -> "RiskAversionSchedule":
        return cls(family="exponential", gamma=gamma, horizon=horizon)

    @classmethod
    def delayed(cls, gamma: float, delay: float, horizon: float) -> "RiskAversionSchedule":
        return cls(family="delayed", gamma=gamma, delay=delay, horizon=horizon)


class RiskAversion(BaseModel):
    """Absolute (R) and relative (C) risk aversion; R = inf means C = 1."""

    model_config = ConfigDict(frozen=True)

    absolute: float = Field(ge=0)
    relative: float = Field(ge=0, le=1)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.absolute)

    @property
    def inverse(self) -> float:
        return 0.0 if self.is_infinite else 1.0 / self.absolute

    @classmethod
    def infinite(cls) -> "RiskAversion":
        return cls(absolute=math.inf, relative=1.0)

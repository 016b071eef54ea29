from __future__ import annotations

import math
from typing import Any, Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from quadhedge.app.core.errors import DomainError

TRADING_DAYS = 252


def days_to_years(days: float, trading_days: int = TRADING_DAYS) -> float:
    return float(days) / float(trading_days)


class TimeGrid(BaseModel):
    """Uniform rebalancing grid t_k = k*h on [0, T]."""

    model_config = ConfigDict(frozen=True)

    n_steps: int = Field(gt=0)
    horizon: float = Field(gt=0)

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    @classmethod
    def from_days(cls, days: float, n_steps: int, trading_days: int = TRADING_DAYS) -> "TimeGrid":
        return cls(n_steps=n_steps, horizon=days_to_years(days, trading_days))

    def time_at(self, k: int) -> float:
        return self.horizon * k / self.n_steps

    def tau_at(self, k: int) -> float:
        return self.horizon * (self.n_steps - k) / self.n_steps

    def times(self) -> np.ndarray:
        return self.horizon * np.arange(self.n_steps + 1) / self.n_steps

    def taus(self) -> np.ndarray:
        return self.horizon * (self.n_steps - np.arange(self.n_steps + 1)) / self.n_steps


class MarketParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    drift: float
    volatility: float = Field(gt=0)
    riskless_rate: float = Field(gt=0)
    spot: float = Field(gt=0)
    riskless_numeraire_start: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _drift_above_rate(self) -> "MarketParams":
        if not self.drift > self.riskless_rate:
            raise ValueError("drift must exceed riskless_rate (mu > r > 0)")
        return self


class ParamSchedule(BaseModel):
    """Piecewise-constant schedule; the value on [t_i, t_{i+1}) is v_i.

    Accepts a bare number (one knot at 0) or a ``"t:v;t:v"`` string as input.
    """

    model_config = ConfigDict(frozen=True)

    knots: tuple[tuple[float, float], ...]

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if isinstance(data, bool):
            raise ValueError("schedule must be a number or 't:v;t:v' string")
        if isinstance(data, (int, float)):
            return {"knots": ((0.0, float(data)),)}
        if isinstance(data, str):
            text = data.strip()
            if ":" not in text:
                return {"knots": ((0.0, float(text)),)}
            knots = []
            for part in text.split(";"):
                if not part.strip():
                    continue
                t, v = part.split(":", 1)
                knots.append((float(t), float(v)))
            return {"knots": tuple(knots)}
        if isinstance(data, (list, tuple)):
            return {"knots": tuple(tuple(k) for k in data)}
        return data

    @field_validator("knots")
    @classmethod
    def _check_knots(cls, knots: tuple[tuple[float, float], ...]) -> tuple[tuple[float, float], ...]:
        if not knots:
            raise ValueError("schedule needs at least one knot")
        if knots[0][0] != 0.0:
            raise ValueError("first knot must be at time 0")
        for (t0, _), (t1, _) in zip(knots, knots[1:]):
            if not t1 > t0:
                raise ValueError("knot times must be strictly increasing")
        if not all(math.isfinite(v) for _, v in knots):
            raise ValueError("knot values must be finite")
        return knots

    @classmethod
    def of(cls, value: float) -> "ParamSchedule":
        return cls.model_validate(float(value))

    @property
    def is_constant(self) -> bool:
        return len(self.knots) == 1

    def knot_values(self) -> np.ndarray:
        return np.array([v for _, v in self.knots], dtype=float)

    def _times(self) -> np.ndarray:
        return np.array([t for t, _ in self.knots], dtype=float)

    def __call__(self, t):
        idx = np.searchsorted(self._times(), np.asarray(t, dtype=float), side="right") - 1
        values = self.knot_values()[np.clip(idx, 0, len(self.knots) - 1)]
        return float(values) if np.ndim(values) == 0 else values

    def _cumulative(self, t):
        times = self._times()
        values = self.knot_values()
        seg = np.concatenate(([0.0], np.cumsum(values[:-1] * np.diff(times))))
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        idx = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 1)
        return seg[idx] + values[idx] * (t - times[idx])

    def integral(self, t0: float, t1: float) -> float:
        return float(self._cumulative(t1) - self._cumulative(t0))

    def average(self, t0: float, t1: float) -> float:
        if t1 <= t0:
            return float(self(t0))
        return self.integral(t0, t1) / (t1 - t0)

    def squared(self) -> "ParamSchedule":
        return ParamSchedule(knots=tuple((t, v * v) for t, v in self.knots))

    def constant(self) -> float:
        if not self.is_constant:
            raise DomainError("schedule is time-varying; use average() over an interval")
        return self.knots[0][1]


def riskless_numeraire(start: float, rate: ParamSchedule, t: float) -> float:
    """beta_t for d(beta) = r beta dt."""
    return start * math.exp(rate.integral(0.0, t))


class StateFunction(BaseModel):
    """Increasing positive map of a volatility state, h(v) or g(w)."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["sqrt", "power", "log", "constant"] = "sqrt"
    exponent: float = 0.5
    scale: float = Field(1.0, gt=0)

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if isinstance(data, str):
            return {"kind": data}
        return data

    @model_validator(mode="after")
    def _check_exponent(self) -> "StateFunction":
        if self.kind == "power" and not 0.0 < self.exponent < 1.0:
            raise ValueError("power exponent must lie in (0, 1)")
        return self

    def check_domain(self, states) -> None:
        x = np.asarray(states, dtype=float)
        if np.any(x <= 0) or not np.all(np.isfinite(x)):
            raise DomainError(f"{self.kind} state function needs positive finite states")
        if self.kind == "log" and np.any(x <= 1.0):
            raise DomainError("log state function is only defined for states above 1")

    def __call__(self, states):
        x = np.asarray(states, dtype=float)
        if self.kind == "sqrt":
            out = np.sqrt(x)
        elif self.kind == "power":
            out = np.power(x, self.exponent)
        elif self.kind == "log":
            out = np.log(x)
        else:
            out = np.ones_like(x)
        out = self.scale * out
        return float(out) if np.ndim(out) == 0 else out


class PayoffSpec(BaseModel):
    """Terminal payoff G. Vanilla kinds read the first state only."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["call", "put", "custom"] = "call"
    strike: float = Field(0.0, ge=0)
    label: str | None = None
    terminal_fn: Callable[..., Any] | None = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def _custom_needs_fn(self) -> "PayoffSpec":
        if self.kind == "custom" and self.terminal_fn is None:
            raise ValueError("custom payoff requires terminal_fn")
        return self

    @classmethod
    def call(cls, strike: float) -> "PayoffSpec":
        return cls(kind="call", strike=strike)

    @classmethod
    def put(cls, strike: float) -> "PayoffSpec":
        return cls(kind="put", strike=strike)

    @classmethod
    def zero(cls) -> "PayoffSpec":
        return cls(kind="custom", label="zero", terminal_fn=lambda *s: np.zeros_like(np.asarray(s[0], dtype=float)))

    @classmethod
    def constant(cls, level: float) -> "PayoffSpec":
        if level < 0:
            raise DomainError("constant payoff must be non-negative", field="payoff.level")
        return cls(
            kind="custom",
            label=f"constant:{level!r}",
            terminal_fn=lambda *s: np.full_like(np.asarray(s[0], dtype=float), level),
        )

    @classmethod
    def asset(cls, index: int = 0) -> "PayoffSpec":
        return cls(kind="custom", label=f"asset:{index}", terminal_fn=lambda *s: np.asarray(s[index], dtype=float))

    @property
    def is_vanilla(self) -> bool:
        return self.kind in ("call", "put")

    def __call__(self, *states):
        if self.kind == "call":
            out = np.maximum(np.asarray(states[0], dtype=float) - self.strike, 0.0)
        elif self.kind == "put":
            out = np.maximum(self.strike - np.asarray(states[0], dtype=float), 0.0)
        else:
            out = np.asarray(self.terminal_fn(*states), dtype=float)
            if np.any(out < 0) or not np.all(np.isfinite(out)):
                raise DomainError("payoff must be non-negative and finite", field="payoff")
        return float(out) if np.ndim(out) == 0 else out

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from quadhedge.app.core.errors import ConfigError
from quadhedge.app.schemas.market import ParamSchedule, PayoffSpec, StateFunction, TimeGrid
from quadhedge.app.schemas.risk import RiskAversionSchedule

ModelName = Literal["binomial", "diffusion", "sv", "vov", "jump"]


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MarketSection(_Section):
    drift: ParamSchedule = ParamSchedule.of(0.08)
    volatility: ParamSchedule = ParamSchedule.of(0.2)
    rate: ParamSchedule = ParamSchedule.of(0.01)
    spot: float = Field(100.0, gt=0)
    # binomial only: a probability in (0, 1), or "crr" for the CRR-limit choice
    p_up: float | Literal["crr"] = "crr"

    @field_validator("volatility")
    @classmethod
    def _positive_vol(cls, value: ParamSchedule) -> ParamSchedule:
        if not all(v > 0 for _, v in value.knots):
            raise ValueError("volatility must be positive")
        return value


class PayoffSection(_Section):
    kind: Literal["call", "put", "zero", "linear", "product"] = "call"
    strike: float = Field(100.0, ge=0)
    weight1: float = Field(1.0, ge=0)
    weight2: float = Field(0.0, ge=0)

    def spec(self) -> PayoffSpec:
        if self.kind == "zero":
            return PayoffSpec.zero()
        if self.kind in ("call", "put"):
            return PayoffSpec(kind=self.kind, strike=self.strike)
        raise ConfigError(f"{self.kind} payoff is only defined for the jump model", field="payoff.kind")


class GridSection(_Section):
    maturity_years: float = Field(1.0, gt=0)
    n_steps: int = Field(160, gt=0)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(n_steps=self.n_steps, horizon=self.maturity_years)


class ScheduleSection(_Section):
    family: Literal["exponential", "delayed", "zero"] = "exponential"
    gamma: float = Field(1.0, ge=0)
    delay_years: float = Field(0.0, ge=0)

    def schedule(self, horizon: float) -> RiskAversionSchedule:
        if self.family == "zero":
            return RiskAversionSchedule.zero(horizon)
        if self.family == "delayed":
            return RiskAversionSchedule.delayed(self.gamma, self.delay_years, horizon)
        return RiskAversionSchedule.exponential(self.gamma, horizon)


class SimulationSection(_Section):
    n_paths: int = Field(10_000, gt=0)
    seed: int | None = Field(None, ge=0)
    keep_residuals: bool = False


class PricingSection(_Section):
    method: Literal["closed-form", "grid"] = "closed-form"
    n_space: int = Field(400, ge=3)
    n_time: int = Field(400, gt=0)
    x_max_multiple: float = Field(5.0, ge=5)
    # sv / vov / jump claim pricing
    pricer: Literal["auto", "black-scholes", "nested-mc"] = "auto"
    mc_paths: int = Field(20_000, gt=1)
    mc_steps: int = Field(50, gt=0)


class SvSection(_Section):
    vol_drift: ParamSchedule = ParamSchedule.of(0.0)
    vol_vol: ParamSchedule = ParamSchedule.of(0.3)
    rho: float = Field(-0.5, gt=-1, lt=1)
    h_fn: StateFunction = StateFunction()
    vol_state: float = Field(0.04, gt=0)
    literal_dc: bool = False


class VovSection(_Section):
    vov_drift: ParamSchedule = ParamSchedule.of(0.0)
    vov_vol: ParamSchedule = ParamSchedule.of(0.2)
    g_fn: StateFunction = StateFunction()
    rho_w: float = Field(0.0, gt=-1, lt=1)
    rho_vw: float = Field(0.0, gt=-1, lt=1)
    vov_state: float = Field(0.09, gt=0)


class JumpSection(_Section):
    drift2: ParamSchedule = ParamSchedule.of(0.06)
    vol2: ParamSchedule = ParamSchedule.of(0.15)
    jump1: ParamSchedule = ParamSchedule.of(-0.1)
    jump2: ParamSchedule = ParamSchedule.of(0.05)
    intensity: ParamSchedule = ParamSchedule.of(0.5)
    spot2: float = Field(100.0, gt=0)
    maturity2_years: float = Field(2.0, gt=0)
    displacement: Literal["proportional", "additive"] = "proportional"


class CalibrationSection(_Section):
    prices: Path | None = None
    kind: Literal["call", "put"] = "call"
    moneyness: float = Field(1.0, gt=0)
    maturity_days: int = Field(30, gt=0)
    rate: float = Field(0.01, gt=0)
    gamma_init: float = Field(1.0, ge=0, le=10)
    tol: float = Field(1e-3, gt=0)
    max_iter: int = Field(50, gt=0)
    damping: float = Field(0.5, gt=0, le=1)
    n_paths: int = Field(20_000, gt=0)
    # observed residuals from a lattice hedge run at this gamma instead of the series slippage
    reference_gamma: float | None = Field(None, ge=0, le=10)


class SurfaceSection(_Section):
    moneyness: list[float] = [0.8, 0.9, 1.0, 1.1, 1.2]
    maturity_days: list[int] = [30, 60, 90]
    gammas: list[float] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    taus_days: list[float] = [30, 50, 70, 90, 110, 130, 150, 160]
    horizon_days: float = Field(160, gt=0)

    @field_validator("moneyness", "maturity_days", "gammas", "taus_days", mode="before")
    @classmethod
    def _comma_lists(cls, value: Any) -> Any:
        return _split_list(value)


class OutputSection(_Section):
    dir: Path | None = None


class ScenarioConfig(BaseModel):
    """One run: engine choice, its parameters and where results go."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelName = "binomial"
    market: MarketSection = MarketSection()
    payoff: PayoffSection = PayoffSection()
    grid: GridSection = GridSection()
    schedule: ScheduleSection = ScheduleSection()
    simulation: SimulationSection = SimulationSection()
    pricing: PricingSection = PricingSection()
    sv: SvSection = SvSection()
    vov: VovSection = VovSection()
    jump: JumpSection = JumpSection()
    calibration: CalibrationSection = CalibrationSection()
    surface: SurfaceSection = SurfaceSection()
    outputs: OutputSection = OutputSection()


class PsiSurfaceRequest(BaseModel):
    gammas: list[float] = Field(min_length=1)
    taus_days: list[float] = Field(min_length=1)
    horizon_days: float = Field(gt=0)


class PriceRow(BaseModel):
    quantity: str
    value: float | None


class PriceTable(BaseModel):
    model: ModelName
    rows: list[PriceRow]

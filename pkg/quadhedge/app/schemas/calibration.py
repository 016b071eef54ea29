from __future__ import annotations

import datetime as dt
import math
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

GAMMA_MIN = 0.0
GAMMA_MAX = 10.0


class PriceSeries(BaseModel):
    """Daily closes in date order."""

    model_config = ConfigDict(frozen=True)

    dates: tuple[dt.date, ...]
    closes: tuple[float, ...]

    @model_validator(mode="after")
    def _check(self) -> "PriceSeries":
        if len(self.dates) != len(self.closes):
            raise ValueError("dates and closes must have the same length")
        for a, b in zip(self.dates, self.dates[1:]):
            if not b > a:
                raise ValueError(f"dates must be strictly increasing ({a} then {b})")
        if not all(c > 0 and math.isfinite(c) for c in self.closes):
            raise ValueError("closes must be positive and finite")
        return self

    def __len__(self) -> int:
        return len(self.closes)

    def prices(self) -> np.ndarray:
        return np.asarray(self.closes, dtype=float)

    def log_returns(self) -> np.ndarray:
        return np.diff(np.log(self.prices()))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"date": [d.isoformat() for d in self.dates], "close": self.closes})

    def scaled(self, factor: float) -> "PriceSeries":
        return PriceSeries(dates=self.dates, closes=tuple(c * factor for c in self.closes))


class PhEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    p_hat: float
    mu_hat: float
    sigma_hat: float
    n_returns: int


class CalibrationOption(BaseModel):
    """Option whose hedge calibrates gamma; moneyness is spot over strike."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["call", "put"] = "call"
    moneyness: float = Field(1.0, gt=0)
    maturity_days: int = Field(30, gt=0)
    spot: float = Field(100.0, gt=0)

    @property
    def strike(self) -> float:
        return self.spot / self.moneyness


class SolverParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma_init: float = Field(1.0, ge=GAMMA_MIN, le=GAMMA_MAX)
    tol: float = Field(1e-3, gt=0)
    max_iter: int = Field(50, gt=0)
    damping: float = Field(0.5, gt=0, le=1)
    n_paths: int = Field(20_000, gt=0)
    seed: int = Field(20240101, ge=0)


class IterationRecord(BaseModel):
    gamma_initial: float
    gamma_end: float
    fitted_mean: list[float]
    fitted_std: list[float]


class CalibrationResult(BaseModel):
    gamma: float = Field(ge=GAMMA_MIN, le=GAMMA_MAX)
    converged: bool
    iterations: list[IterationRecord]
    taus: list[float]
    psi_at_grid: list[float]
    p_hat: float
    mu_hat: float
    sigma_hat: float
    method: str = "std"
    observed_source: Literal["panel", "slippage"] = "slippage"


class SurfaceGrid(BaseModel):
    """Rectangular grid; ``cells[i][j]`` belongs to (rows[i], cols[j]). NaN marks a failed cell."""

    row_name: str
    col_name: str
    rows: list[float]
    cols: list[float]
    cells: list[list[float]]
    status: list[list[str]] | None = None

    @field_validator("rows", "cols")
    @classmethod
    def _increasing(cls, axis: list[float]) -> list[float]:
        if not axis:
            raise ValueError("axis must not be empty")
        if any(not b > a for a, b in zip(axis, axis[1:])):
            raise ValueError("axis values must be strictly increasing")
        return axis

    @model_validator(mode="after")
    def _rectangular(self) -> "SurfaceGrid":
        if len(self.cells) != len(self.rows) or any(len(row) != len(self.cols) for row in self.cells):
            raise ValueError("cells must have one row per row value and one column per column value")
        return self

    def values(self) -> np.ndarray:
        return np.asarray(self.cells, dtype=float)

    def to_frame(self) -> pd.DataFrame:
        records = [
            {self.row_name: r, self.col_name: c, "value": self.cells[i][j]}
            for i, r in enumerate(self.rows)
            for j, c in enumerate(self.cols)
        ]
        return pd.DataFrame(records, columns=[self.row_name, self.col_name, "value"])

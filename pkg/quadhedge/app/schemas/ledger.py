from __future__ import annotations

from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from quadhedge.app.schemas.risk import RiskAversionSchedule

BASE_LEDGER_COLUMNS = ["path", "step", "t", "tau", "spot", "delta", "option", "portfolio", "residual"]
MULTIFACTOR_LEDGER_COLUMNS = ["vol_state", "vov_state", "b_holding", "c_holding"]
JUMP_LEDGER_COLUMNS = ["spot2", "delta2", "jumps_count"]
TRAILING_LEDGER_COLUMNS = ["accrual", "model"]

LEDGER_EXTRAS = {
    "binomial": [],
    "diffusion": [],
    "sv": MULTIFACTOR_LEDGER_COLUMNS,
    "vov": MULTIFACTOR_LEDGER_COLUMNS,
    "jump": JUMP_LEDGER_COLUMNS,
}


def ledger_columns(model: str) -> list[str]:
    return BASE_LEDGER_COLUMNS + LEDGER_EXTRAS[model] + TRAILING_LEDGER_COLUMNS


class HedgeLedger(BaseModel):
    """Per-step record of one hedged path, stored column-wise.

    ``portfolio`` is P_k = holdings * prices - f_k after rebalancing at t_k;
    ``residual`` is U_k, the increment over (t_k, t_{k+1}] left after the
    riskless accrual on P_k.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    path: int
    model: str
    columns: dict[str, np.ndarray]
    terminal_hedge_error: float
    replication_error: float

    @property
    def n_steps(self) -> int:
        return len(self.columns["residual"])

    def to_frame(self) -> pd.DataFrame:
        n = self.n_steps
        data: dict[str, Any] = {"path": np.full(n, self.path, dtype=int), "step": np.arange(n)}
        for name in ledger_columns(self.model):
            if name in ("path", "step"):
                continue
            if name == "model":
                data[name] = [self.model] * n
            else:
                data[name] = self.columns[name]
        return pd.DataFrame(data, columns=ledger_columns(self.model))


class StepTable(BaseModel):
    """Per-step residual moments, sampled and theoretical, column-wise."""

    step: list[int]
    t: list[float]
    tau: list[float]
    psi: list[float]
    mean: list[float]
    std: list[float]
    se_mean: list[float]
    se_std: list[float]
    theory_mean: list[float]
    theory_std: list[float]
    fitted_mean: list[float]
    fitted_std: list[float]


class ErrorStats(BaseModel):
    mean: float
    mean_abs: float
    rms: float
    max_abs: float


class HedgeSummary(BaseModel):
    model: str
    n_paths: int
    n_steps: int
    seed: int
    horizon: float
    schedule: RiskAversionSchedule
    premium: float
    steps: StepTable
    terminal: ErrorStats
    replication: ErrorStats
    replication_rms_relative: float
    max_abs_residual: float
    within_3se_mean: float
    within_3se_std: float
    extra: dict[str, Any] = Field(default_factory=dict)

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from quadhedge.app.schemas.market import PayoffSpec, TimeGrid


class KsrfStepModel(BaseModel):
    """One step of the generalized binomial model: up with p_up, else down."""

    model_config = ConfigDict(frozen=True)

    p_up: float = Field(gt=0, lt=1)
    up_factor: float
    down_factor: float
    step: float = Field(gt=0)

    @model_validator(mode="after")
    def _ordered_factors(self) -> "KsrfStepModel":
        if not self.down_factor < self.up_factor:
            raise ValueError("down_factor must be below up_factor")
        return self

    @property
    def spread(self) -> float:
        return self.up_factor - self.down_factor

    @property
    def mean_factor(self) -> float:
        return self.p_up * self.up_factor + (1.0 - self.p_up) * self.down_factor


class BinomialLattice(BaseModel):
    """Recombining tree; level k holds k+1 nodes indexed by the number of up moves."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    step_model: KsrfStepModel
    grid: TimeGrid
    spot: float
    rate: float
    risk_neutral_p: float
    payoff: PayoffSpec
    node_prices: tuple[np.ndarray, ...]
    option_values: tuple[np.ndarray, ...]
    rn_deltas: tuple[np.ndarray, ...]

    @property
    def premium(self) -> float:
        return float(self.option_values[0][0])

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

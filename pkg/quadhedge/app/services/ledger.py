"""Per-step moment accumulation and hedge-run assembly shared by all simulators."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from quadhedge.app.schemas.ledger import ErrorStats, HedgeLedger, HedgeSummary, StepTable
from quadhedge.app.schemas.market import TimeGrid
from quadhedge.app.schemas.risk import RiskAversionSchedule
from quadhedge.app.services.risk_aversion import psi_eval

logger = logging.getLogger(__name__)


@dataclass
class MomentAccumulator:
    """Count, mean and central power sums up to order 4, one entry per step.

    Blocks are merged pairwise so the result depends only on the merge order.
    """

    count: int
    mean: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    m4: np.ndarray

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "MomentAccumulator":
        x = np.atleast_2d(np.asarray(samples, dtype=float))
        mean = x.mean(axis=0)
        d = x - mean
        d2 = d * d
        return cls(
            count=x.shape[0],
            mean=mean,
            m2=d2.sum(axis=0),
            m3=(d2 * d).sum(axis=0),
            m4=(d2 * d2).sum(axis=0),
        )

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        na, nb = float(self.count), float(other.count)
        n = na + nb
        delta = other.mean - self.mean
        mean = self.mean + delta * nb / n
        m2 = self.m2 + other.m2 + delta**2 * na * nb / n
        m3 = (
            self.m3
            + other.m3
            + delta**3 * na * nb * (na - nb) / n**2
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n
        )
        m4 = (
            self.m4
            + other.m4
            + delta**4 * na * nb * (na * na - na * nb + nb * nb) / n**3
            + 6.0 * delta**2 * (na * na * other.m2 + nb * nb * self.m2) / n**2
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n
        )
        return MomentAccumulator(count=self.count + other.count, mean=mean, m2=m2, m3=m3, m4=m4)

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / self.count

    def std(self, ddof: int = 0) -> np.ndarray:
        if self.count - ddof <= 0:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.count - ddof))

    def se_mean(self) -> np.ndarray:
        return self.std(ddof=1) / math.sqrt(self.count)

    def se_std(self) -> np.ndarray:
        var = self.variance
        mu4 = self.m4 / self.count
        se_var = np.sqrt(np.maximum(mu4 - var * var, 0.0) / self.count)
        std = np.sqrt(var)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(std > 0, se_var / (2.0 * std), 0.0)
        return out


def merge_all(parts: list[MomentAccumulator]) -> MomentAccumulator:
    total = parts[0]
    for part in parts[1:]:
        total = total.merge(part)
    return total


@dataclass
class BlockResult:
    """What one path block hands back to the merge step."""

    residual: MomentAccumulator
    cond_mean: MomentAccumulator
    cond_var: MomentAccumulator
    terminal: np.ndarray
    replication: np.ndarray
    max_abs: float = 0.0
    ledgers: list[HedgeLedger] = field(default_factory=list)
    residuals: np.ndarray | None = None
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class HedgeRun:
    ledgers: list[HedgeLedger]
    summary: HedgeSummary
    residuals: np.ndarray | None = None


def block_result(
    residual: np.ndarray,
    cond_mean: np.ndarray,
    cond_var: np.ndarray,
    replication: np.ndarray,
    ledgers: list[HedgeLedger],
    keep_residuals: bool,
    extra: dict[str, Any] | None = None,
) -> BlockResult:
    return BlockResult(
        residual=MomentAccumulator.from_samples(residual),
        cond_mean=MomentAccumulator.from_samples(cond_mean),
        cond_var=MomentAccumulator.from_samples(cond_var),
        terminal=residual[:, -1].copy(),
        replication=replication,
        max_abs=float(np.max(np.abs(residual))) if residual.size else 0.0,
        ledgers=ledgers,
        residuals=residual.copy() if keep_residuals else None,
        extra=extra or {},
    )


def replication_weights(grid: TimeGrid, rate) -> np.ndarray:
    """exp(int_{t_{k+1}}^T r ds) per step; compounds each U_k to maturity."""
    times = grid.times()
    return np.array([math.exp(rate.integral(float(t), grid.horizon)) for t in times[1:]])


def _error_stats(values: np.ndarray) -> ErrorStats:
    if values.size == 0:
        return ErrorStats(mean=0.0, mean_abs=0.0, rms=0.0, max_abs=0.0)
    return ErrorStats(
        mean=float(np.mean(values)),
        mean_abs=float(np.mean(np.abs(values))),
        rms=float(np.sqrt(np.mean(values * values))),
        max_abs=float(np.max(np.abs(values))),
    )


def _as_list(values: np.ndarray) -> list[float]:
    return [float(v) for v in values]


def assemble_run(
    *,
    model: str,
    blocks: list[BlockResult],
    grid: TimeGrid,
    schedule: RiskAversionSchedule,
    premium: float,
    seed: int,
    extra: dict[str, Any] | None = None,
) -> HedgeRun:
    residual = merge_all([b.residual for b in blocks])
    cond_mean = merge_all([b.cond_mean for b in blocks])
    cond_var = merge_all([b.cond_var for b in blocks])
    terminal = np.concatenate([b.terminal for b in blocks])
    replication = np.concatenate([b.replication for b in blocks])
    ledgers = [ledger for b in blocks for ledger in b.ledgers]
    residuals = None
    if all(b.residuals is not None for b in blocks):
        residuals = np.concatenate([b.residuals for b in blocks], axis=0)

    n_steps = grid.n_steps
    taus = grid.taus()[:-1]
    psi = np.asarray(psi_eval(schedule, np.minimum(taus, schedule.horizon)), dtype=float)

    mean = residual.mean
    std = residual.std(ddof=1)
    se_mean = residual.se_mean()
    se_std = residual.se_std()
    theory_mean = cond_mean.mean
    theory_std = np.sqrt(np.maximum(cond_var.mean + cond_mean.variance, 0.0))

    scale = max(abs(premium), 1.0)
    atol = 1e-9 * scale
    ok_mean = np.abs(mean - theory_mean) <= 3.0 * se_mean + atol
    ok_std = np.abs(std - theory_std) <= 3.0 * se_std + atol

    table = StepTable(
        step=list(range(n_steps)),
        t=_as_list(grid.times()[:-1]),
        tau=_as_list(taus),
        psi=_as_list(psi),
        mean=_as_list(mean),
        std=_as_list(std),
        se_mean=_as_list(se_mean),
        se_std=_as_list(se_std),
        theory_mean=_as_list(theory_mean),
        theory_std=_as_list(theory_std),
        fitted_mean=_as_list(mean),
        fitted_std=_as_list(residual.std(ddof=0)),
    )
    replication_stats = _error_stats(replication)
    summary = HedgeSummary(
        model=model,
        n_paths=residual.count,
        n_steps=n_steps,
        seed=seed,
        horizon=grid.horizon,
        schedule=schedule,
        premium=float(premium),
        steps=table,
        terminal=_error_stats(terminal),
        replication=replication_stats,
        replication_rms_relative=replication_stats.rms / scale,
        max_abs_residual=max(b.max_abs for b in blocks),
        within_3se_mean=float(np.mean(ok_mean)),
        within_3se_std=float(np.mean(ok_std)),
        extra=extra or {},
    )
    logger.info(
        "%s hedge: %d paths x %d steps, premium %.6g, terminal rms %.3g, within-3se %.3f/%.3f",
        model,
        residual.count,
        n_steps,
        premium,
        summary.terminal.rms,
        summary.within_3se_mean,
        summary.within_3se_std,
    )
    return HedgeRun(ledgers=ledgers, summary=summary, residuals=residuals)

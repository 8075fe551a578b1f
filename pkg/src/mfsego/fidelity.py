"""Fidelity-level selection from per-output variance reductions.

Sampling a point at level l collapses the discrepancy variance of every
level up to l, so the achievable reduction is the cumulative sum of
scaled contributions. Four rules turn the per-output reductions into a
single level choice.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, StateError
from .mfgp import MfGpModel


class FidelityCriterion(enum.Enum):
    OBJECTIVE_ONLY = "objective-only"
    AVERAGE = "average"
    OPTIMISTIC = "optimistic"
    PESSIMISTIC = "pessimistic"

    @classmethod
    def parse(cls, name: str) -> "FidelityCriterion":
        key = name.strip().lower().replace("_", "-")
        for member in cls:
            if member.value == key:
                return member
        raise ConfigError(f"unknown fidelity criterion '{name}'")


@dataclass(frozen=True)
class CostModel:
    """Per-level evaluation cost (objective and constraints jointly)."""

    costs: np.ndarray

    def __post_init__(self):
        costs = np.atleast_1d(np.asarray(self.costs, dtype=float))
        object.__setattr__(self, "costs", costs)
        if np.any(costs <= 0):
            raise ConfigError("costs must be positive")
        if np.any(np.diff(costs) <= 0):
            raise ConfigError("costs must be strictly increasing with level")

    @property
    def n_levels(self) -> int:
        return self.costs.size

    def normalized(self) -> "CostModel":
        """Costs divided by the highest level's cost."""
        return CostModel(self.costs / self.costs[-1])

    def nested_cost(self, level: int) -> float:
        """Total cost of sampling levels 1..level."""
        return float(np.sum(self.costs[:level]))


@dataclass(frozen=True)
class ReductionTable:
    """(m+p+1) x L variance reductions; row 0 is the objective."""

    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if np.any(values < -1e-12):
            raise DomainError("variance reductions must be non-negative")
        object.__setattr__(self, "values", np.maximum(values, 0.0))

    @property
    def n_outputs(self) -> int:
        return self.values.shape[0]

    @property
    def n_levels(self) -> int:
        return self.values.shape[1]


def variance_reduction(model: MfGpModel, x: np.ndarray, level: int) -> float:
    """Cumulative scaled contribution of levels 1..level at x."""
    if not 1 <= level <= model.n_levels:
        raise DomainError(f"level {level} out of range 1..{model.n_levels}")
    return float(reduction_profile(model, x)[level - 1])


def reduction_profile(model: MfGpModel, x: np.ndarray) -> np.ndarray:
    """variance_reduction for every level in one pass."""
    u = model.bounds.to_unit(np.asarray(x, dtype=float))
    _, _, deltas = model.level_posteriors_unit(u)
    L = model.n_levels
    scale = np.ones(L)
    for j in range(L - 2, -1, -1):
        scale[j] = scale[j + 1] * model.levels[j + 1].rho ** 2
    contributions = np.asarray(deltas) * scale * model._y_std**2
    return np.cumsum(contributions)


def normalized_reduction(reduction: float, level: int, cost_model: CostModel) -> float:
    """Reduction divided by the squared nested cost of levels 1..level.

    Costs are expected pre-normalized by the highest level's cost.
    """
    if reduction < 0:
        raise DomainError("reduction must be non-negative")
    return reduction / cost_model.nested_cost(level) ** 2


def reduction_table(models, x: np.ndarray) -> ReductionTable:
    """Stack reduction profiles of the objective and constraint models."""
    return ReductionTable(np.vstack([reduction_profile(m, x) for m in models]))


def select_level(table: ReductionTable, cost_model: CostModel,
                 criterion: FidelityCriterion) -> int:
    """1-based sampling level per the chosen rule; argmax ties break to
    the lowest (cheapest) level."""
    if table.values.size == 0:
        raise StateError("empty reduction table")
    if cost_model.n_levels != table.n_levels:
        raise ConfigError("cost model and table disagree on level count")
    normalized = cost_model.normalized()
    norm = np.empty_like(table.values)
    for level in range(1, table.n_levels + 1):
        for k in range(table.n_outputs):
            norm[k, level - 1] = normalized_reduction(
                table.values[k, level - 1], level, normalized
            )
    if criterion is FidelityCriterion.OBJECTIVE_ONLY:
        return int(np.argmax(norm[0])) + 1
    if criterion is FidelityCriterion.AVERAGE:
        return int(np.argmax(norm.sum(axis=0))) + 1
    per_row = np.argmax(norm, axis=1) + 1
    if criterion is FidelityCriterion.OPTIMISTIC:
        return int(per_row.min())
    if criterion is FidelityCriterion.PESSIMISTIC:
        return int(per_row.max())
    raise ConfigError(f"unhandled criterion {criterion}")

"""Space-filling designs and the nested multi-fidelity DoE structure.

Level 1 is always the lowest (cheapest) fidelity. Higher levels hold
row-for-row subsets of the level below, which the recursive kriging
model requires.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, StructureError

# Two points closer than this in max-norm (after scaling to the unit cube)
# are treated as the same point; keeps correlation matrices non-singular.
DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned box domain."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.ndim != 1 or lower.shape != upper.shape or lower.size < 1:
            raise ConfigError("bounds must be two equal-length 1-d arrays")
        if not np.all(lower < upper):
            raise ConfigError("each lower bound must be strictly below its upper bound")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x: np.ndarray, atol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            np.all(x >= self.lower - atol * self.span)
            and np.all(x <= self.upper + atol * self.span)
        )

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / self.span

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        return self.lower + np.asarray(u, dtype=float) * self.span


@dataclass(frozen=True)
class Design:
    """A set of design points inside a box, one point per row."""

    points: np.ndarray
    bounds: Bounds

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if pts.shape[1] != self.bounds.dim:
            raise DomainError(
                f"points have dimension {pts.shape[1]}, bounds have {self.bounds.dim}"
            )
        for row in pts:
            if not self.bounds.contains(row):
                raise DomainError(f"design point {row} outside bounds")
        unit = self.bounds.to_unit(pts)
        for i in range(len(pts)):
            dup = np.max(np.abs(unit[i + 1 :] - unit[i]), axis=1) < DUPLICATE_TOL
            if np.any(dup):
                raise StructureError("design contains duplicate points")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def contains_point(self, x: np.ndarray) -> bool:
        """True if x coincides with an existing row up to DUPLICATE_TOL."""
        if self.n == 0:
            return False
        du = np.abs(self.bounds.to_unit(self.points) - self.bounds.to_unit(x))
        return bool(np.any(np.max(du, axis=1) < DUPLICATE_TOL))


@dataclass(frozen=True)
class NestedDesign:
    """Ordered designs, level 1 first; each level is a subset of the one below."""

    levels: list[Design] = field(default_factory=list)

    def __post_init__(self):
        if not self.levels:
            raise StructureError("nested design needs at least one level")
        for upper_lvl, lower_lvl in zip(self.levels[1:], self.levels[:-1]):
            if upper_lvl.n > lower_lvl.n:
                raise StructureError("higher fidelity level has more points than the one below")
            if not _is_subset(upper_lvl, lower_lvl):
                raise StructureError("nesting violated: level points missing from the level below")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def bounds(self) -> Bounds:
        return self.levels[0].bounds

    def counts(self) -> list[int]:
        return [lvl.n for lvl in self.levels]


def _is_subset(inner: Design, outer: Design, tol: float = DUPLICATE_TOL) -> bool:
    outer_unit = outer.bounds.to_unit(outer.points)
    for row in inner.points:
        du = np.max(np.abs(outer_unit - inner.bounds.to_unit(row)), axis=1)
        if not np.any(du < tol):
            return False
    return True


def lhs_sample(n: int, bounds: Bounds, seed: int) -> Design:
    """Latin hypercube sample: one point per equal-width stratum per axis."""
    if n < 1:
        raise ConfigError("need at least one sample")
    rng = np.random.default_rng(seed)
    d = bounds.dim
    unit = np.empty((n, d))
    for j in range(d):
        strata = rng.permutation(n)
        unit[:, j] = (strata + rng.random(n)) / n
    return Design(bounds.from_unit(unit), bounds)


def _maximin_subset(points: np.ndarray, k: int) -> np.ndarray:
    """Greedy max-min-distance downselect; returns selected row indices.

    Deterministic given row ordering: seeds with the row whose minimum
    distance to the rest is largest, then repeatedly adds the row farthest
    from the current selection (ties to the lowest index).
    """
    n = len(points)
    if k >= n:
        return np.arange(n)
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    selected = [int(np.argmax(np.min(d2, axis=1)))]
    min_d2 = d2[selected[0]].copy()
    while len(selected) < k:
        min_d2[selected] = -np.inf
        nxt = int(np.argmax(min_d2))
        selected.append(nxt)
        min_d2 = np.minimum(min_d2, d2[nxt])
    return np.array(sorted(selected))


def build_nested(counts: list[int], bounds: Bounds, seed: int) -> NestedDesign:
    """LHS at level 1, then greedy maximin subsets for each higher level."""
    counts = list(counts)
    if not counts or counts[0] < 1:
        raise ConfigError("counts must start with at least one point")
    for lo, hi in zip(counts[:-1], counts[1:]):
        if hi > lo:
            raise ConfigError(f"level counts must be non-increasing, got {counts}")
        if hi < 1:
            raise ConfigError("every level needs at least one point")
    base = lhs_sample(counts[0], bounds, seed)
    levels = [base]
    for k in counts[1:]:
        prev = levels[-1]
        idx = _maximin_subset(prev.bounds.to_unit(prev.points), k)
        levels.append(Design(prev.points[idx], bounds))
    return NestedDesign(levels)


def augment_nested(design: NestedDesign, x: np.ndarray, up_to_level: int) -> NestedDesign:
    """Append x to levels 1..up_to_level, skipping levels that already hold it."""
    x = np.asarray(x, dtype=float)
    if not design.bounds.contains(x):
        raise DomainError(f"point {x} outside bounds")
    if not 1 <= up_to_level <= design.n_levels:
        raise DomainError(f"level {up_to_level} out of range 1..{design.n_levels}")
    levels = []
    for lvl_index, lvl in enumerate(design.levels, start=1):
        if lvl_index > up_to_level or lvl.contains_point(x):
            levels.append(lvl)
        else:
            levels.append(Design(np.vstack([lvl.points, x]), lvl.bounds))
    return NestedDesign(levels)

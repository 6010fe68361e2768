"""GOSPA metric (alpha = 2) between finite sets of planar points."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SetTooLargeError

MAX_EXHAUSTIVE = 8


@dataclass(frozen=True)
class GospaParams:
    """Metric order ``p`` and cutoff ``c`` (km). ``alpha`` is fixed at 2."""

    c: float = 10.0
    p: float = 2.0
    alpha: float = field(default=2.0, init=False)

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError(f"cutoff c must be > 0, got {self.c}")
        if not (1.0 <= self.p < np.inf):
            raise ConfigError(f"order p must be in [1, inf), got {self.p}")


@dataclass(frozen=True)
class GospaBreakdown:
    total: float
    localisation_cost_p: float
    missed_count: int
    false_count: int
    assignment: tuple[tuple[int, int], ...]


def as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2))
    return arr.reshape(-1, 2)


def _best_assignment(dp: np.ndarray, half: float) -> tuple[float, tuple[int, ...]]:
    """Exhaustive search over partial matchings of rows into columns.

    ``dp[i, j]`` is the p-th power distance; an unassigned row or column
    costs ``half``. Returns (cost, match) with ``match[i] = -1`` for an
    unassigned row.
    """
    n_rows, n_cols = dp.shape
    best_cost = np.inf
    best_match: tuple[int, ...] = ()
    match = [-1] * n_rows
    used = [False] * n_cols

    def rec(i: int, acc: float, n_assigned: int):
        nonlocal best_cost, best_match
        if i == n_rows:
            cost = acc + half * (n_rows + n_cols - 2 * n_assigned)
            if cost < best_cost:
                best_cost = cost
                best_match = tuple(match)
            return
        match[i] = -1
        rec(i + 1, acc, n_assigned)
        for j in range(n_cols):
            if not used[j]:
                used[j] = True
                match[i] = j
                rec(i + 1, acc + dp[i, j], n_assigned + 1)
                used[j] = False
        match[i] = -1

    rec(0, 0.0, 0)
    return best_cost, best_match


def gospa(X, Y, params: GospaParams = GospaParams()) -> GospaBreakdown:
    """GOSPA distance between ground truth ``X`` and estimates ``Y``.

    Both arguments are sequences of 2-D points (km). The minimum over
    assignment sets is found by exhaustive enumeration, so sets are limited
    to ``MAX_EXHAUSTIVE`` elements.
    """
    X = as_points(X)
    Y = as_points(Y)
    nx, ny = len(X), len(Y)
    if max(nx, ny) > MAX_EXHAUSTIVE:
        raise SetTooLargeError(
            f"exhaustive GOSPA supports at most {MAX_EXHAUSTIVE} points per set, "
            f"got |X|={nx}, |Y|={ny}"
        )
    p, c = params.p, params.c
    half = c**p / 2.0

    if nx == 0 or ny == 0:
        total_p = half * (nx + ny)
        return GospaBreakdown(total_p ** (1.0 / p), 0.0, nx, ny, ())

    diff = X[:, None, :] - Y[None, :, :]
    dp = np.sqrt(np.sum(diff * diff, axis=-1)) ** p

    if nx == 1 and ny == 1:
        assigned = float(dp[0, 0])
        # ties resolve to the unassigned option, as in the general path
        if assigned < 2.0 * half:
            return GospaBreakdown(assigned ** (1.0 / p), assigned, 0, 0, ((0, 0),))
        return GospaBreakdown((2.0 * half) ** (1.0 / p), 0.0, 1, 1, ())

    cost, match = _best_assignment(dp, half)
    pairs = tuple((i, j) for i, j in enumerate(match) if j >= 0)
    loc = float(sum(dp[i, j] for i, j in pairs))
    n_assigned = len(pairs)
    return GospaBreakdown(
        total=float(cost) ** (1.0 / p),
        localisation_cost_p=loc,
        missed_count=nx - n_assigned,
        false_count=ny - n_assigned,
        assignment=pairs,
    )

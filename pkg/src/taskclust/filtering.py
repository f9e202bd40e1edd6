"""Turn raw transfer scores into a partially observed binary similarity matrix.

A pair of tasks is marked similar (1) when each direction's transfer score
clears a high threshold derived from the score distribution of the target
column, dissimilar (0) when both fall below a low threshold, and left
unobserved otherwise. The extra-large-scale variant decides every sampled
pair with a single mean-based disjunction so that no entry is left undecided.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .transfer import TransferMatrix

MODES = ("standard", "xl")


@dataclass
class FilterParams:
    p1: float = 0.5
    p2: float = 0.5
    mode: str = "standard"
    include_diagonal_in_stats: bool = True

    def __post_init__(self):
        if self.p1 < 0 or self.p2 < 0:
            raise InputError("bad-params", "p1 and p2 must be nonnegative")
        if self.mode not in MODES:
            raise InputError("bad-params", f"mode must be one of {MODES}")


@dataclass
class PartialSimilarity:
    """Symmetric {0,1,unobserved} matrix; `values` is only meaningful on `observed`."""

    values: np.ndarray    # int8, n x n, 0/1 where observed, 0 elsewhere
    observed: np.ndarray  # bool, n x n

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int8)
        self.observed = np.asarray(self.observed, dtype=bool)
        n = self.values.shape[0]
        if self.values.shape != (n, n) or self.observed.shape != (n, n):
            raise InputError("bad-shape", "values and observed must be square and match")
        if not np.array_equal(self.observed, self.observed.T):
            raise InputError("asymmetric-input", "observation mask must be symmetric")
        v = np.where(self.observed, self.values, 0)
        if not np.array_equal(v, v.T):
            raise InputError("asymmetric-input", "observed values must be symmetric")
        if not np.isin(self.values[self.observed], (0, 1)).all():
            raise InputError("bad-value", "observed similarity values must be 0 or 1")
        d = np.arange(n)
        if not (self.observed[d, d].all() and (self.values[d, d] == 1).all()):
            raise InputError("bad-value", "diagonal must be observed and equal to 1")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def column_stats(S: TransferMatrix, j: int, params: FilterParams) -> tuple[float, float]:
    """Mean and population std of the observed entries in column j.

    The diagonal score S_jj = 1 is counted only when
    params.include_diagonal_in_stats is set; with few observations it drags
    both thresholds upward, which is why the flag exists.
    """
    mask = S.observed[:, j].copy()
    if not params.include_diagonal_in_stats:
        mask[j] = False
    col = S.scores[mask, j]
    if col.size < 2:
        raise InputError(
            "degenerate-column",
            f"column {j} has {col.size} usable entries, need at least 2",
        )
    if (col == col[0]).all():
        # exact zero variance, so the strict threshold comparisons see a tie
        # instead of summation noise
        return float(col[0]), 0.0
    return float(col.mean()), float(col.std())


def filter_scores(S: TransferMatrix, params: FilterParams | None = None) -> PartialSimilarity:
    """Apply the dynamic-threshold rule to every sampled pair of S.

    Standard mode marks a pair 1 only when S_ij > mu_j + p1*sigma_j and
    S_ji > mu_i + p1*sigma_i both hold strictly, 0 only when both scores sit
    strictly below their mu - p2*sigma lines, and leaves the pair unobserved
    otherwise. XL mode instead decides every sampled pair: 1 when
    S_ij >= mu_j or S_ji >= mu_i, else 0. The diagonal is always 1.
    """
    params = params or FilterParams()
    n = S.n
    stats = [column_stats(S, j, params) for j in range(n)]
    mu = np.array([m for m, _ in stats])
    sd = np.array([s for _, s in stats])

    values = np.zeros((n, n), dtype=np.int8)
    observed = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if not S.observed[i, j]:
                continue
            s_ij, s_ji = S.scores[i, j], S.scores[j, i]
            if params.mode == "xl":
                hit = s_ij >= mu[j] or s_ji >= mu[i]
                values[i, j] = values[j, i] = 1 if hit else 0
                observed[i, j] = observed[j, i] = True
                continue
            hi = s_ij > mu[j] + params.p1 * sd[j] and s_ji > mu[i] + params.p1 * sd[i]
            lo = s_ij < mu[j] - params.p2 * sd[j] and s_ji < mu[i] - params.p2 * sd[i]
            if hi:
                values[i, j] = values[j, i] = 1
                observed[i, j] = observed[j, i] = True
            elif lo:
                observed[i, j] = observed[j, i] = True
    d = np.arange(n)
    values[d, d] = 1
    observed[d, d] = True
    return PartialSimilarity(values=values, observed=observed)

"""Multi-run orchestration: variance estimation, pooling, order selection.

A single stratified run gives no internal variance estimate (the per-stratum
terms are independent but not identically distributed), so the variance is
estimated across ``l >= 2`` independent replicates: each stratum's term gets
its own sample variance and these are summed with the squared stratification
normalizer.  The resulting estimate is exactly unbiased for the variance of
one replicate and its own noise shrinks one order of n faster than the
squared variance, so even l = 2 or 3 is informative at moderate n.

For the boundary-vanishing estimator the per-dilation stratum means can be
combined into the estimate at every order up to r for free, so the order
with the smallest estimated variance can be selected after the fact at the
cost of running the largest order only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DomainError
from .lattice import GridSpec, Stream
from .estimators import (
    EstimateReport,
    _combine,
    _combine_rows,
    _shift_parts,
    shift_coefficients,
)

__all__ = [
    "ReplicateSummary",
    "variance_estimate",
    "pooled",
    "tail_bound",
    "select_order",
]


@dataclass
class ReplicateSummary:
    """Pooled result of l independent replicates of one estimator config."""

    l: int
    pooled_mean: float
    v_hat: float
    pooled_variance: float
    values: tuple[float, ...]
    per_order: dict | None = None


def _aligned_terms(reports: list[EstimateReport]) -> np.ndarray:
    if len(reports) < 2:
        raise AlignmentError(f"need at least 2 replicates, got {len(reports)}")
    ref = reports[0]
    for rep in reports:
        if rep.per_stratum_terms is None:
            raise AlignmentError(
                "per-stratum terms were not retained; rerun with keep_terms=True"
            )
        if rep.config != ref.config or rep.normalizer != ref.normalizer:
            raise AlignmentError(
                f"replicates disagree on configuration: {rep.config} vs {ref.config}"
            )
        if rep.per_stratum_terms.shape != ref.per_stratum_terms.shape:
            raise AlignmentError("replicates have different stratum counts")
    return np.stack([rep.per_stratum_terms for rep in reports])


def variance_estimate(reports: list[EstimateReport]) -> float:
    """Unbiased estimate of Var(single replicate) from aligned per-stratum terms.

    Sums the per-stratum sample variances across replicates and divides by
    the squared normalizer; independence across strata makes this exactly
    unbiased for the variance of one run.
    """
    terms = _aligned_terms(reports)
    per_stratum = terms.var(axis=0, ddof=1)
    return float(per_stratum.sum()) / reports[0].normalizer ** 2


def pooled(reports: list[EstimateReport]) -> ReplicateSummary:
    """Mean of the replicate values plus the variance of that mean."""
    v_hat = variance_estimate(reports)
    values = tuple(rep.value for rep in reports)
    return ReplicateSummary(
        l=len(reports),
        pooled_mean=float(np.mean(values)),
        v_hat=v_hat,
        pooled_variance=v_hat / len(reports),
        values=values,
    )


def tail_bound(delta: float, c_hat: float, norm_r: float, n: int, r: int, s: int) -> float:
    """Radius of the level-(1-delta) concentration interval.

    With ``c_hat`` the computable worst-case constant and ``norm_r`` an upper
    bound on the order-r derivatives, the estimate lies within this radius of
    the true integral with probability at least 1 - delta.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must be in (0, 1), got {delta}")
    return float(n) ** (-0.5 - r / s) * c_hat * norm_r * math.sqrt(2.0 * math.log(2.0 / delta))


def select_order(f, r_max: int, grid: GridSpec, l: int, stream: Stream):
    """Run the vanishing estimator at all orders 1..r_max and pick the best.

    Per replicate, the r_max per-dilation stratum means are computed once
    (the evaluations of the top order cover every lower order), and the
    estimate at order r' is their weighted head sum.  The order with the
    smallest estimated variance wins; ties go to the smaller order.

    ``stream.replicate`` is the base id; replicate j uses base + j.  Returns
    ``(best_order, {order: ReplicateSummary})``; the per-order values are
    bit-identical to standalone runs of the vanishing estimator on the same
    streams.
    """
    if l < 2:
        raise ValueError(f"need l >= 2 replicates, got {l}")
    if grid.k < 2:
        raise ValueError(f"need k >= 2, got {grid.k}")
    top = shift_coefficients(r_max)
    if grid.m != top.margin:
        raise ValueError(
            f"order {r_max} needs a grid with margin {top.margin}, got m={grid.m}"
        )

    all_means = []
    all_rows = []
    for j in range(l):
        sub = Stream(stream.seed, stream.replicate + j)
        means, rows, _n_in = _shift_parts(f, grid, top.shifts, sub, guard=True)
        all_means.append(means)
        all_rows.append(rows)

    summaries: dict[int, ReplicateSummary] = {}
    norm2 = float(grid.k ** grid.s) ** 2
    for r_prime in range(1, r_max + 1):
        coeff = shift_coefficients(r_prime)
        values = tuple(
            _combine(coeff.weights, all_means[j][: r_prime]) for j in range(l)
        )
        terms = np.stack([
            _combine_rows(coeff.weights, all_rows[j][: r_prime]) for j in range(l)
        ])
        v_hat = float(terms.var(axis=0, ddof=1).sum()) / norm2
        summaries[r_prime] = ReplicateSummary(
            l=l,
            pooled_mean=float(np.mean(values)),
            v_hat=v_hat,
            pooled_variance=v_hat / l,
            values=values,
        )

    best = min(summaries, key=lambda r_prime: (summaries[r_prime].v_hat, r_prime))
    return best, summaries

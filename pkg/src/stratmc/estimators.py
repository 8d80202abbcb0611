"""Unbiased integral estimators on the unit cube.

All estimators stratify the cube, draw one uniform offset per stratum, and
average per-stratum terms; they differ in what each term looks like:

* ``crude_mc`` - plain iid Monte Carlo, for reference.
* ``haber1`` - one evaluation per stratum, f(c + U).
* ``haber2`` - the symmetrized pair {f(c+U) + f(c-U)} / 2.
* ``estimate_analytic_cv`` - haber2 plus a zero-mean Taylor control variate
  built from caller-supplied exact derivatives at the centres.
* ``estimate_paired_cv`` - same control variate with the derivatives
  replaced by grid finite differences (even orders only; the pair term is
  symmetric so odd orders cancel).
* ``estimate_single_cv`` - one evaluation per stratum with difference-based
  control variates on every order below r.
* ``estimate_vanishing`` - for integrands whose derivatives vanish on the
  cube boundary: a weighted combination of dilated evaluations f(c + shift*U)
  over a grid with margin strata, needing no numerical derivatives at all.

Estimators that admit exact identities (vanishing at orders 1/2 vs. the two
Haber rules, the single-point rule at r=1 vs. haber1, paired rules at 2q vs.
2q-1) share their floating-point paths, so those identities hold bit for bit
on a common stream, not just in distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import OrderError, ResolutionError
from .lattice import GridSpec, Stream, centre_array
from .stencil import (
    BlockAssignment,
    _lagrange_coeff_exact,
    block_partition,
    derivative_grid,
    multi_factorial,
    multi_indices,
)

__all__ = [
    "offset_moment",
    "ShiftCoefficients",
    "shift_coefficients",
    "vanishing_margin",
    "EstimatorConfig",
    "EstimateReport",
    "crude_mc",
    "haber1",
    "haber2",
    "estimate_analytic_cv",
    "estimate_paired_cv",
    "estimate_single_cv",
    "estimate_vanishing",
    "shifted_stratum_mean",
    "asymptotic_variance_estimate",
]

_CRUDE_TAG = 0x611B


def _centred_monomial(alpha):
    def g(pts):
        out = np.ones(len(pts))
        for axis, a in enumerate(alpha):
            if a:
                out = out * (pts[:, axis] - 0.5) ** a
        return out
    return g


def offset_moment(i: int, k: int) -> float:
    """E[V^i] for V uniform on [-1/2k, 1/2k]: zero for odd i, else 1/((i+1)(2k)^i)."""
    if i < 0:
        raise ValueError(f"moment order must be >= 0, got {i}")
    if k < 1:
        raise ValueError(f"resolution must be >= 1, got {k}")
    if i % 2:
        return 0.0
    return 1.0 / ((i + 1) * (2.0 * k) ** i)


# ---------------------------------------------------------------------------
# dilation coefficients for the vanishing estimator

def _shifts(r: int) -> tuple[int, ...]:
    """The first r odd dilations 1, -1, 3, -3, 5, -5, ..."""
    out = []
    v = 1
    while len(out) < r:
        out.append(v)
        if len(out) < r:
            out.append(-v)
        v += 2
    return tuple(out)


def vanishing_margin(r: int) -> int:
    """Margin layers needed at order r: max |shift| = r if odd else r - 1."""
    if r < 1:
        raise OrderError(f"order must be >= 1, got {r}")
    return r if r % 2 else r - 1


@dataclass(frozen=True)
class ShiftCoefficients:
    """Dilations and their combination weights at one order.

    The weights solve the Vandermonde system making
    ``sum_j weights[j] * g(shift[j] * u)`` reproduce ``g(0)`` up to
    O(|u|^r): they sum to one and kill the first r-1 moments.
    """

    shifts: tuple[int, ...]
    weights: tuple[float, ...]
    margin: int

    @property
    def order(self) -> int:
        return len(self.shifts)


@lru_cache(maxsize=64)
def shift_coefficients(r: int) -> ShiftCoefficients:
    if r < 1:
        raise OrderError(f"order must be >= 1, got {r}")
    shifts = _shifts(r)
    exact = _lagrange_coeff_exact(shifts, 0)
    return ShiftCoefficients(
        shifts=shifts,
        weights=tuple(float(w) for w in exact),
        margin=vanishing_margin(r),
    )


def shift_coefficients_exact(r: int) -> tuple[Fraction, ...]:
    """Rational combination weights; oracle counterpart of shift_coefficients."""
    return _lagrange_coeff_exact(_shifts(r), 0)


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class EstimatorConfig:
    """Identity of one estimator run, used to align replicates."""

    variant: str
    r: int
    grid: GridSpec
    mode: str = "free"


@dataclass
class EstimateReport:
    """One estimate with its evaluation accounting.

    ``per_stratum_terms`` (kept on request) holds the independent summands
    Y_c with ``value ~= sum(per_stratum_terms) / normalizer``; replicate-based
    variance estimation needs them.  ``shift_averages`` is filled by the
    vanishing estimator: entry j is the stratum mean of f(c + shift_j * U_c),
    from which the estimate at every order r' <= r can be re-assembled.
    """

    value: float
    config: EstimatorConfig
    n_deterministic: int
    n_random: int
    n_in_domain: int
    normalizer: int
    per_stratum_terms: np.ndarray | None = None
    shift_averages: tuple[float, ...] | None = None

    @property
    def n_evaluations(self) -> int:
        return self.n_deterministic + self.n_random


# ---------------------------------------------------------------------------
# shared shifted-sum core

def _shift_parts(f, grid: GridSpec, shifts, stream: Stream, guard: bool):
    """Per-shift stratum means A_j = k^-s sum_c fbar(c + shift_j U_c).

    With ``guard`` the zero extension fbar is applied: points outside the
    closed unit cube contribute 0 without calling f.  Returns the means, the
    per-centre value rows (guarded entries zero), and the in-domain count.
    """
    ctr = centre_array(grid)
    u = stream.offsets(grid)
    scale = float(grid.k) ** grid.s
    means = []
    rows = []
    n_in = 0
    for lam in shifts:
        pts = ctr + lam * u
        if guard:
            # sum the in-domain values only: the compressed sequence (and
            # with it the floating-point sum) is then identical across grids
            # that differ only in margin layers
            mask = np.all((pts >= 0.0) & (pts <= 1.0), axis=1)
            vals = np.zeros(len(pts))
            total = 0.0
            if mask.any():
                inside = np.asarray(f(pts[mask]), dtype=float)
                vals[mask] = inside
                total = float(np.sum(inside))
            n_in += int(mask.sum())
        else:
            vals = np.asarray(f(pts), dtype=float)
            total = float(np.sum(vals))
            n_in += len(pts)
        means.append(total / scale)
        rows.append(vals)
    return means, rows, n_in


def _combine(weights, values) -> float:
    acc = 0.0
    for w, v in zip(weights, values):
        acc += w * v
    return acc


def _combine_rows(weights, rows) -> np.ndarray:
    acc = np.zeros_like(rows[0])
    for w, row in zip(weights, rows):
        acc += w * row
    return acc


def shifted_stratum_mean(g, shift: int, grid: GridSpec, stream: Stream) -> float:
    """k^-s sum over centres of gbar(c + shift * U_c); unbiased for the integral.

    ``shift`` must be odd and the grid margin at least (|shift| - 1) / 2,
    otherwise strata near the boundary would be over- or under-visited.
    """
    if shift % 2 == 0:
        raise ValueError(f"dilation must be odd, got {shift}")
    if grid.m < (abs(shift) - 1) // 2:
        raise ValueError(
            f"margin {grid.m} too small for dilation {shift}; "
            f"need at least {(abs(shift) - 1) // 2}"
        )
    means, _rows, _n = _shift_parts(g, grid, (shift,), stream, guard=True)
    return means[0]


# ---------------------------------------------------------------------------
# estimators

def crude_mc(f, s: int, n: int, stream: Stream, keep_terms: bool = False) -> EstimateReport:
    """Plain Monte Carlo: mean of f at n iid uniform points."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    pts = stream.bulk_uniform(_CRUDE_TAG, (n, s))
    vals = np.asarray(f(pts), dtype=float)
    return EstimateReport(
        value=float(np.sum(vals)) / n,
        config=EstimatorConfig("crude", 1, GridSpec(s, 1, 0)),
        n_deterministic=0,
        n_random=n,
        n_in_domain=n,
        normalizer=n,
        per_stratum_terms=vals if keep_terms else None,
    )


def haber1(f, grid: GridSpec, stream: Stream, keep_terms: bool = False) -> EstimateReport:
    """One random evaluation per stratum; optimal for once-differentiable f."""
    _require_margin_free(grid)
    means, rows, _ = _shift_parts(f, grid, (1,), stream, guard=False)
    return EstimateReport(
        value=_combine((1.0,), means),
        config=EstimatorConfig("haber1", 1, grid),
        n_deterministic=0,
        n_random=grid.n_centres,
        n_in_domain=grid.n_centres,
        normalizer=grid.n_centres,
        per_stratum_terms=_combine_rows((1.0,), rows) if keep_terms else None,
    )


def haber2(f, grid: GridSpec, stream: Stream, keep_terms: bool = False) -> EstimateReport:
    """Antithetic pair per stratum; optimal for twice-differentiable f."""
    _require_margin_free(grid)
    means, rows, _ = _shift_parts(f, grid, (1, -1), stream, guard=False)
    return EstimateReport(
        value=_combine((0.5, 0.5), means),
        config=EstimatorConfig("haber2", 2, grid),
        n_deterministic=0,
        n_random=2 * grid.n_centres,
        n_in_domain=2 * grid.n_centres,
        normalizer=grid.n_centres,
        per_stratum_terms=_combine_rows((0.5, 0.5), rows) if keep_terms else None,
    )


def _require_margin_free(grid: GridSpec):
    if grid.m != 0:
        raise ValueError("this estimator runs on margin-free grids (m = 0)")


def _even_alphas(s: int, r: int) -> list[tuple[int, ...]]:
    return [a for total in range(2, r, 2) for a in multi_indices(s, total)]


def _all_alphas(s: int, r: int) -> list[tuple[int, ...]]:
    return [a for total in range(1, r) for a in multi_indices(s, total)]


def _cv_factor(alpha, u: np.ndarray, k: int) -> np.ndarray:
    """(U^alpha - E[U^alpha]) / alpha! per stratum."""
    mono = np.ones(len(u))
    mean = 1.0
    for axis, a in enumerate(alpha):
        if a:
            mono = mono * u[:, axis] ** a
            mean *= offset_moment(a, k)
    return (mono - mean) / multi_factorial(alpha)


def _paired_stencil_order(r: int, k: int) -> int:
    """Stencil order for the paired estimator.

    Odd r is rounded up to the next even order whenever the grid allows it:
    the pair term only exposes even derivative orders, so orders 2q-1 and 2q
    define the same estimator, and the wider windows are what make that
    identity exact.  At k = r (odd) the wider window does not fit and the
    odd-order construction is used.
    """
    r_even = r + (r % 2)
    return r_even if k >= r_even else r


def _checked_blocks(grid: GridSpec, r: int, mode: str) -> BlockAssignment | None:
    if mode == "free":
        return None
    if mode == "block":
        return block_partition(grid, r)
    raise ValueError(f"unknown stencil mode {mode!r}")


def estimate_analytic_cv(f, derivative_oracle, r: int, grid: GridSpec,
                         stream: Stream, keep_terms: bool = False) -> EstimateReport:
    """Antithetic pairs plus an exact-derivative Taylor control variate.

    ``derivative_oracle(alpha, points)`` must return D^alpha f at the given
    points; it is consulted for every even total order below r.  Exact for
    polynomials of total degree < r on every single run.
    """
    _require_margin_free(grid)
    if r < 1:
        raise OrderError(f"order must be >= 1, got {r}")
    ctr = centre_array(grid)
    alphas = _even_alphas(grid.s, r)
    derivs = {a: np.asarray(derivative_oracle(a, ctr), dtype=float) for a in alphas}
    return _paired_value(f, grid, stream, derivs, "analytic_cv", r,
                         n_det=0, keep_terms=keep_terms)


def estimate_paired_cv(f, r: int, grid: GridSpec, stream: Stream,
                       mode: str = "free", keep_terms: bool = False) -> EstimateReport:
    """Antithetic pairs plus difference-based control variates (even orders).

    Evaluates f once at every centre (shared by all stencils) and at the
    2 k^s random pair points: n = 3 k^s.  Exact for polynomials of total
    degree < r; RMSE of order n^(-1/2 - r/s) for r-smooth f.
    """
    _require_margin_free(grid)
    if r < 1:
        raise OrderError(f"order must be >= 1, got {r}")
    if grid.k < r:
        raise ResolutionError(f"need k >= r, got k={grid.k}, r={r}")
    blocks = _checked_blocks(grid, r, mode)
    alphas = _even_alphas(grid.s, r)
    derivs = {}
    n_det = 0
    if alphas:
        # block-local stencils must fit in side-r blocks, so the widened
        # window of the odd-order identity is a free-mode refinement only
        r_build = r if blocks is not None else _paired_stencil_order(r, grid.k)
        fvals = np.asarray(f(centre_array(grid)), dtype=float)
        n_det = grid.n_centres
        derivs = {a: derivative_grid(fvals, a, grid, r_build, blocks) for a in alphas}
    return _paired_value(f, grid, stream, derivs, "paired_cv", r,
                         n_det=n_det, mode=mode, keep_terms=keep_terms)


def _paired_value(f, grid, stream, derivs, variant, r, n_det, mode="free",
                  keep_terms=False) -> EstimateReport:
    means, rows, _ = _shift_parts(f, grid, (1, -1), stream, guard=False)
    value = _combine((0.5, 0.5), means)
    terms = _combine_rows((0.5, 0.5), rows) if keep_terms else None
    if derivs:
        u = stream.offsets(grid)
        cv = np.zeros(grid.n_centres)
        for alpha, d_hat in derivs.items():
            cv += d_hat * _cv_factor(alpha, u, grid.k)
        value -= float(np.sum(cv)) / float(grid.k) ** grid.s
        if terms is not None:
            terms = terms - cv
    return EstimateReport(
        value=value,
        config=EstimatorConfig(variant, r, grid, mode),
        n_deterministic=n_det,
        n_random=2 * grid.n_centres,
        n_in_domain=n_det + 2 * grid.n_centres,
        normalizer=grid.n_centres,
        per_stratum_terms=terms,
    )


def estimate_single_cv(f, r: int, grid: GridSpec, stream: Stream,
                       mode: str = "free", keep_terms: bool = False) -> EstimateReport:
    """Single random evaluation per stratum, control variates on all orders < r.

    n = 2 k^s (one random point per stratum plus the centre values).  At
    r = 1 the control-variate sum is empty and this is exactly haber1.
    """
    _require_margin_free(grid)
    if r < 1:
        raise OrderError(f"order must be >= 1, got {r}")
    if grid.k < r:
        raise ResolutionError(f"need k >= r, got k={grid.k}, r={r}")
    blocks = _checked_blocks(grid, r, mode)
    means, rows, _ = _shift_parts(f, grid, (1,), stream, guard=False)
    value = _combine((1.0,), means)
    terms = _combine_rows((1.0,), rows) if keep_terms else None
    alphas = _all_alphas(grid.s, r)
    n_det = 0
    if alphas:
        fvals = np.asarray(f(centre_array(grid)), dtype=float)
        n_det = grid.n_centres
        u = stream.offsets(grid)
        cv = np.zeros(grid.n_centres)
        for alpha in alphas:
            d_hat = derivative_grid(fvals, alpha, grid, r, blocks)
            cv += d_hat * _cv_factor(alpha, u, grid.k)
        value -= float(np.sum(cv)) / float(grid.k) ** grid.s
        if terms is not None:
            terms = terms - cv
    return EstimateReport(
        value=value,
        config=EstimatorConfig("single_cv", r, grid, mode),
        n_deterministic=n_det,
        n_random=grid.n_centres,
        n_in_domain=n_det + grid.n_centres,
        normalizer=grid.n_centres,
        per_stratum_terms=terms,
    )


def estimate_vanishing(f, r: int, grid: GridSpec, stream: Stream,
                       keep_terms: bool = False) -> EstimateReport:
    """Dilation-combination estimator for boundary-vanishing integrands.

    The caller asserts that f and its derivatives up to order r vanish on
    the cube boundary (unchecked - it only affects the convergence rate, not
    unbiasedness).  Evaluation points outside the closed cube contribute 0
    without calling f.  The grid must carry the margin matching r.
    """
    coeff = shift_coefficients(r)
    if grid.m != coeff.margin:
        raise ValueError(
            f"order {r} needs a grid with margin {coeff.margin}, got m={grid.m}"
        )
    if grid.k < 2:
        raise ResolutionError(f"need k >= 2, got {grid.k}")
    means, rows, n_in = _shift_parts(f, grid, coeff.shifts, stream, guard=True)
    return EstimateReport(
        value=_combine(coeff.weights, means),
        config=EstimatorConfig("vanishing", r, grid),
        n_deterministic=0,
        n_random=r * grid.n_centres,
        n_in_domain=n_in,
        normalizer=grid.k ** grid.s,
        per_stratum_terms=_combine_rows(coeff.weights, rows) if keep_terms else None,
        shift_averages=tuple(means),
    )


# ---------------------------------------------------------------------------
# asymptotic variance diagnostic

def asymptotic_variance_estimate(derivative_oracle, s: int, r: int, budget: int,
                                 seed: int = 0, quad_per_axis: int | None = None) -> float:
    """Limit of k^(s+2r) Var(paired estimate at resolution k) as k grows.

    Valid when the estimator's stencils are block-local.  The limit couples
    the covariances of the base-resolution (k = r) estimator applied to the
    centred monomials of total degree r with the pairwise products of the
    order-r derivatives of f.  The covariances have no closed form and are
    estimated from ``budget`` joint Monte Carlo replicates on shared
    streams; the derivative products are integrated with a midpoint rule.
    """
    if budget < 2:
        raise ValueError(f"need budget >= 2, got {budget}")
    alphas = list(multi_indices(s, r))
    grid = GridSpec(s, r, 0)
    monomials = [_centred_monomial(alpha) for alpha in alphas]

    samples = np.empty((budget, len(alphas)))
    for b in range(budget):
        stream = Stream(seed, b)  # shared across monomials: joint replicates
        for j, g in enumerate(monomials):
            samples[b, j] = estimate_paired_cv(g, r, grid, stream, mode="block").value
    cov = np.cov(samples.T, ddof=1).reshape(len(alphas), len(alphas))

    if quad_per_axis is None:
        quad_per_axis = {1: 4096, 2: 128}.get(s, max(8, int(round(8192 ** (1 / s)))))
    axis = (np.arange(quad_per_axis) + 0.5) / quad_per_axis
    mesh = np.meshgrid(*([axis] * s), indexing="ij")
    qpts = np.stack([m.ravel() for m in mesh], axis=1)
    dvals = [np.asarray(derivative_oracle(a, qpts), dtype=float) for a in alphas]
    weight = 1.0 / len(qpts)

    total = 0.0
    for i, ai in enumerate(alphas):
        for j, aj in enumerate(alphas):
            cross = float(np.sum(dvals[i] * dvals[j])) * weight
            total += cov[i, j] * cross / (multi_factorial(ai) * multi_factorial(aj))
    return float(r) ** (2 * r + s) * total

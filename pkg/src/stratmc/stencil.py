"""Finite-difference stencils on the stratification grid.

A derivative of total order ``|alpha| < r`` is approximated at a grid centre
by a weighted sum of function values at nearby centres.  The construction is
a per-axis composition: active axes are consumed in ascending order, the
first consumed axis uses a window of ``r`` nodes and each later axis uses a
window shrunk by the derivative order already consumed.  Weights are exact
rationals extracted from Lagrange basis polynomials at the integer offsets,
so a stencil with window ``w`` reproduces the derivative of any univariate
polynomial of degree < ``w`` exactly, and the composed stencil reproduces
``D^alpha`` of any polynomial of total degree < ``r``.

Near the boundary the centred offset window is shifted just enough to stay
on the grid (ties between two centred windows go to the negative side).  In
block mode the window must additionally stay inside the block of the centre,
which keeps the per-stratum contributions of the estimators independent
across blocks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import Iterator, Mapping

import numpy as np

from .errors import IncompleteEvaluationError, OrderError, ResolutionError, StencilError
from .lattice import GridSpec

__all__ = [
    "abs_order",
    "nonzero_count",
    "multi_factorial",
    "multi_indices",
    "UnivariateStencil",
    "univariate_weights",
    "univariate_weights_exact",
    "axis_node_offsets",
    "DerivativeStencil",
    "derivative_stencil",
    "apply_stencil",
    "BlockAssignment",
    "block_partition",
    "derivative_grid",
    "error_constant",
]


# ---------------------------------------------------------------------------
# multi-index helpers

def abs_order(alpha) -> int:
    """Total derivative order |alpha|."""
    return int(sum(alpha))

def nonzero_count(alpha) -> int:
    """Number of active axes."""
    return int(sum(1 for a in alpha if a))

def multi_factorial(alpha) -> int:
    out = 1
    for a in alpha:
        out *= factorial(a)
    return out

def multi_indices(s: int, total: int) -> Iterator[tuple[int, ...]]:
    """All multi-indices of length s with |alpha| = total, lexicographic."""
    if s == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in multi_indices(s - 1, total - head):
            yield (head,) + rest


# ---------------------------------------------------------------------------
# univariate weights

@lru_cache(maxsize=4096)
def _lagrange_coeff_exact(kappa: tuple[int, ...], a: int) -> tuple[Fraction, ...]:
    """Exact weights w with sum_j w_j p(kappa_j) = p^(a)(0) for deg(p) < len(kappa).

    Equivalently the solution of the Vandermonde moment system
    ``sum_j w_j kappa_j^i = a! * [i == a]`` for ``i < len(kappa)``; extracting
    the x^a coefficient of each Lagrange basis polynomial gives it without
    ever forming the ill-conditioned matrix.
    """
    l = len(kappa)
    if len(set(kappa)) != l:
        raise StencilError(f"stencil nodes must be distinct, got {kappa}")
    if not 0 <= a <= l - 1:
        raise OrderError(f"derivative order {a} needs at least {a + 1} nodes, got {l}")
    weights = []
    for j in range(l):
        num = [Fraction(1)]
        den = Fraction(1)
        for i in range(l):
            if i == j:
                continue
            nxt = [Fraction(0)] * (len(num) + 1)
            for p, c in enumerate(num):
                nxt[p] += c * (-kappa[i])
                nxt[p + 1] += c
            num = nxt
            den *= kappa[j] - kappa[i]
        weights.append(num[a] / den * factorial(a))
    return tuple(weights)


@dataclass(frozen=True)
class UnivariateStencil:
    """Nodes (integer offsets, units of one grid step) and weights for d^a/dx^a."""

    offsets: tuple[int, ...]
    weights: np.ndarray
    order: int

    def __len__(self) -> int:
        return len(self.offsets)


def univariate_weights_exact(kappa, a: int) -> tuple[Fraction, ...]:
    """Rational weights; oracle counterpart of univariate_weights."""
    kappa = tuple(int(x) for x in kappa)
    if not 1 <= a <= len(kappa) - 1:
        raise OrderError(f"derivative order must be in [1, {len(kappa) - 1}], got {a}")
    return _lagrange_coeff_exact(kappa, a)

def univariate_weights(kappa, a: int) -> UnivariateStencil:
    """Difference weights for the a-th derivative on distinct nodes ``kappa``."""
    kappa = tuple(int(x) for x in kappa)
    exact = univariate_weights_exact(kappa, a)
    w = np.array([float(x) for x in exact])
    w.setflags(write=False)
    return UnivariateStencil(offsets=kappa, weights=w, order=a)


def axis_node_offsets(position: int, window: int, lo: int, hi: int) -> tuple[int, ...]:
    """Contiguous window of offsets around ``position`` inside [lo, hi].

    Centred when possible; an even window leans one step to the negative
    side; at a boundary the window shifts by the minimal amount that fits.
    """
    if window < 2:
        raise StencilError(f"window must have at least 2 nodes, got {window}")
    if hi - lo + 1 < window:
        raise ResolutionError(
            f"window of {window} nodes does not fit in axis range [{lo}, {hi}]"
        )
    base = -(window // 2)
    start = max(lo - position, min(base, hi - position - (window - 1)))
    return tuple(range(start, start + window))


def select_axis_nodes(centre_index, axis: int, grid: GridSpec, window: int,
                      blocks: "BlockAssignment | None" = None) -> tuple[int, ...]:
    """Offset window for one axis of a centre, free or block-constrained."""
    j = int(centre_index[axis])
    if blocks is None:
        lo, hi = -grid.m, grid.k + grid.m - 1
    else:
        lo, hi = blocks.axis_bounds(j)
    return axis_node_offsets(j, window, lo, hi)


# ---------------------------------------------------------------------------
# multivariate composition

def _axis_windows(alpha, r: int) -> list[tuple[int, int, int]]:
    """(axis, derivative order, window) per active axis, ascending axis order.

    The first consumed axis gets a window of r nodes; each later axis gets
    r minus the derivative order consumed before it.  The resulting stencil
    keeps the full error order k^-(r-|alpha|) while never sampling further
    than r-1 steps from the centre.
    """
    steps = []
    consumed = 0
    for axis, a in enumerate(alpha):
        if a == 0:
            continue
        window = r - consumed
        if window < a + 1:
            raise OrderError(f"order {alpha} not reachable with smoothness {r}")
        steps.append((axis, a, window))
        consumed += a
    return steps


@dataclass(frozen=True)
class DerivativeStencil:
    """Grid stencil approximating D^alpha f at one centre.

    ``value = scale * sum_j weights[j] * f(centre_of(nodes[j]))`` where scale
    is k^|alpha|.  Weights depend only on the offset pattern, never on k.
    """

    alpha: tuple[int, ...]
    centre: tuple[int, ...]
    offsets: np.ndarray        # (n_nodes, s) int
    nodes: np.ndarray          # (n_nodes, s) int
    weights: np.ndarray        # (n_nodes,)
    scale: float


@lru_cache(maxsize=16384)
def _pattern(alpha: tuple[int, ...], axis_offsets: tuple[tuple[int, ...], ...],
             orders: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product offsets and weights for one boundary pattern."""
    s = len(alpha)
    active = [i for i, a in enumerate(alpha) if a]
    per_axis_w = [univariate_weights(offs, a).weights
                  for offs, a in zip(axis_offsets, orders)]
    combos = list(itertools.product(*[range(len(o)) for o in axis_offsets]))
    offsets = np.zeros((len(combos), s), dtype=np.int64)
    weights = np.ones(len(combos))
    for row, combo in enumerate(combos):
        for ax_pos, pick in enumerate(combo):
            offsets[row, active[ax_pos]] = axis_offsets[ax_pos][pick]
            weights[row] *= per_axis_w[ax_pos][pick]
    offsets.setflags(write=False)
    weights.setflags(write=False)
    return offsets, weights


def derivative_stencil(alpha, centre_index, grid: GridSpec, r: int,
                       blocks: "BlockAssignment | None" = None) -> DerivativeStencil:
    """Build the stencil for D^alpha at one centre.

    Requires |alpha| < r and k >= r (so every window fits); in block mode
    nodes stay inside the block of the centre.
    """
    alpha = tuple(int(a) for a in alpha)
    centre = tuple(int(j) for j in centre_index)
    if len(alpha) != grid.s or any(a < 0 for a in alpha):
        raise ValueError(f"bad multi-index {alpha} for dimension {grid.s}")
    if abs_order(alpha) >= r:
        raise OrderError(f"|alpha|={abs_order(alpha)} must be < r={r}")
    if abs_order(alpha) == 0:
        one = np.ones(1)
        z = np.zeros((1, grid.s), dtype=np.int64)
        return DerivativeStencil(alpha, centre, z, np.array([centre]), one, 1.0)
    if grid.k < r:
        raise ResolutionError(f"need k >= r, got k={grid.k}, r={r}")
    steps = _axis_windows(alpha, r)
    axis_offsets = tuple(
        select_axis_nodes(centre, axis, grid, window, blocks)
        for axis, _a, window in steps
    )
    orders = tuple(a for _axis, a, _w in steps)
    offsets, weights = _pattern(alpha, axis_offsets, orders)
    nodes = np.asarray(centre, dtype=np.int64) + offsets
    return DerivativeStencil(alpha, centre, offsets, nodes,
                             weights, float(grid.k) ** abs_order(alpha))


def apply_stencil(stencil: DerivativeStencil, values: Mapping[tuple[int, ...], float]) -> float:
    """Evaluate the stencil on a map from centre index to function value."""
    acc = 0.0
    for node, w in zip(stencil.nodes, stencil.weights):
        key = tuple(int(x) for x in node)
        if key not in values:
            raise IncompleteEvaluationError(f"no value for stencil node {key}")
        acc += w * values[key]
    return stencil.scale * acc


# ---------------------------------------------------------------------------
# block-local mode

@dataclass(frozen=True)
class BlockAssignment:
    """Partition of the k^s unit-cube strata into blocks of r^s cells.

    Axis indices tile in runs of ``r``; when r does not divide k the last
    block is anchored at the upper boundary and overlaps its neighbour, and
    overlapped cells belong to the lower-indexed block.
    """

    k: int
    r: int
    starts: tuple[int, ...]

    @property
    def blocks_per_axis(self) -> int:
        return len(self.starts)

    @property
    def n_blocks(self) -> int:
        # total for dimension s is blocks_per_axis ** s; the assignment is
        # the tensor product of the per-axis rule
        return self.blocks_per_axis

    def axis_block(self, j: int) -> int:
        return min(j // self.r, self.blocks_per_axis - 1)

    def axis_bounds(self, j: int) -> tuple[int, int]:
        start = self.starts[self.axis_block(j)]
        return start, start + self.r - 1

    def block_of(self, index) -> tuple[int, ...]:
        return tuple(self.axis_block(int(j)) for j in index)


def block_partition(grid: GridSpec, r: int) -> BlockAssignment:
    """Side-r blocks covering the unit-cube part of the grid (m must be 0)."""
    if grid.m != 0:
        raise ValueError("block partition is defined for margin-free grids")
    if grid.k < r:
        raise ResolutionError(f"need k >= r for side-r blocks, got k={grid.k}")
    q, rem = divmod(grid.k, r)
    starts = [i * r for i in range(q)]
    if rem:
        starts.append(grid.k - r)
    return BlockAssignment(k=grid.k, r=r, starts=tuple(starts))


# ---------------------------------------------------------------------------
# whole-grid evaluation

@lru_cache(maxsize=2048)
def _axis_matrix(k: int, window: int, a: int, lo: int, hi: int,
                 block_key: tuple[int, int] | None) -> np.ndarray:
    """(k', k') matrix applying the univariate stencil at every axis position.

    Row j holds the weights of the window chosen for position j.  ``lo``/
    ``hi`` give the index range of the axis (margins included); in block
    mode the window is confined to the side-r block of each position.
    """
    size = hi - lo + 1
    mat = np.zeros((size, size))
    blocks = BlockAssignment(k=k, r=block_key[0], starts=_starts(k, block_key[0])) \
        if block_key else None
    for row, j in enumerate(range(lo, hi + 1)):
        if blocks is None:
            b_lo, b_hi = lo, hi
        else:
            b_lo, b_hi = blocks.axis_bounds(j)
        offs = axis_node_offsets(j, window, b_lo, b_hi)
        w = univariate_weights(offs, a).weights
        mat[row, [o + j - lo for o in offs]] = w
    mat.setflags(write=False)
    return mat


def _starts(k: int, r: int) -> tuple[int, ...]:
    q, rem = divmod(k, r)
    starts = [i * r for i in range(q)]
    if rem:
        starts.append(k - r)
    return tuple(starts)


def derivative_grid(fvals: np.ndarray, alpha, grid: GridSpec, r: int,
                    blocks: BlockAssignment | None = None) -> np.ndarray:
    """D^alpha estimate at every centre from the flat vector of centre values.

    ``fvals`` is indexed like :func:`stratmc.lattice.centre_array`.  The
    stencil is applied axis by axis as a banded matrix, so cost is
    O(n_centres * window) per active axis.
    """
    alpha = tuple(int(a) for a in alpha)
    if abs_order(alpha) >= r:
        raise OrderError(f"|alpha|={abs_order(alpha)} must be < r={r}")
    side = grid.side
    t = np.asarray(fvals, dtype=float).reshape((side,) * grid.s)
    if abs_order(alpha) == 0:
        return t.reshape(-1).copy()
    if grid.k < r:
        raise ResolutionError(f"need k >= r, got k={grid.k}, r={r}")
    lo, hi = -grid.m, grid.k + grid.m - 1
    block_key = (blocks.r, 0) if blocks is not None else None
    for axis, a, window in _axis_windows(alpha, r):
        mat = _axis_matrix(grid.k, window, a, lo, hi, block_key)
        t = np.moveaxis(np.tensordot(mat, t, axes=(1, axis)), 0, axis)
    return t.reshape(-1) * float(grid.k) ** abs_order(alpha)


# ---------------------------------------------------------------------------
# worst-case error constant

def _window_patterns(window: int) -> list[tuple[int, ...]]:
    """Every boundary shift a contiguous window can take on a large grid."""
    return [tuple(range(start, start + window)) for start in range(-(window - 1), 1)]


def _full_patterns(window: int) -> list[tuple[int, ...]]:
    """All distinct-node patterns inside {-(window-1), ..., window-1}."""
    universe = range(-(window - 1), window)
    return [tuple(sorted(c)) for c in itertools.combinations(universe, window)]


def _step_constant(window: int, a: int, exponent: int, full: bool) -> float:
    pats = _full_patterns(window) if full else _window_patterns(window)
    best = 0.0
    for pat in pats:
        orders = range(1, window) if full else (a,)
        for ao in orders:
            w = univariate_weights(pat, ao).weights
            best = max(best, float(np.sum(np.abs(w * np.array(pat, dtype=float) ** exponent))))
    return best


def error_constant(s: int, r: int, family: str = "single", full_family: bool = False) -> float:
    """Computable constant C with |estimate - integral| <= C * ||f||_r * n^(-r/s).

    Assembled from the worst absolute weighted-moment sums of the univariate
    stencils the chosen estimator family actually generates (boundary shifts
    included), folded through the per-axis composition, then combined with
    the Taylor-remainder term.  ``family`` is "single" (control variates on
    every order below r) or "paired" (even orders only, windows widened to
    the next even smoothness).  With ``full_family`` the per-step maxima run
    over every distinct-node pattern and derivative order the window size
    admits, which can only enlarge the constant.
    """
    if r < 2:
        raise OrderError(f"error constant defined for r >= 2, got {r}")
    if family == "single":
        totals = range(1, r)
        r_build = r
    elif family == "paired":
        totals = range(2, r, 2)
        r_build = r + (r % 2)
    else:
        raise ValueError(f"unknown stencil family {family!r}")

    c_bar = 0.0
    for total in totals:
        for alpha in multi_indices(s, total):
            consumed = 0
            c_alpha = 0.0
            first = True
            for _axis, a, _w in _axis_windows(alpha, r):
                window = r_build - consumed
                budget = r - consumed
                m_step = _step_constant(window, a, budget, full_family)
                c_alpha = m_step if first else m_step * (1.0 + c_alpha)
                first = False
                consumed += a
            c_bar = max(c_bar, c_alpha)

    cv_sum = sum(1.0 / multi_factorial(alpha)
                 for total in range(1, r)
                 for alpha in multi_indices(s, total))
    tail_sum = sum(1.0 / multi_factorial(alpha) for alpha in multi_indices(s, r))
    return 2.0 * c_bar * cv_sum + 2.0 ** (1 - r) * tail_sum

"""Mapping integrals over R^s to boundary-vanishing integrands on the cube.

The componentwise map ``psi(u) = (2u - 1) / (u (1 - u))^tau`` is a smooth
bijection from (0, 1) to the real line with heavy (Student-like) tails.
Substituting it into an integral over R^s gives an integrand on the unit
cube that, for any g decaying polynomially together with its derivatives,
vanishes on the cube boundary with all derivatives up to the matching order.
Such integrands are exactly what the dilation-combination estimator in
:mod:`stratmc.estimators` wants.

``laplace_reparametrize`` applies the recipe to log-densities: centre at the
mode, scale by a Cholesky factor of the curvature there, then wrap with the
tail map.  Two scale conventions are exposed (see the function docstring)
because they lead to very differently conditioned integrands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, OptimizationError, StratError

__all__ = [
    "psi",
    "jacobian_factor",
    "VanishingIntegrand",
    "wrap",
    "LaplaceFit",
    "laplace_reparametrize",
]


def _interior(u: np.ndarray) -> None:
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise DomainError("the tail map is defined on the open unit cube only")


def psi(u, tau: float):
    """Componentwise (2u - 1) / (u^tau (1-u)^tau); open cube to R^s."""
    u = np.asarray(u, dtype=float)
    _interior(u)
    return (2.0 * u - 1.0) / (u * (1.0 - u)) ** tau


def jacobian_factor(u, tau: float):
    """Product over axes of psi'(u_i); the change-of-variables weight.

    Per axis: 2 / (u(1-u))^tau + tau (2u-1)^2 / (u(1-u))^(tau+1), which is
    minimal (2 * 4^tau) at u = 1/2 and blows up polynomially at the faces.
    For points of shape (n, s) the product runs over the last axis.
    """
    u = np.asarray(u, dtype=float)
    _interior(u)
    base = u * (1.0 - u)
    per_axis = 2.0 / base ** tau + tau * (2.0 * u - 1.0) ** 2 / base ** (tau + 1.0)
    if u.ndim == 0:
        return float(per_axis)
    return per_axis.prod(axis=-1)


@dataclass
class VanishingIntegrand:
    """g pushed through the tail map; zero on the cube boundary.

    Calling convention matches the estimators: (n, s) points in, (n,) values
    out.  When g underflows to zero the Jacobian factor is not evaluated, so
    no 0 * inf appears near the faces.
    """

    g: Callable[[np.ndarray], np.ndarray]
    s: int
    tau: float

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(len(pts))
        interior = np.all((pts > 0.0) & (pts < 1.0), axis=1)
        if not interior.any():
            return out
        inner = pts[interior]
        gvals = np.asarray(self.g(psi(inner, self.tau)), dtype=float)
        if not np.all(np.isfinite(gvals)):
            raise StratError("wrapped integrand produced a non-finite value")
        nz = gvals != 0.0
        if nz.any():
            vals = np.zeros(len(inner))
            vals[nz] = gvals[nz] * jacobian_factor(inner[nz], self.tau)
            out[interior] = vals
        return out


def wrap(g, s: int, tau: float = 1.5) -> VanishingIntegrand:
    """Turn an integrand on R^s into a boundary-vanishing one on the cube.

    The caller asserts that g and its derivatives up to the order it intends
    to exploit decay polynomially at infinity (unchecked); the integral of
    the wrapped function over the cube equals the integral of g over R^s.
    """
    return VanishingIntegrand(g=g, s=s, tau=tau)


# ---------------------------------------------------------------------------
# Laplace-style reparametrization of log-densities

def _num_gradient(h, x: np.ndarray, step: float) -> np.ndarray:
    s = len(x)
    pts = np.repeat(x[None, :], 2 * s, axis=0)
    for i in range(s):
        pts[2 * i, i] += step
        pts[2 * i + 1, i] -= step
    vals = np.asarray(h(pts), dtype=float)
    return (vals[0::2] - vals[1::2]) / (2.0 * step)


def _num_hessian(h, x: np.ndarray, step: float) -> np.ndarray:
    s = len(x)
    hess = np.empty((s, s))
    h0 = float(np.asarray(h(x[None, :]))[0])
    for i in range(s):
        for j in range(i, s):
            if i == j:
                pts = np.repeat(x[None, :], 2, axis=0)
                pts[0, i] += step
                pts[1, i] -= step
                vp, vm = np.asarray(h(pts), dtype=float)
                hess[i, i] = (vp - 2.0 * h0 + vm) / step ** 2
            else:
                pts = np.repeat(x[None, :], 4, axis=0)
                pts[0, [i, j]] += step
                pts[1, i] += step
                pts[1, j] -= step
                pts[2, i] -= step
                pts[2, j] += step
                pts[3, [i, j]] -= step
                vpp, vpm, vmp, vmm = np.asarray(h(pts), dtype=float)
                hess[i, j] = hess[j, i] = (vpp - vpm - vmp + vmm) / (4.0 * step ** 2)
    return hess


@dataclass
class LaplaceFit:
    """Mode, curvature and wrapped integrand of exp(h)."""

    mode: np.ndarray
    hessian: np.ndarray          # of -h at the mode (positive definite)
    scale_matrix: np.ndarray
    integrand: VanishingIntegrand
    trace: list = field(default_factory=list)


def laplace_reparametrize(h, mode_guess, *, scale: str, tau: float = 1.5,
                          grad_tol: float = 1e-8, max_iter: int = 200,
                          fd_step: float = 1e-5) -> LaplaceFit:
    """Recentre exp(h) at its mode and wrap it into a cube integrand.

    ``h`` maps (n, s) arrays of points to (n,) log-density values and must be
    concave near the mode.  The mode is found by damped Newton ascent on
    central-difference derivatives, stopping when the gradient max-norm
    drops below ``grad_tol``.

    ``scale`` selects the linear change of variables, with H the curvature
    (Hessian of -h) at the mode:

    * ``"inv-hessian"`` - L is the Cholesky factor of H^-1, the standard
      Laplace scaling; the pulled-back density is approximately standard
      normal.
    * ``"hessian"`` - L is the Cholesky factor of H itself.

    Both give integrands whose cube integral equals the integral of exp(h)
    (|det L| is folded in); they differ only in conditioning, and no default
    is taken.
    """
    if scale not in ("inv-hessian", "hessian"):
        raise ValueError(f"scale must be 'inv-hessian' or 'hessian', got {scale!r}")
    x = np.asarray(mode_guess, dtype=float).copy()
    s = len(x)
    trace = [x.copy()]
    for _ in range(max_iter):
        grad = _num_gradient(h, x, fd_step)
        if np.max(np.abs(grad)) <= grad_tol:
            break
        hess = _num_hessian(h, x, fd_step)
        try:
            step_dir = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step_dir = grad
        if float(grad @ step_dir) <= 0.0:
            step_dir = grad  # curvature not usable here; fall back to ascent
        h_now = float(np.asarray(h(x[None, :]))[0])
        t = 1.0
        while t > 1e-12:
            cand = x + t * step_dir
            if float(np.asarray(h(cand[None, :]))[0]) > h_now:
                break
            t *= 0.5
        else:
            raise OptimizationError("no ascent step found from current iterate", trace)
        x = x + t * step_dir
        trace.append(x.copy())
    else:
        raise OptimizationError(
            f"mode search did not reach gradient tolerance {grad_tol} "
            f"in {max_iter} iterations", trace,
        )

    curvature = -_num_hessian(h, x, fd_step)
    try:
        if scale == "inv-hessian":
            scale_matrix = np.linalg.cholesky(np.linalg.inv(curvature))
        else:
            scale_matrix = np.linalg.cholesky(curvature)
    except np.linalg.LinAlgError as exc:
        raise StratError(f"curvature at the mode is not positive definite: {exc}") from exc

    log_det = float(np.log(np.abs(np.linalg.det(scale_matrix))))
    mode = x.copy()

    def g(y: np.ndarray) -> np.ndarray:
        beta = mode[None, :] + y @ scale_matrix.T
        return np.exp(np.asarray(h(beta), dtype=float) + log_det)

    return LaplaceFit(
        mode=mode,
        hessian=curvature,
        scale_matrix=scale_matrix,
        integrand=wrap(g, s, tau),
        trace=trace,
    )

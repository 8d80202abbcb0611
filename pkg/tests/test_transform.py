import math

import numpy as np
import pytest

from stratmc.errors import DomainError, OptimizationError, StratError
from stratmc.lattice import GridSpec, Stream
from stratmc.estimators import estimate_vanishing
from stratmc.transform import (
    jacobian_factor,
    laplace_reparametrize,
    psi,
    wrap,
)


def test_psi_midpoint_zero():
    assert np.allclose(psi(np.full(3, 0.5), 1.5), 0.0)


def test_psi_value():
    assert psi(np.array([0.75]), 1.0)[0] == pytest.approx(8.0 / 3.0, rel=1e-12)


def test_psi_monotone():
    assert psi(np.array([0.6]), 1.5)[0] < psi(np.array([0.7]), 1.5)[0]


def test_psi_boundary_rejected():
    with pytest.raises(DomainError):
        psi(np.array([0.0, 0.5]), 1.5)
    with pytest.raises(DomainError):
        jacobian_factor(np.array([1.0]), 1.5)


def test_jacobian_midpoint():
    assert jacobian_factor(np.array([[0.5]]), 1.5)[0] == pytest.approx(2 * 4 ** 1.5, rel=1e-12)


def test_jacobian_matches_finite_difference():
    # centred difference of psi with h = 1e-5 agrees to ~1e-6 relative
    tau = 1.5
    h = 1e-5
    for u in (0.1, 0.3, 0.62, 0.9):
        fd = (psi(np.array([u + h]), tau)[0] - psi(np.array([u - h]), tau)[0]) / (2 * h)
        got = jacobian_factor(np.array([[u]]), tau)[0]
        assert got == pytest.approx(fd, rel=1e-6)


def test_jacobian_global_minimum():
    # fine 1-d scan: the factor is minimal at the midpoint, value 2 * 4^tau
    tau = 1.5
    us = np.linspace(1e-4, 1 - 1e-4, 20001).reshape(-1, 1)
    vals = jacobian_factor(us, tau)
    assert vals.min() >= 2 * 4 ** tau - 1e-9


def test_jacobian_product_over_axes():
    u = np.array([[0.3, 0.7]])
    per = jacobian_factor(np.array([[0.3]]), 1.5)[0] * jacobian_factor(np.array([[0.7]]), 1.5)[0]
    assert jacobian_factor(u, 1.5)[0] == pytest.approx(per, rel=1e-12)


# ---------------------------------------------------------------------------
# wrapping

def _gauss_1d(x):
    x = np.atleast_2d(x)
    return np.exp(-0.5 * np.sum(x * x, axis=1)) / math.sqrt(2 * math.pi)


def test_wrap_zero_function():
    f = wrap(lambda x: np.zeros(len(np.atleast_2d(x))), 2, 1.5)
    pts = np.random.default_rng(0).uniform(0.01, 0.99, size=(50, 2))
    assert np.all(f(pts) == 0.0)


def test_wrap_boundary_is_zero():
    f = wrap(_gauss_1d, 1, 1.5)
    assert f(np.array([[0.0], [1.0], [0.5]]))[2] > 0.0
    assert f(np.array([[0.0]]))[0] == 0.0
    assert f(np.array([[1.0]]))[0] == 0.0


def test_wrap_boundary_decay():
    f = wrap(_gauss_1d, 1, 1.5)
    near = f(np.array([[1e-3]]))[0]
    mid = f(np.array([[0.5]]))[0]
    assert near < 1e-6 * mid


def test_wrap_gaussian_unbiased():
    f = wrap(_gauss_1d, 1, 1.5)
    vals = np.array([
        estimate_vanishing(f, 3, GridSpec(1, 16, 3), Stream(0, rep)).value
        for rep in range(400)
    ])
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - 1.0) <= 4 * se


def test_wrap_nonfinite_raises():
    bad = wrap(lambda x: np.full(len(np.atleast_2d(x)), np.nan), 1, 1.5)
    with pytest.raises(StratError):
        bad(np.array([[0.5]]))


def test_roundtrip_by_bisection():
    # solve psi(u) = x on (0,1), then map back: recovers x to 1e-10
    tau = 1.5
    for x in np.linspace(-10, 10, 41):
        lo, hi = 1e-12, 1 - 1e-12
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if psi(np.array([mid]), tau)[0] < x:
                lo = mid
            else:
                hi = mid
        u = 0.5 * (lo + hi)
        assert psi(np.array([u]), tau)[0] == pytest.approx(x, abs=1e-10)


def test_change_of_variables_quadrature():
    # compactly supported g: cube quadrature of the wrapped integrand matches
    # the line quadrature of g within discretization error
    def g(x):
        x = np.atleast_2d(x)[:, 0]
        return np.where(np.abs(x) < 1.0, (1.0 - x * x) ** 2, 0.0)

    exact = 16.0 / 15.0
    f = wrap(lambda x: g(x), 1, 1.5)
    n = 40001
    us = ((np.arange(n) + 0.5) / n).reshape(-1, 1)
    quad = f(us).sum() / n
    assert quad == pytest.approx(exact, abs=1e-6)


# ---------------------------------------------------------------------------
# Laplace reparametrization

def _mvn_logpdf(mu, cov):
    covi = np.linalg.inv(cov)
    logz = -0.5 * math.log(np.linalg.det(2 * math.pi * cov))

    def h(beta):
        beta = np.atleast_2d(beta)
        d = beta - mu
        return logz - 0.5 * np.einsum("ni,ij,nj->n", d, covi, d)

    return h


def test_laplace_mode_of_standard_quadratic():
    h = _mvn_logpdf(np.zeros(2), np.eye(2))
    fit = laplace_reparametrize(h, np.array([1.0, -2.0]), scale="inv-hessian")
    assert np.max(np.abs(fit.mode)) <= 1e-8


def test_laplace_normalized_density_integrates_to_one():
    mu = np.array([0.4, -0.1])
    cov = np.array([[1.0, 0.3], [0.3, 0.5]])
    h = _mvn_logpdf(mu, cov)
    for scale in ("inv-hessian", "hessian"):
        fit = laplace_reparametrize(h, np.zeros(2), scale=scale)
        vals = np.array([
            estimate_vanishing(fit.integrand, 3, GridSpec(2, 12, 3), Stream(1, rep)).value
            for rep in range(150)
        ])
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - 1.0) <= 4 * se


def test_laplace_scale_required_choice():
    h = _mvn_logpdf(np.zeros(1), np.eye(1))
    with pytest.raises(TypeError):
        laplace_reparametrize(h, np.zeros(1))  # scale is keyword-required
    with pytest.raises(ValueError):
        laplace_reparametrize(h, np.zeros(1), scale="cov")


def test_laplace_nonconvergent_trace():
    # a pure linear drift has no mode
    lin = lambda b: np.atleast_2d(b)[:, 0]
    with pytest.raises(OptimizationError) as err:
        laplace_reparametrize(lin, np.zeros(1), scale="inv-hessian", max_iter=5)
    assert len(err.value.trace) >= 1

import numpy as np
import pytest
from scipy.optimize import brentq

from drymep.boxmin import minimize_box, projected_gradient


def quadratic(A, b):
    def fun(x):
        return 0.5 * x @ A @ x - b @ x, A @ x - b
    return fun


@pytest.mark.parametrize("hessian", [None, "fd"])
def test_unconstrained_quadratic(hessian):
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    res = minimize_box(quadratic(A, b), [5.0, -5.0], [-10, -10], [10, 10], hessian=hessian)
    assert res.converged
    assert np.allclose(res.x, np.linalg.solve(A, b), atol=1e-7)


def test_active_bound_is_held():
    A = np.eye(3)
    b = np.array([2.0, -3.0, 0.5])
    lo, hi = np.array([0.0, -1.0, 0.0]), np.array([1.0, 1.0, 1.0])
    res = minimize_box(quadratic(A, b), [0.5, 0.5, 0.5], lo, hi, hessian="fd")
    assert np.allclose(res.x, [1.0, -1.0, 0.5], atol=1e-9)
    assert np.max(np.abs(projected_gradient(res.x, res.grad, lo, hi))) <= 1e-6


def test_rosenbrock_in_a_box():
    def rosen(z):
        x, y = z
        f = (1 - x) ** 2 + 100 * (y - x * x) ** 2
        g = np.array([-2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x)])
        return f, g

    res = minimize_box(rosen, [-1.2, 1.0], [-2, -2], [2, 0.5], hessian="fd", max_iter=500)
    # The box cuts off (1, 1); the constrained minimiser sits on y = 0.5.
    assert res.converged
    assert res.x[1] == pytest.approx(0.5)
    x_star = brentq(lambda x: -2 * (1 - x) - 400 * x * (0.5 - x * x), 0.5, 1.0)
    assert res.x[0] == pytest.approx(x_star, abs=1e-6)


def test_objective_never_increases():
    rng = np.random.default_rng(0)
    Q = rng.normal(size=(4, 4))
    A = Q @ Q.T + 0.1 * np.eye(4)
    res = minimize_box(quadratic(A, np.ones(4)), np.full(4, 3.0), -np.ones(4), np.ones(4))
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_evaluations_stay_in_box():
    seen = []
    lo, hi = np.zeros(2), np.ones(2)
    minimize_box(quadratic(np.eye(2), np.array([5.0, -5.0])), [0.5, 0.5], lo, hi,
                 hessian="fd", on_evaluate=seen.append)
    pts = np.array(seen)
    assert np.all(pts >= lo) and np.all(pts <= hi)

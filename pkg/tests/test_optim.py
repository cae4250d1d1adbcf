import numpy as np

from roadpercept.optim import levenberg_marquardt


def test_linear_least_squares_exact():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(20, 3))
    x_true = np.array([1.5, -2.0, 0.3])
    b = a @ x_true

    res = levenberg_marquardt(lambda x: a @ x - b, np.zeros(3))
    assert res.converged
    assert np.allclose(res.x, x_true, atol=1e-6)
    assert res.cost < 1e-12


def test_rosenbrock_residual_form():
    # Rosenbrock as residuals r = [10(y - x^2), 1 - x]; minimum at (1, 1).
    def fn(p):
        return np.array([10.0 * (p[1] - p[0] ** 2), 1.0 - p[0]])

    res = levenberg_marquardt(fn, np.array([-1.2, 1.0]), max_iters=500)
    assert res.converged
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-5)


def test_accepted_costs_monotone():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(30, 4))
    b = rng.normal(size=30)
    res = levenberg_marquardt(lambda x: a @ x - b, np.zeros(4))
    costs = np.array(res.accepted_costs)
    assert np.all(np.diff(costs) <= 0.0)
    assert costs[0] == res.initial_cost
    assert costs[-1] == res.cost


def test_already_at_minimum():
    res = levenberg_marquardt(lambda x: x - 3.0, np.array([3.0]))
    assert res.converged
    assert res.cost <= 1e-20

"""Test the downstream predictors."""
import numpy as np
import pytest
from scipy.linalg import hadamard
from scipy.optimize import minimize

from histopy.errors import InvalidInput, InvalidTarget, ShapeError
from histopy.models import (Standardizer, LinearModel, train_svc, predict_svc,
                            decision_function_svc, train_svr, predict_svr,
                            train_lasso, predict_lasso, lambda_max,
                            lambda_grid, log_transform_expression,
                            model_to_dict, model_from_dict)

# seeded instances of the randomized checks
N_SVC = 50
N_LASSO = 100


# -----------------------------------------------------------------------------
# standardization


def test_standardizer():
    X = np.array([[1., 5., 2.], [3., 5., 4.], [5., 5., 9.]])
    std = Standardizer().fit(X)
    Z = std.transform(X)
    np.testing.assert_allclose(Z.mean(axis=0), 0., atol=1e-12)
    np.testing.assert_array_equal(std.constant, [False, True, False])
    np.testing.assert_array_equal(Z[:, 1], 0.)
    np.testing.assert_array_equal(std.transform([[0., 100., 0.]])[:, 1], 0.)
    with pytest.raises(ShapeError):
        std.transform(np.zeros((2, 2)))


# -----------------------------------------------------------------------------
# support vector classifier


def test_svc_separable():
    X = np.array([[0., 0.], [0., 1.], [10., 0.], [10., 1.]])
    y = np.array([0, 0, 1, 1])
    model = train_svc(X, y, c_reg=1.)
    np.testing.assert_array_equal(predict_svc(model, X), y)
    np.testing.assert_array_equal(predict_svc(model, [[-5., .5], [15., .5]]),
                                  [0, 1])


def _dual_oracle(Z, y, c_reg):
    """Solve the SVM dual (augmented bias) with a generic QP solver."""
    Xa = np.c_[Z, np.ones((len(y),))]
    Q = (y[:, None] * Xa) @ (y[:, None] * Xa).T

    def _fun(a):
        return .5 * a @ Q @ a - a.sum(), Q @ a - 1.

    res = minimize(_fun, np.zeros((len(y),)), jac=True, method='L-BFGS-B',
                   bounds=[(0., c_reg)] * len(y),
                   options=dict(ftol=1e-15, gtol=1e-12, maxiter=10000))
    return Xa @ ((res.x * y) @ Xa)


@pytest.mark.parametrize('seed', range(N_SVC))
def test_svc_qp_oracle_random(seed):
    """Compare the decision values to a QP solve on small random sets."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 11))
    X = rng.standard_normal((n, int(rng.integers(2, 4))))
    y = rng.permutation(np.r_[[0, 1], rng.integers(0, 2, size=n - 2)])
    c_reg = float(rng.choice([.1, 1., 4.]))
    model = train_svc(X, y, c_reg=c_reg, seed=seed, tol=1e-10,
                      max_passes=100000)
    oracle = _dual_oracle(Standardizer().fit_transform(X),
                          np.where(y == 1, 1., -1.), c_reg)
    np.testing.assert_allclose(decision_function_svc(model, X)[:, 1], oracle,
                               atol=1e-3)


def test_svc_qp_oracle():
    """Compare the decision values to a generic QP solve of the dual."""
    X = np.array([[0., 0.], [1., 2.], [2., .5], [1.5, 1.], [3., 2.5],
                  [.5, 1.5]])
    y = np.array([0, 0, 0, 1, 1, 1])
    model = train_svc(X, y, c_reg=1., tol=1e-10, max_passes=100000)
    Z = Standardizer().fit_transform(X)
    oracle = _dual_oracle(Z, np.where(y == 1, 1., -1.), 1.)
    scores = decision_function_svc(model, X)
    np.testing.assert_allclose(scores[:, 1], oracle, atol=1e-3)
    np.testing.assert_array_equal(predict_svc(model, X),
                                  scores.argmax(axis=1))


def test_svc_degenerate():
    """Test that identical rows give the majority class."""
    X = np.ones((6, 3))
    y = np.array([0, 1, 1, 1, 2, 2])
    model = train_svc(X, y)
    pred = predict_svc(model, np.random.default_rng(0).standard_normal((5, 3)))
    np.testing.assert_array_equal(pred, 1)


def test_svc_absent_class():
    X = np.array([[0., 0.], [0., 1.], [10., 0.], [10., 1.]])
    model = train_svc(X, [0, 0, 2, 2], class_names=['a', 'b', 'c'])
    assert model.models[1] is None
    scores = decision_function_svc(model, X)
    assert np.all(scores[:, 1] == -np.inf)
    np.testing.assert_array_equal(predict_svc(model, X), [0, 0, 2, 2])


def test_svc_determinism_and_errors():
    rng = np.random.default_rng(1)
    X, y = rng.standard_normal((30, 4)), rng.integers(0, 3, size=30)
    m1, m2 = train_svc(X, y, seed=2), train_svc(X, y, seed=2)
    for a, b in zip(m1.models, m2.models):
        np.testing.assert_array_equal(a.weights, b.weights)
    with pytest.raises(InvalidInput):
        train_svc(X, np.zeros((30,)))
    with pytest.raises(ShapeError):
        predict_svc(m1, np.zeros((2, 5)))


# -----------------------------------------------------------------------------
# support vector regression


def test_svr_constant():
    X = np.random.default_rng(0).standard_normal((20, 3))
    model = train_svr(X, np.full((20,), 3.7), n_passes=500)
    assert np.linalg.norm(model.weights) < 1e-3
    np.testing.assert_allclose(predict_svr(model, X * 5.), 3.7, atol=1e-2)


def test_svr_linear():
    """Test the recovery of y = 2x on held-out points."""
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(40, 1))
    model = train_svr(x, 2. * x[:, 0], c_reg=1e4, epsilon=.01)
    x_test = np.linspace(-.9, .9, 11)[:, None]
    np.testing.assert_allclose(predict_svr(model, x_test), 2. * x_test[:, 0],
                               atol=.05)


def test_svr_duplicates():
    """Test that duplicating every row leaves the model unchanged."""
    rng = np.random.default_rng(3)
    X = rng.standard_normal((15, 3))
    y = X @ [1., -2., .5] + .3 * rng.standard_normal(15)
    m1 = train_svr(X, y, n_passes=1000)
    m2 = train_svr(np.r_[X, X], np.r_[y, y], n_passes=1000)
    np.testing.assert_allclose(m1.weights, m2.weights, atol=1e-6)
    np.testing.assert_allclose(m1.bias, m2.bias, atol=1e-6)


# -----------------------------------------------------------------------------
# lasso


def _orthonormal_design():
    """Centered orthogonal columns with unit (population) variance."""
    return hadamard(8)[:, 1:4].astype(float)


def test_lasso_lambda_max():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 5))
    y = X @ [1., 0., -1., 2., 0.] + rng.standard_normal(40)
    Z = Standardizer().fit_transform(X)
    l_max = lambda_max(Z, y)
    for lam in (l_max * (1. + 1e-9), 2. * l_max):
        model = train_lasso(X, y, family='linear', lambdas=[lam])
        np.testing.assert_array_equal(model.weights, 0.)
        assert model.lambda_ == lam
    model = train_lasso(X, y, family='linear', lambdas=[.5 * l_max])
    assert (model.weights != 0).any()
    grid = lambda_grid(Z, y, n_lambda=5, decades=2.)
    np.testing.assert_allclose(grid[[0, -1]], [l_max, l_max / 100.])


def test_lasso_orthonormal():
    """Test the soft-threshold closed form."""
    Z = _orthonormal_design()
    y = Z @ [2., -.5, .1] + np.linspace(-.2, .3, 8)
    beta = Z.T @ (y - y.mean()) / 8.
    lam = .3
    model = train_lasso(Z, y, family='linear', lambdas=[lam])
    expected = np.sign(beta) * np.maximum(np.abs(beta) - lam, 0.)
    np.testing.assert_allclose(model.weights, expected, atol=1e-9)
    np.testing.assert_allclose(model.bias, y.mean(), atol=1e-9)
    # sparsity grows with the penalty
    nnz = [int((train_lasso(Z, y, family='linear', lambdas=[k]).weights != 0
                ).sum()) for k in (0., .3, 1., 10.)]
    assert nnz == sorted(nnz, reverse=True) and nnz[-1] == 0


@pytest.mark.parametrize('seed', range(N_LASSO))
def test_lasso_orthonormal_random(seed):
    """Test the soft-threshold closed form on random orthonormal designs."""
    rng = np.random.default_rng(seed)
    cols = 1 + rng.choice(15, size=int(rng.integers(2, 8)), replace=False)
    Z = hadamard(16)[:, cols].astype(float)
    y = Z @ rng.uniform(-2., 2., size=len(cols)) + \
        .3 * rng.standard_normal(16) + rng.uniform(-5., 5.)
    beta = Z.T @ (y - y.mean()) / 16.
    lam = float(rng.uniform(0., 1.5 * np.abs(beta).max()))
    model = train_lasso(Z, y, family='linear', lambdas=[lam])
    expected = np.sign(beta) * np.maximum(np.abs(beta) - lam, 0.)
    np.testing.assert_allclose(model.weights, expected, atol=1e-6)
    np.testing.assert_allclose(model.bias, y.mean(), atol=1e-6)


@pytest.mark.parametrize('seed', range(N_LASSO))
def test_lasso_least_squares_random(seed):
    """Test that no penalty gives the normal equations solution."""
    rng = np.random.default_rng(1000 + seed)
    n, d = int(rng.integers(20, 60)), int(rng.integers(1, 5))
    X = rng.standard_normal((n, d))
    y = X @ rng.uniform(-2., 2., size=d) + rng.standard_normal(n)
    Xa = np.c_[X, np.ones((n,))]
    coef = np.linalg.solve(Xa.T @ Xa, Xa.T @ y)
    model = train_lasso(X, y, family='linear', lambdas=[0.])
    np.testing.assert_allclose(predict_lasso(model, X), Xa @ coef,
                               atol=1e-6)


def test_lasso_least_squares():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((60, 3))
    y = X @ [1.5, -.7, .2] + 4. + .1 * rng.standard_normal(60)
    model = train_lasso(X, y, family='linear', lambdas=[0.])
    coef = np.linalg.lstsq(np.c_[X, np.ones((60,))], y, rcond=None)[0]
    np.testing.assert_allclose(model.weights / model.standardizer.std,
                               coef[:3], atol=1e-6)
    np.testing.assert_allclose(predict_lasso(model, X),
                               np.c_[X, np.ones((60,))] @ coef, atol=1e-6)


def test_lasso_affine_features():
    """Test that affine feature maps are absorbed by the standardization."""
    rng = np.random.default_rng(4)
    X = rng.standard_normal((30, 3))
    y = X @ [1., 2., 0.] + rng.standard_normal(30)
    a, c = np.array([2., .5, 10.]), np.array([1., -3., 7.])
    m1 = train_lasso(X, y, family='linear', lambdas=[.1])
    m2 = train_lasso(a * X + c, y, family='linear', lambdas=[.1])
    X_test = rng.standard_normal((5, 3))
    np.testing.assert_allclose(predict_lasso(m1, X_test),
                               predict_lasso(m2, a * X_test + c), atol=1e-6)


def test_lasso_logistic():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((80, 4))
    y = (X[:, 0] + .3 * rng.standard_normal(80) > 0).astype(float)
    m1 = train_lasso(X, y, family='logistic', seed=1, n_lambda=10)
    m2 = train_lasso(X, y, family='logistic', seed=1, n_lambda=10)
    np.testing.assert_array_equal(m1.weights, m2.weights)
    assert m1.weights[0] > 0
    p = predict_lasso(m1, X)
    assert (p > 0).all() and (p < 1).all()
    assert np.mean((p > .5) == y) > .8
    with pytest.raises(InvalidTarget):
        train_lasso(X, np.full((80,), 1.), family='logistic')
    with pytest.raises(InvalidTarget):
        train_lasso(X, np.full((80,), 2.), family='logistic')
    with pytest.raises(InvalidInput):
        train_lasso(X, y, family='poisson')


def test_predict_lasso():
    """Test the scores of hand-built models."""
    std = Standardizer().fit(np.array([[0., 0.], [2., 2.]]))
    flat = LinearModel('lasso_logistic', np.zeros((2,)), .7, std)
    np.testing.assert_allclose(predict_lasso(flat, [[5., -1.]]),
                               1. / (1. + np.exp(-.7)))
    half = LinearModel('lasso_logistic', np.array([1., 0.]), 0., std)
    np.testing.assert_allclose(predict_lasso(half, [[1., 3.]]), .5)
    scores = predict_lasso(half, [[0., 0.], [1., 0.], [2., 0.]])
    assert np.all(np.diff(scores) > 0)
    lin = LinearModel('lasso_linear', np.zeros((2,)), 1.5, std)
    np.testing.assert_allclose(predict_lasso(lin, [[9., 9.]]), 1.5)
    with pytest.raises(ShapeError):
        predict_lasso(lin, np.zeros((1, 3)))
    restored = model_from_dict(model_to_dict(half))
    np.testing.assert_array_equal(predict_lasso(restored, [[2., 0.]]),
                                  predict_lasso(half, [[2., 0.]]))


# -----------------------------------------------------------------------------
# expression transform


def test_log_transform_expression():
    np.testing.assert_allclose(log_transform_expression([0., np.e - 1., 99.]),
                               [0., 1., 4.60517], atol=1e-5)
    with pytest.raises(InvalidTarget):
        log_transform_expression([1., -1.])
    with pytest.raises(InvalidTarget):
        log_transform_expression([np.nan])

"""LASSO by cyclic coordinate descent (linear and logistic families).

The objective follows glmnet :

    linear   : (1 / 2N) ||y - b - Xw||^2 + lambda ||w||_1
    logistic : -(1 / N) loglik(y | b + Xw) + lambda ||w||_1

on standardized features with an unpenalized intercept. The logistic family
is solved by iteratively reweighted least squares, each quadratic
approximation being solved by coordinate descent.
"""
import logging

import numpy as np
from scipy.special import expit

from histopy.errors import InvalidInput, InvalidTarget, ShapeError
from histopy.models.linear import LinearModel, Standardizer, _as_matrix
from histopy.stats.folds import make_fold_plan


logger = logging.getLogger('histopy')

FAMILIES = ('linear', 'logistic')
# lower bound of the IRLS weights
MIN_IRLS_WEIGHT = 1e-5


def _soft_threshold(z, lam):
    return np.sign(z) * max(abs(z) - lam, 0.)


def _wls_cd(Z, z, wts, lam, w, b, tol=1e-9, max_passes=10000):
    """Weighted LASSO by cyclic coordinate descent.

    Minimizes (1 / 2N) sum(wts * (z - b - Zw)^2) + lam ||w||_1, starting
    from (w, b).
    """
    n, d = Z.shape
    w = w.copy()
    sw = wts.sum()
    col_sq = (wts[:, np.newaxis] * Z ** 2).sum(axis=0) / n
    r = z - b - Z @ w
    for _ in range(max_passes):
        max_delta = 0.
        # intercept
        db = (wts * r).sum() / sw
        b += db
        r -= db
        max_delta = abs(db)
        for j in range(d):
            if col_sq[j] <= 0.:
                continue
            zj = Z[:, j]
            rho = (wts * zj * r).sum() / n + col_sq[j] * w[j]
            w_new = _soft_threshold(rho, lam) / col_sq[j]
            delta = w_new - w[j]
            if delta != 0.:
                r -= delta * zj
                w[j] = w_new
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            break
    return w, b


def _fit_lambda(Z, y, family, lam, w=None, b=None, max_irls=100):
    """Fit the LASSO at a single penalty (optionally warm-started)."""
    n, d = Z.shape
    w = np.zeros((d,)) if w is None else w
    if family == 'linear':
        b = y.mean() if b is None else b
        return _wls_cd(Z, y, np.ones((n,)), lam, w, b)
    if b is None:
        p_bar = np.clip(y.mean(), 1e-6, 1. - 1e-6)
        b = np.log(p_bar / (1. - p_bar))
    dev_old = np.inf
    for _ in range(max_irls):
        eta = b + Z @ w
        p = expit(eta)
        wts = np.maximum(p * (1. - p), MIN_IRLS_WEIGHT)
        z = eta + (y - p) / wts
        w, b = _wls_cd(Z, z, wts, lam, w, b)
        dev = _deviance(y, expit(b + Z @ w))
        if abs(dev_old - dev) <= 1e-9 * (abs(dev) + 1.):
            break
        dev_old = dev
    return w, b


def _deviance(y, p):
    """Mean binomial deviance."""
    p = np.clip(p, 1e-12, 1. - 1e-12)
    return -2. * np.mean(y * np.log(p) + (1. - y) * np.log(1. - p))


def _check_target(y, family):
    if family not in FAMILIES:
        raise InvalidInput(f"unknown LASSO family {family}")
    if family == 'logistic':
        if not np.all(np.isin(y, (0., 1.))):
            raise InvalidTarget("logistic targets must be 0 or 1")
        if len(np.unique(y)) < 2:
            raise InvalidTarget("logistic target with a single class")


def lambda_max(Z, y):
    """Smallest penalty giving all-zero weights (standardized features)."""
    return float(np.abs(Z.T @ (y - y.mean())).max() / Z.shape[0])


def lambda_grid(Z, y, n_lambda=50, decades=2.):
    """Log-spaced penalties from lambda_max down `decades` decades."""
    l_max = lambda_max(Z, y)
    if l_max <= 0.:
        return np.zeros((1,))
    return np.logspace(np.log10(l_max), np.log10(l_max) - decades, n_lambda)


def lasso_path(Z, y, family, lambdas):
    """Warm-started solutions along decreasing penalties.

    Parameters
    ----------
    Z : array_like
        Standardized features
    y : array_like
        Targets
    family : {'linear', 'logistic'}
        Model family
    lambdas : array_like
        Decreasing penalties

    Returns
    -------
    path : list
        List of (weights, bias) for each penalty
    """
    path, w, b = [], None, None
    for lam in lambdas:
        w, b = _fit_lambda(Z, y, family, lam, w, b)
        path += [(w.copy(), b)]
    return path


def _cv_error(Z, y, family, w, b):
    s = b + Z @ w
    if family == 'logistic':
        return _deviance(y, expit(s))
    return np.mean((y - s) ** 2)


def _select_lambda(Z, y, family, lambdas, inner_folds, seed):
    """Choose the penalty by inner k-fold cross-validation.

    Ties go to the larger penalty.
    """
    n = len(y)
    k = min(inner_folds, n)
    strat = y.astype(int) if family == 'logistic' else None
    plan = make_fold_plan(np.arange(n), strat, k=k, n_repeats=1, seed=seed,
                          warn=False)[0]
    errors, n_valid = np.zeros((len(lambdas),)), 0
    for f in range(k):
        test = np.asarray(plan.folds[f], dtype=int)
        train = np.setdiff1d(np.arange(n), test)
        try:
            _check_target(y[train], family)
        except InvalidTarget:
            continue
        # the training rows of the fold are standardized again
        std = Standardizer().fit(Z[train])
        path = lasso_path(std.transform(Z[train]), y[train], family, lambdas)
        Zt = std.transform(Z[test])
        errors += np.array([_cv_error(Zt, y[test], family, w, b) for (w, b)
                            in path])
        n_valid += 1
    if n_valid == 0:
        logger.warning("    no valid inner fold, largest penalty kept")
        return lambdas[0]
    return lambdas[int(np.argmin(errors))]


def train_lasso(X, y, family='logistic', lambdas=None, seed=0,
                n_lambda=50, decades=2., inner_folds=5, target=None):
    """Train a LASSO model.

    Parameters
    ----------
    X : array_like
        Features of shape (n_samples, n_features)
    y : array_like
        Targets (0 / 1 for the logistic family)
    family : {'logistic', 'linear'}
        Model family
    lambdas : array_like | None
        Candidate penalties. None uses a log-spaced grid from lambda_max
        down `decades` decades. A single penalty is used as is, without
        cross-validation
    seed : int | 0
        Seed of the inner folds
    n_lambda : int | 50
        Number of penalties of the automatic grid
    decades : float | 2.
        Span of the automatic grid
    inner_folds : int | 5
        Number of inner cross-validation folds
    target : str | None
        Name of the target

    Returns
    -------
    model : LinearModel
        Model of kind 'lasso_linear' or 'lasso_logistic' whose `lambda_`
        attribute is the chosen penalty
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] < 2:
        raise InvalidInput("at least two training rows are required")
    if len(y) != X.shape[0]:
        raise ShapeError("one target per row is required")
    _check_target(y, family)
    std = Standardizer().fit(X)
    Z = std.transform(X)
    if lambdas is None:
        lambdas = lambda_grid(Z, y, n_lambda, decades)
    else:
        lambdas = np.sort(np.asarray(lambdas, dtype=float).ravel())[::-1]
        if np.any(lambdas < 0):
            raise InvalidInput("penalties must be >= 0")
    if len(lambdas) == 1:
        lam = float(lambdas[0])
    else:
        lam = float(_select_lambda(Z, y, family, lambdas, inner_folds, seed))
    # final fit along the path down to the chosen penalty
    path = lasso_path(Z, y, family, lambdas[lambdas >= lam])
    w, b = path[-1]
    w[std.constant] = 0.
    logger.debug(f"    lasso ({family}) lambda={lam:.4g}, "
                 f"{int((w != 0).sum())} non-zero weights")
    return LinearModel(f"lasso_{family}", w, b, std, lambda_=lam,
                       target=target)


def predict_lasso(model, X):
    """Scores of each row (probabilities for the logistic family)."""
    X = _as_matrix(X)
    if X.shape[1] != model.dim:
        raise ShapeError(f"expected {model.dim} features, got {X.shape[1]}")
    return model.predict(X)

"""Linear epsilon-insensitive support vector regression."""
import logging

import numpy as np

from histopy.errors import InvalidInput, ShapeError
from histopy.models.linear import LinearModel, Standardizer, _as_matrix


logger = logging.getLogger('histopy')


def train_svr(X, y, c_reg=1., epsilon=0.1, n_passes=5000, target=None):
    """Train a linear SVR.

    Features and targets are standardized on the training rows and the
    objective

        mean(max(0, |y - Xw - b| - epsilon)) + ||w||^2 / (2 * c_reg)

    is minimized by full-batch subgradient descent (step 1 / sqrt(t)). The
    returned model uses the average of the iterates of the second half of
    the passes. The objective is a mean so duplicating every row leaves the
    model unchanged.

    Parameters
    ----------
    X : array_like
        Features of shape (n_samples, n_features)
    y : array_like
        Real targets
    c_reg : float | 1.
        Inverse strength of the L2 penalty
    epsilon : float | 0.1
        Half width of the insensitive tube (standardized target units)
    n_passes : int | 5000
        Number of passes
    target : str | None
        Name of the target

    Returns
    -------
    model : LinearModel
        Model of kind 'svr'
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, d = X.shape
    if n < 2:
        raise InvalidInput("at least two training rows are required")
    if len(y) != n:
        raise ShapeError("one target per row is required")
    if (c_reg <= 0) or (epsilon < 0) or (n_passes < 1):
        raise InvalidInput("invalid SVR hyper-parameters")
    std = Standardizer().fit(X)
    Z = std.transform(X)
    y_offset, y_scale = y.mean(), y.std()
    if y_scale <= 1e-12 * max(abs(y_offset), 1.):
        y_scale = 1.
    t_std = (y - y_offset) / y_scale

    eta0 = 1. / np.sqrt(d + 1.)
    w, b = np.zeros((d,)), 0.
    w_avg, b_avg, n_avg = np.zeros((d,)), 0., 0
    start_avg = n_passes // 2
    for t in range(n_passes):
        r = t_std - Z @ w - b
        s = np.where(np.abs(r) > epsilon, np.sign(r), 0.)
        g_w = -(Z.T @ s) / n + w / c_reg
        g_b = -s.sum() / n
        eta = eta0 / np.sqrt(t + 1.)
        w, b = w - eta * g_w, b - eta * g_b
        if t >= start_avg:
            w_avg += w
            b_avg += b
            n_avg += 1
    w_avg /= n_avg
    b_avg /= n_avg
    w_avg[std.constant] = 0.
    return LinearModel('svr', w_avg, b_avg, std, y_offset=y_offset,
                       y_scale=y_scale, target=target)


def predict_svr(model, X):
    """Predicted (de-standardized) target of each row."""
    X = _as_matrix(X)
    if X.shape[1] != model.dim:
        raise ShapeError(f"expected {model.dim} features, got {X.shape[1]}")
    return model.predict(X)

"""Multiclass linear support vector classifier (one-vs-rest)."""
import logging
from dataclasses import dataclass

import numpy as np

from histopy.errors import InvalidInput, ShapeError
from histopy.models.linear import LinearModel, Standardizer, _as_matrix
from histopy.utils import make_rng


logger = logging.getLogger('histopy')


@dataclass
class MulticlassSvc:
    """One binary LinearModel per class (None for classes absent from the
    training rows)."""

    models: list
    class_names: list

    def __post_init__(self):
        dims = {m.dim for m in self.models if m is not None}
        assert len(dims) <= 1, "all binary models should share the dimension"
        assert len(self.models) == len(self.class_names)

    @property
    def dim(self):
        return next(m.dim for m in self.models if m is not None)


def _dual_cd(Z, y, c_reg, tol, max_passes, rng):
    """L1-loss linear SVM solved by dual coordinate descent.

    The intercept is learned as the weight of an extra constant feature.

    Parameters
    ----------
    Z : array_like
        Standardized features of shape (n_samples, n_features)
    y : array_like
        Labels in {-1, 1}
    c_reg : float
        Penalty of the hinge loss
    tol : float
        Relative duality gap at which to stop
    max_passes : int
        Maximum number of passes over the samples
    rng : numpy.random.Generator
        Generator of the visiting order of each pass

    Returns
    -------
    w : array_like
        Weights of the augmented features (last entry is the intercept)
    """
    n = Z.shape[0]
    Xa = np.c_[Z, np.ones((n,))]
    q_diag = (Xa ** 2).sum(axis=1)
    alpha, w = np.zeros((n,)), np.zeros((Xa.shape[1],))
    gap = np.inf
    for n_pass in range(max_passes):
        for i in rng.permutation(n):
            g = y[i] * (w @ Xa[i]) - 1.
            if alpha[i] <= 0.:
                pg = min(g, 0.)
            elif alpha[i] >= c_reg:
                pg = max(g, 0.)
            else:
                pg = g
            if pg != 0.:
                a_old = alpha[i]
                alpha[i] = min(max(a_old - g / q_diag[i], 0.), c_reg)
                w += (alpha[i] - a_old) * y[i] * Xa[i]
        # duality gap
        ww = w @ w
        primal = .5 * ww + c_reg * np.maximum(0., 1. - y * (Xa @ w)).sum()
        dual = alpha.sum() - .5 * ww
        gap = primal - dual
        if gap <= tol * max(1., abs(primal)):
            break
    logger.debug(f"    svc converged in {n_pass + 1} passes (gap={gap:.2e})")
    return w


def train_svc(X, y, c_reg=1., seed=0, class_names=None, tol=1e-4,
              max_passes=1000):
    """Train a one-vs-rest linear SVC.

    Parameters
    ----------
    X : array_like
        Features of shape (n_samples, n_features)
    y : array_like
        Class index of each sample
    c_reg : float | 1.
        Penalty of the hinge loss
    seed : int | 0
        Seed of the coordinate visiting order
    class_names : list | None
        Names of all the classes. Classes absent from y get no model
    tol : float | 1e-4
        Relative duality gap tolerance
    max_passes : int | 1000
        Maximum number of passes of each binary problem

    Returns
    -------
    model : MulticlassSvc
        The trained classifier
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] < 2:
        raise InvalidInput("at least two training rows are required")
    if len(y) != X.shape[0]:
        raise ShapeError("one label per row is required")
    if c_reg <= 0:
        raise InvalidInput("c_reg must be > 0")
    present = np.unique(y)
    if len(present) < 2:
        raise InvalidInput("at least two classes are required")
    if class_names is None:
        class_names = [str(k) for k in range(present.max() + 1)]
    std = Standardizer().fit(X)
    Z = std.transform(X)
    models = []
    for k in range(len(class_names)):
        if k not in present:
            logger.warning(f"    class {class_names[k]} absent from the "
                           "training rows")
            models += [None]
            continue
        yk = np.where(y == k, 1., -1.)
        w = _dual_cd(Z, yk, c_reg, tol, max_passes, make_rng(seed, k))
        weights = w[:-1]
        weights[std.constant] = 0.
        models += [LinearModel('svc_binary', weights, w[-1], std,
                               target=class_names[k])]
    return MulticlassSvc(models, list(class_names))


def decision_function_svc(model, X):
    """Per-class decision values (-inf for classes without a model)."""
    X = _as_matrix(X)
    if X.shape[1] != model.dim:
        raise ShapeError(f"expected {model.dim} features, got {X.shape[1]}")
    scores = np.full((X.shape[0], len(model.models)), -np.inf)
    for k, m in enumerate(model.models):
        if m is not None:
            scores[:, k] = m.decision_function(X)
    return scores


def predict_svc(model, X):
    """Predicted class index of each row.

    Ties between decision values go to the lowest class index.
    """
    return decision_function_svc(model, X).argmax(axis=1)

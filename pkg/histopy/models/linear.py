"""Standardization and linear models shared by the downstream predictors."""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from histopy.errors import InvalidInput, InvalidTarget, ShapeError


MODEL_KINDS = ('svc_binary', 'svr', 'lasso_linear', 'lasso_logistic')


def _as_matrix(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2D feature matrix, got shape {X.shape}")
    return X


@dataclass
class Standardizer:
    """Per-feature standardization learned on training rows.

    Features without variance on the training rows get a standard deviation
    of 1 and are flagged as constant. Their standardized value is always 0.
    """

    mean: np.ndarray = None
    std: np.ndarray = None
    constant: np.ndarray = None

    def fit(self, X):
        X = _as_matrix(X)
        if X.shape[0] < 1:
            raise InvalidInput("cannot standardize an empty matrix")
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.constant = std <= 1e-12 * np.maximum(np.abs(self.mean), 1.)
        std[self.constant] = 1.
        self.std = std
        return self

    @property
    def dim(self):
        return len(self.mean)

    def transform(self, X):
        X = _as_matrix(X)
        if X.shape[1] != self.dim:
            raise ShapeError(f"expected {self.dim} features, got "
                             f"{X.shape[1]}")
        Z = (X - self.mean) / self.std
        Z[:, self.constant] = 0.
        return Z

    def fit_transform(self, X):
        return self.fit(X).transform(X)

    def to_dict(self):
        return dict(mean=self.mean.tolist(), std=self.std.tolist(),
                    constant=self.constant.tolist())

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d['mean'], dtype=float),
                   np.asarray(d['std'], dtype=float),
                   np.asarray(d['constant'], dtype=bool))


@dataclass
class LinearModel:
    """Linear predictor acting on standardized features.

    Attributes
    ----------
    kind : str
        One of 'svc_binary', 'svr', 'lasso_linear' or 'lasso_logistic'
    weights : array_like
        Weights of the standardized features
    bias : float
        Intercept
    standardizer : Standardizer
        Standardization learned on the training rows
    y_offset, y_scale : float
        Target de-standardization (prediction * y_scale + y_offset)
    lambda_ : float | None
        Penalty selected for LASSO models
    target : str | None
        Name of the predicted target
    """

    kind: str
    weights: np.ndarray
    bias: float
    standardizer: Standardizer
    y_offset: float = 0.
    y_scale: float = 1.
    lambda_: float = None
    target: str = None

    def __post_init__(self):
        assert self.kind in MODEL_KINDS, f"unknown model kind {self.kind}"
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = float(self.bias)
        if len(self.weights) != self.standardizer.dim:
            raise ShapeError("weights and standardizer dimensions differ")
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise InvalidInput("non finite model parameters")

    @property
    def dim(self):
        return len(self.weights)

    def decision_function(self, X):
        """Linear score of each row (in the standardized target space)."""
        return self.standardizer.transform(X) @ self.weights + self.bias

    def predict(self, X):
        """Prediction of each row.

        Regression models return de-standardized values and the logistic
        LASSO returns probabilities.
        """
        s = self.decision_function(X)
        if self.kind == 'lasso_logistic':
            return expit(s)
        return s * self.y_scale + self.y_offset


def log_transform_expression(values):
    """Log-transform expression values as ln(x + 1).

    Parameters
    ----------
    values : array_like
        Non-negative expression values

    Returns
    -------
    transformed : array_like
        ln(values + 1)
    """
    values = np.asarray(values, dtype=np.float64)
    if np.any(values < 0) or np.any(np.isnan(values)):
        raise InvalidTarget("expression values must be non-negative")
    return np.log1p(values)


###############################################################################
###############################################################################
#                                   EXPORT
###############################################################################
###############################################################################


def model_to_dict(model):
    """Serializable description of a LinearModel or MulticlassSvc."""
    if hasattr(model, 'models'):
        return dict(kind='svc_multiclass', class_names=list(model.class_names),
                    models=[None if m is None else model_to_dict(m) for m in
                            model.models])
    return dict(kind=model.kind, target=model.target,
                standardizer=model.standardizer.to_dict(),
                weights=model.weights.tolist(), bias=model.bias,
                y_offset=model.y_offset, y_scale=model.y_scale,
                lambda_=model.lambda_)


def model_from_dict(d):
    """Rebuild a model exported with `model_to_dict`."""
    if d['kind'] == 'svc_multiclass':
        from histopy.models.svc import MulticlassSvc
        return MulticlassSvc([None if m is None else model_from_dict(m) for m
                              in d['models']], list(d['class_names']))
    return LinearModel(d['kind'], d['weights'], d['bias'],
                       Standardizer.from_dict(d['standardizer']),
                       y_offset=d.get('y_offset', 0.),
                       y_scale=d.get('y_scale', 1.),
                       lambda_=d.get('lambda_'), target=d.get('target'))

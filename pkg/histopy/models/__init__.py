"""Downstream predictors."""
from .linear import (Standardizer, LinearModel, log_transform_expression,  # noqa
                     model_to_dict, model_from_dict)
from .svc import (MulticlassSvc, train_svc, predict_svc,  # noqa
                  decision_function_svc)
from .svr import train_svr, predict_svr  # noqa
from .lasso import (train_lasso, predict_lasso, lasso_path,  # noqa
                    lambda_grid, lambda_max)

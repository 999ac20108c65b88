"""sklearn-style wrappers around the two trainers.

Both classifiers follow the estimator protocol: constructor stores
hyperparameters verbatim, fit trains and stores the fitted network on
trailing-underscore attributes, get_params/set_params/clone work the usual
way. Labels must be -1/+1, matching the rest of the package.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import InvalidLabelError
from .network import forward_batch, init_network
from .numerics import make_rng
from .training import (TrainConfig, projected_adversarial_train,
                       sgd_lazy_train)


def _validate(X, y):
    X, y = check_X_y(X, y, dtype=np.float64)
    if not np.all(np.abs(y) == 1.0):
        raise InvalidLabelError("labels must be -1 or +1")
    return X, y


class _DatasetView:
    """Duck-typed stand-in for data.LabeledDataset."""

    def __init__(self, x, y):
        self.x = x
        self.y = y


class LazyNetClassifier(BaseEstimator, ClassifierMixin):
    """Two-layer ReLU network trained by SGD inside the lazy ball.

    Parameters mirror TrainConfig: width is the hidden unit count m, c0
    scales the weight ball radius c0/sqrt(width), lr the SGD rate. After
    fit, network_ holds the NetworkParams and report_ the TrainReport.
    """

    def __init__(self, width=1000, c0=10.0, lr=0.1, batch_size=128,
                 max_epochs=50, patience=5, seed=0):
        self.width = width
        self.c0 = c0
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed

    def fit(self, X, y):
        X, y = _validate(X, y)
        params = init_network(make_rng(self.seed), X.shape[1], self.width,
                              c0=self.c0, seed=self.seed)
        cfg = TrainConfig(lr=self.lr, batch_size=self.batch_size,
                          max_epochs=self.max_epochs, patience=self.patience,
                          seed=self.seed, c0=self.c0)
        self.network_, self.report_ = sgd_lazy_train(params, _DatasetView(X, y), cfg)
        self.classes_ = np.array([-1.0, 1.0])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return forward_batch(self.network_, X)

    def predict(self, X):
        return np.where(self.decision_function(X) > 0.0, 1.0, -1.0)


class AdversarialLazyNetClassifier(BaseEstimator, ClassifierMixin):
    """Projected adversarial training on unit-norm inputs.

    radius is the weight ball V (defaults to c0/sqrt(width) when None),
    pgd_budget the input ball R, pgd_steps/pgd_alpha the inner ascent
    configuration (alpha defaults to 2.5*pgd_budget/100).
    """

    def __init__(self, width=1000, c0=10.0, radius=None, beta=0.01,
                 batch_size=128, max_epochs=50, patience=5, pgd_budget=0.1,
                 pgd_steps=100, pgd_alpha=None, seed=0):
        self.width = width
        self.c0 = c0
        self.radius = radius
        self.beta = beta
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.pgd_budget = pgd_budget
        self.pgd_steps = pgd_steps
        self.pgd_alpha = pgd_alpha
        self.seed = seed

    def fit(self, X, y):
        X, y = _validate(X, y)
        params = init_network(make_rng(self.seed), X.shape[1], self.width,
                              c0=self.c0, seed=self.seed)
        cfg = TrainConfig(beta=self.beta, batch_size=self.batch_size,
                          max_epochs=self.max_epochs, patience=self.patience,
                          seed=self.seed, c0=self.c0, radius=self.radius,
                          pgd_budget=self.pgd_budget, pgd_steps=self.pgd_steps,
                          pgd_alpha=self.pgd_alpha)
        self.network_, self.report_ = projected_adversarial_train(
            params, _DatasetView(X, y), cfg)
        self.classes_ = np.array([-1.0, 1.0])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return forward_batch(self.network_, X)

    def predict(self, X):
        return np.where(self.decision_function(X) > 0.0, 1.0, -1.0)

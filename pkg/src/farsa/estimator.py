"""scikit-learn style wrapper for group-sparse binary logistic regression."""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, check_X_y, validate_data

from .core import CompositeObjective, GroupPartition
from .io import assign_groups, lambda_min, num_groups_for
from .losses import LogisticLoss
from .solver import SolveOptions, solve, solve_baseline_pg


class GroupLassoLogisticRegression(ClassifierMixin, BaseEstimator):
    """Binary logistic regression with a weighted group-l2 penalty.

    Weights are ``lambda_scale * lambda_min * sqrt(|G_i|)`` where ``lambda_min``
    is the smallest scale at which the zero vector is optimal.

    Parameters
    ----------
    groups : list of index lists, optional
        Explicit partition of the features. Overrides ``group_fraction``.
    group_fraction : float
        Contiguous groups, ``floor(group_fraction * n_features)`` of them.
    lambda_scale : float
    solver : {'farsa', 'pg'}
    tol : float
        Relative termination tolerance.
    max_iter : int
    alpha_update : {'adaptive', 'basic'}
    random_state : int
        Seed for the initial PG parameter estimate.
    """

    def __init__(self, groups=None, group_fraction=0.5, lambda_scale=0.1, solver="farsa",
                 tol=1e-6, max_iter=100_000, alpha_update="adaptive", random_state=0):
        self.groups = groups
        self.group_fraction = group_fraction
        self.lambda_scale = lambda_scale
        self.solver = solver
        self.tol = tol
        self.max_iter = max_iter
        self.alpha_update = alpha_update
        self.random_state = random_state

    def _partition(self, n):
        if self.groups is not None:
            return GroupPartition(self.groups, n=n)
        if not 0 < self.group_fraction <= 1:
            raise ValueError("group_fraction must lie in (0, 1]")
        return assign_groups(n, num_groups_for(n, self.group_fraction))

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", dtype=np.float64)
        validate_data(self, X, reset=True, accept_sparse="csr", skip_check_array=True)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"binary targets required, got {self.classes_.size} classes")
        if self.solver not in ("farsa", "pg"):
            raise ValueError("solver must be 'farsa' or 'pg'")
        if not self.lambda_scale > 0:
            raise ValueError("lambda_scale must be positive")
        signs = np.where(y == self.classes_[1], 1.0, -1.0)

        loss = LogisticLoss(X, signs)
        part = self._partition(X.shape[1])
        self.lambda_min_ = lambda_min(loss, part)
        weights = self.lambda_scale * max(self.lambda_min_, np.finfo(float).tiny) * np.sqrt(part.sizes)
        obj = CompositeObjective(loss, part.with_weights(weights))
        opts = SolveOptions(tol_rel=self.tol, max_iter=self.max_iter, alpha_update=self.alpha_update)
        if self.solver == "farsa":
            report = solve(obj, options=opts, seed=self.random_state)
        else:
            report = solve_baseline_pg(obj, tol=self.tol, max_iter=self.max_iter,
                                       seed=self.random_state, options=opts)
        self.coef_ = report.x_final
        self.partition_ = obj.partition
        self.report_ = report
        self.n_iter_ = report.iterations
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False, accept_sparse="csr", dtype=np.float64)
        return np.asarray(X @ self.coef_).ravel()

    def predict(self, X):
        return np.where(self.decision_function(X) > 0, self.classes_[1], self.classes_[0])

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    @property
    def zero_groups_(self):
        check_is_fitted(self)
        return np.flatnonzero(self.partition_.zero_groups(self.coef_))

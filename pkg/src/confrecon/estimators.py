"""scikit-learn compatible wrappers.

Rows of ``X`` are parameter tuples, so the analysis plugs into pipelines,
``GridSearchCV``-style sweeps and ``clone``/``get_params`` tooling.

* :class:`CRAMetrics` transforms ``(p, q, p_s, p_s_e, p_alpha)`` rows into
  metric columns.
* :class:`CRAPolicyOptimizer` predicts the optimal transmission probability
  for ``(p, q, p_s, p_s_e)`` rows.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .metrics import metric_report
from .model import ChannelPair, DomainError, Policy, SourceModel, lambda_set
from .optimizer import DEFAULT_P_MIN, check_interval, optimize
from .stationary import avg_cra_numeric_route

METRIC_COLUMNS = ("cra", "accuracy", "confidentiality", "non_confidential_accuracy", "weighted")


def _rows(X, width, name):
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if X.shape[1] != width:
        raise ValueError(f"{name} expects {width} columns, got {X.shape[1]}")
    return X


class CRAMetrics(TransformerMixin, BaseEstimator):
    """Transform parameter rows into CRA and marginal-baseline metrics.

    Parameters
    ----------
    omega : float
        Weight of the confidentiality marginal in the ``weighted`` column.
    method : {"closed", "numeric"}
        Stationary route used for the ``cra`` column.
    """

    def __init__(self, omega=0.5, method="closed"):
        self.omega = omega
        self.method = method

    def fit(self, X, y=None):
        X = _rows(X, 5, type(self).__name__)
        if not 0.0 <= self.omega <= 1.0:
            raise DomainError("omega must lie in [0, 1]")
        if self.method not in ("closed", "numeric"):
            raise ValueError(f"unknown method {self.method!r}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = _rows(X, 5, type(self).__name__)
        out = np.empty((X.shape[0], len(METRIC_COLUMNS)))
        for k, (p, q, ps, pe, pa) in enumerate(X):
            src, ch, pol = SourceModel(p, q), ChannelPair(ps, pe), Policy(pa)
            rep = metric_report(src, ch, pol, self.omega)
            cra = rep.cra
            if self.method == "numeric":
                cra = avg_cra_numeric_route(src, lambda_set(pol, ch))
            out[k] = (cra, rep.accuracy, rep.confidentiality, rep.non_confidential_accuracy, rep.weighted)
        return out

    def get_feature_names_out(self, input_features=None):
        return np.array(METRIC_COLUMNS, dtype=object)


class CRAPolicyOptimizer(BaseEstimator):
    """Predict the CRA-optimal transmission probability for ``(p, q, p_s, p_s_e)`` rows.

    Fitting validates the feasible interval and records the optimum of the
    training rows in ``p_alpha_star_``, ``value_``, ``branch_`` and ``delta_``.
    """

    def __init__(self, p_min=DEFAULT_P_MIN, p_max=1.0):
        self.p_min = p_min
        self.p_max = p_max

    def _solve(self, X):
        interval = check_interval((self.p_min, self.p_max))
        X = _rows(X, 4, type(self).__name__)
        return [optimize(SourceModel(p, q), ChannelPair(ps, pe), interval) for p, q, ps, pe in X]

    def fit(self, X, y=None):
        results = self._solve(X)
        self.n_features_in_ = 4
        self.p_alpha_star_ = np.array([r.p_alpha_star for r in results])
        self.value_ = np.array([r.value for r in results])
        self.branch_ = np.array([r.branch.value for r in results], dtype=object)
        self.delta_ = np.array([r.delta for r in results])
        return self

    def predict(self, X):
        check_is_fitted(self, "n_features_in_")
        return np.array([r.p_alpha_star for r in self._solve(X)])

    def score(self, X, y=None):
        """Mean optimal average CRA over the rows of ``X``."""
        check_is_fitted(self, "n_features_in_")
        return float(np.mean([r.value for r in self._solve(X)]))

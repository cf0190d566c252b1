"""scikit-learn style wrappers around the empirical smile and term-structure fits."""
from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .empirical import fit_power_law, remove_outliers
from .errors import InsufficientDataError


class SplineSmile(BaseEstimator, RegressorMixin):
    """Cubic spline of implied vol against log-moneyness.

    X is a column of log-moneyness, y the implied vols. After ``fit`` the ATM level,
    skew and curvature are available as ``atm_iv_``, ``skew_`` and ``curvature_``.
    """

    def __init__(self, bc_type="natural", drop_outliers=True):
        self.bc_type = bc_type
        self.drop_outliers = drop_outliers

    def fit(self, X, y):
        k = np.asarray(X, dtype=float).reshape(-1)
        iv = np.asarray(y, dtype=float).reshape(-1)
        order = np.argsort(k, kind="stable")
        k, iv = k[order], iv[order]
        mask = remove_outliers(k, iv) if self.drop_outliers else np.ones(k.size, dtype=bool)
        k, iv = k[mask], iv[mask]
        uk, inv = np.unique(k, return_inverse=True)
        uiv = np.bincount(inv, weights=iv) / np.bincount(inv)
        if uk.size < 4:
            raise InsufficientDataError(f"spline needs at least 4 distinct points, got {uk.size}")
        self.spline_ = CubicSpline(uk, uiv, bc_type=self.bc_type)
        self.n_outliers_ = int((~mask).sum())
        self.atm_iv_ = float(self.spline_(0.0))
        self.skew_ = float(self.spline_(0.0, 1))
        self.curvature_ = float(self.spline_(0.0, 2))
        return self

    def predict(self, X):
        check_is_fitted(self, "spline_")
        return self.spline_(np.asarray(X, dtype=float).reshape(-1))


class PowerLawRegressor(BaseEstimator, RegressorMixin):
    """value ~ sign * amplitude * theta**exponent, fitted by OLS on logs.

    X is a column of maturities, y the skews or curvatures.
    """

    def fit(self, X, y):
        fit = fit_power_law(np.asarray(X, dtype=float).reshape(-1), np.asarray(y, dtype=float).reshape(-1))
        self.fit_ = fit
        self.exponent_ = fit.exponent
        self.amplitude_ = fit.amplitude
        self.sign_ = fit.sign
        self.r_squared_ = fit.r_squared
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return self.fit_.predict(np.asarray(X, dtype=float).reshape(-1))

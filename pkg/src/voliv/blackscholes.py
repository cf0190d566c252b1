"""Black-Scholes pricing on forwards, implied volatility inversion, the normalized
put used by the smile expansions, and exact ATM skew/curvature from a distribution."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BoundsError, BracketError, DomainError, PropagationError
from .numerics import find_root, normal_cdf, normal_pdf

VOL_BRACKET = (1e-6, 5.0)
# prices within this relative distance of an arbitrage bound are rejected
BOUND_TOL = 1e-14


@dataclass(frozen=True)
class ForwardContract:
    forward: float
    rate: float
    maturity: float

    def __post_init__(self):
        if not (self.forward > 0 and math.isfinite(self.forward)):
            raise DomainError(f"forward must be positive, got {self.forward}")
        if not (self.maturity > 0 and math.isfinite(self.maturity)):
            raise DomainError(f"maturity must be positive, got {self.maturity}")
        if not math.isfinite(self.rate):
            raise DomainError("rate must be finite")

    @property
    def discount(self) -> float:
        return math.exp(-self.rate * self.maturity)


@dataclass
class Smile:
    """Implied vols at one maturity, ordered by log-moneyness.

    ``prices`` holds the put prices used for inversion when available; ``dropped``
    records (k, reason) for grid points that could not be inverted.
    """

    maturity: float
    log_moneyness: np.ndarray
    implied_vol: np.ndarray
    prices: np.ndarray | None = None
    dropped: list = field(default_factory=list)

    def __post_init__(self):
        self.log_moneyness = np.asarray(self.log_moneyness, dtype=float)
        self.implied_vol = np.asarray(self.implied_vol, dtype=float)
        if self.log_moneyness.shape != self.implied_vol.shape:
            raise DomainError("log_moneyness and implied_vol must have equal length")
        if np.any(np.diff(self.log_moneyness) <= 0):
            raise DomainError("smile points must be strictly increasing in k")
        if not np.all(np.isfinite(self.implied_vol)) or np.any(self.implied_vol <= 0):
            raise DomainError("implied vols must be positive and finite")

    @property
    def points(self):
        return list(zip(self.log_moneyness.tolist(), self.implied_vol.tolist()))

    def __len__(self):
        return self.log_moneyness.size


def otm_normalized(k, s):
    """Out-of-the-money Black price divided by F*exp(-r*theta).

    ``k`` is log(K/F), ``s`` the total standard deviation vol*sqrt(theta) (> 0).
    Puts for k <= 0, calls for k > 0.
    """
    k = np.asarray(k, dtype=float)
    s = np.asarray(s, dtype=float)
    put = np.exp(k) * normal_cdf(k / s + s / 2) - normal_cdf(k / s - s / 2)
    call = normal_cdf(-k / s + s / 2) - np.exp(k) * normal_cdf(-k / s - s / 2)
    out = np.where(k <= 0, put, call)
    return out[()] if out.ndim == 0 else out


def bs_put(c: ForwardContract, strike: float, vol: float) -> float:
    if vol < 0 or not math.isfinite(vol):
        raise DomainError(f"vol must be non-negative, got {vol}")
    if not strike > 0:
        raise DomainError(f"strike must be positive, got {strike}")
    F, K, D = c.forward, strike, c.discount
    if vol == 0:
        return D * max(K - F, 0.0)
    s = vol * math.sqrt(c.maturity)
    k = math.log(K / F)
    # evaluate the out-of-the-money side and restore the put by parity
    otm = F * float(otm_normalized(k, s))
    return D * (otm + max(K - F, 0.0))


def bs_vega(c: ForwardContract, strike: float, vol: float) -> float:
    """Derivative of bs_put with respect to vol."""
    s = vol * math.sqrt(c.maturity)
    d1 = (math.log(c.forward / strike) + 0.5 * s * s) / s
    return c.discount * c.forward * float(normal_pdf(d1)) * math.sqrt(c.maturity)


def implied_vol(c: ForwardContract, strike: float, put_price: float, tol: float = 1e-12) -> float:
    """Black implied vol of a put.

    The out-of-the-money time value is matched in log space on the bracket
    [1e-6, 5], which keeps relative accuracy for tiny prices.
    """
    if not strike > 0:
        raise DomainError(f"strike must be positive, got {strike}")
    if not math.isfinite(put_price):
        raise BoundsError(f"non-finite price {put_price}", "lower")
    F, K, D = c.forward, strike, c.discount
    lower, upper = D * max(K - F, 0.0), D * K
    if put_price <= lower * (1.0 + BOUND_TOL):
        raise BoundsError(f"price {put_price!r} at or below intrinsic bound {lower!r}", "lower")
    if put_price >= upper * (1.0 - BOUND_TOL):
        raise BoundsError(f"price {put_price!r} at or above upper bound {upper!r}", "upper")
    target = (put_price - lower) / (D * F)
    k = math.log(K / F)
    sq = math.sqrt(c.maturity)
    log_target = math.log(target)

    def g(vol):
        return math.log(max(float(otm_normalized(k, vol * sq)), 1e-300)) - log_target

    lo, hi = VOL_BRACKET
    try:
        return find_root(g, lo, hi, tol)
    except BracketError as exc:
        raise BracketError(f"implied vol outside [{lo}, {hi}] for price {put_price!r}: {exc}") from exc


def normalized_put(z, sigma, theta):
    """Put on strike F*exp(sqrt(theta)*z) divided by F*exp(-r*theta)*sqrt(theta)."""
    if np.any(np.asarray(sigma) < 0) or theta <= 0:
        raise DomainError("need sigma >= 0 and theta > 0")
    z = np.asarray(z, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    sq = math.sqrt(theta)
    k = sq * z
    intrinsic = np.maximum(np.expm1(k), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        # out-of-the-money side plus intrinsic, as in bs_put
        tv = otm_normalized(k + 0.0 * sigma, np.where(sigma > 0, sigma * sq, 1.0))
    out = np.where(sigma == 0, intrinsic, tv + intrinsic) / sq
    return out[()] if out.ndim == 0 else out


def normalized_put_vega(z, sigma, theta):
    return normal_pdf(np.asarray(z) / sigma - sigma * math.sqrt(theta) / 2)


def f1_f2(k: float, theta: float, vol: float) -> tuple[float, float]:
    if vol <= 0 or theta <= 0:
        raise DomainError("need vol > 0 and theta > 0")
    s = math.sqrt(theta) * vol
    return k / s - s / 2, k / s + s / 2


def skew_from_distribution(cdf_at: Callable[[float], float], density_at: Callable[[float], float],
                           sigma0: float, theta: float, smile_vol_at_0: float) -> tuple[float, float]:
    """ATM skew and curvature of the smile from the law of the normalized return X.

    cdf_at(x) = Q(X <= x), density_at(x) = density of X. The curvature uses the
    closed form sigma * f1' * f2' = 1/(theta*sigma) - (theta/4) * skew^2 * sigma at k = 0.
    """
    if sigma0 <= 0 or theta <= 0 or smile_vol_at_0 <= 0:
        raise DomainError("sigma0, theta and the ATM vol must be positive")
    F0, p0 = float(cdf_at(0.0)), float(density_at(0.0))
    if not (math.isfinite(F0) and math.isfinite(p0)):
        raise PropagationError(f"non-finite distribution values: cdf={F0}, density={p0}")
    sq = math.sqrt(theta)
    sig = smile_vol_at_0
    _, f2 = f1_f2(0.0, theta, sig)
    ph = float(normal_pdf(f2))
    skew = (F0 - float(normal_cdf(f2))) / (sq * ph)
    curvature = p0 / (sigma0 * sq * ph) - (1.0 / (theta * sig) - 0.25 * theta * skew * skew * sig)
    return skew, curvature

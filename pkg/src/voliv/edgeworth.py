"""Edgeworth-type density approximator and the price, implied-vol and ATM
expansions built on it.

Every expansion is parameterized by a :class:`CumulantData`. Results come back as
:class:`ExpansionResult` so callers and tests can inspect each group of terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, UnsupportedScalingError
from .numerics import hermite, normal_cdf, normal_pdf

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, kw_only=True)
class CumulantData:
    """Scaled cumulant description of the normalized log return at one maturity.

    sigma0 is the standard deviation of the log return, kappa2 = sigma0 / theta**beta0.
    The third and fourth cumulants of the normalized return are kappa3 * theta**beta1
    and kappa4 * theta**beta2; (m, n) are the Hermite adjustment weights.
    """

    theta: float
    sigma0: float
    kappa2: float
    kappa3: float
    kappa4: float
    beta0: float = 0.5
    beta1: float
    beta2: float
    m: float = 0.0
    n: float = 0.0

    def __post_init__(self):
        vals = [getattr(self, f) for f in ("theta", "sigma0", "kappa2", "kappa3", "kappa4",
                                           "beta0", "beta1", "beta2", "m", "n")]
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("CumulantData fields must be finite")
        if self.theta <= 0 or self.sigma0 <= 0 or self.kappa2 <= 0:
            raise DomainError("theta, sigma0 and kappa2 must be positive")
        if min(self.beta0, self.beta1, self.beta2) <= 0:
            raise DomainError("scaling exponents beta0, beta1, beta2 must be positive")
        expected = self.kappa2 * self.theta ** self.beta0
        if abs(self.sigma0 - expected) > 1e-12 * max(1.0, expected):
            raise DomainError(f"sigma0={self.sigma0} inconsistent with kappa2*theta^beta0={expected}")

    @classmethod
    def from_kappa2(cls, theta: float, kappa2: float, kappa3: float, kappa4: float, *,
                    beta1: float, beta2: float, beta0: float = 0.5, m: float = 0.0, n: float = 0.0):
        return cls(theta=theta, sigma0=kappa2 * theta ** beta0, kappa2=kappa2, kappa3=kappa3,
                   kappa4=kappa4, beta0=beta0, beta1=beta1, beta2=beta2, m=m, n=n)

    def at_theta(self, theta: float) -> "CumulantData":
        """Same scaled coefficients at another maturity."""
        return replace(self, theta=theta, sigma0=self.kappa2 * theta ** self.beta0)

    @property
    def skew_coef(self) -> float:
        """kappa3 * theta**beta1, the third cumulant of the normalized return."""
        return self.kappa3 * self.theta ** self.beta1

    @property
    def kurt_coef(self) -> float:
        return self.kappa4 * self.theta ** self.beta2

    @property
    def beta_bar(self) -> float:
        return min(self.beta2 + self.beta0, 2 * self.beta1, 2 * self.beta2, self.beta1 + self.beta2)


@dataclass
class ExpansionResult:
    value: float
    leading_terms: list = field(default_factory=list)
    order_label: str = ""

    @classmethod
    def from_terms(cls, terms, order_label: str) -> "ExpansionResult":
        total = sum(v for _, v in terms)
        return cls(value=total, leading_terms=list(terms), order_label=order_label)

    def term(self, label: str):
        for lab, v in self.leading_terms:
            if lab == label:
                return v
        raise KeyError(label)


def _order(expo: float) -> str:
    return f"o(theta^{expo:.6g})"


def q_density(x, c: CumulantData):
    """Signed Edgeworth approximator of the density of the normalized return."""
    x = np.asarray(x, dtype=float)
    s0 = c.sigma0
    y = x + s0 / 2
    a3, a4 = c.skew_coef, c.kurt_coef
    py = normal_pdf(y)
    out = (py * (1.0 + a3 * (hermite(3, y) - c.m * s0 * hermite(2, y)))
           + py * a4 * (hermite(4, y) - c.n * s0 * hermite(3, y))
           + normal_pdf(x) * 0.5 * a3 * a3 * hermite(6, x))
    return out[()] if out.ndim == 0 else out


def phi_mn(u, c: CumulantData):
    """Characteristic function of the approximator, exp(i u x) convention."""
    u = np.asarray(u, dtype=complex)
    s0 = c.sigma0
    a3, a4 = c.skew_coef, c.kurt_coef
    base = np.exp(-0.5j * u * s0 - 0.5 * u * u)
    u2, u3 = u * u, u * u * u
    corr = (1.0 - a3 * (1j * u3 - c.m * u2 * s0) - 0.5 * a3 * a3 * u3 * u3
            + a4 * (u2 * u2 + 1j * u3 * c.n * s0))
    out = base * corr
    return out[()] if out.ndim == 0 else out


def exp_moment(c: CumulantData) -> float:
    """Closed form of the integral of exp(sigma0 x) q(x) dx."""
    s0 = c.sigma0
    a3, a4 = c.skew_coef, c.kurt_coef
    return (1.0 + (1.0 - c.m) * a3 * s0 ** 3 + (1.0 - c.n) * a4 * s0 ** 4
            + 0.5 * a3 * a3 * s0 ** 6 * math.exp(0.5 * s0 * s0))


def put_expansion(z, c: CumulantData) -> ExpansionResult:
    """Put price on strike F*exp(sigma0*z), divided by F*exp(-r*theta)*sigma0,
    from the approximator (remainder not included)."""
    z = np.asarray(z, dtype=float)
    s0 = c.sigma0
    a3, a4 = c.skew_coef, c.kurt_coef
    y = z + s0 / 2
    ez = np.exp(s0 * z)
    py = normal_pdf(y)
    bs = (normal_cdf(y) * ez - (1.0 + c.m * c.kappa3 * s0 ** 3 * c.theta ** c.beta1) * normal_cdf(z - s0 / 2)) / s0
    skew = a3 * py * (hermite(1, y) + (1.0 - c.m) * s0) * ez
    kurt = py * a4 * (hermite(2, y) + (1.0 - c.n) * s0 * hermite(1, y)) * ez
    sq = normal_pdf(z) * 0.5 * a3 * a3 * hermite(4, z)
    terms = [("black-scholes", bs), ("skewness", skew), ("kurtosis", kurt), ("skewness-squared", sq)]
    terms = [(lab, v[()] if np.ndim(v) == 0 else v) for lab, v in terms]
    return ExpansionResult.from_terms(terms, _order(c.beta_bar))


def iv_expansion(z, c: CumulantData) -> ExpansionResult:
    """Implied vol at log-moneyness sqrt(theta)*z. Needs the sqrt(theta) scaling."""
    if abs(c.beta0 - 0.5) > 1e-12:
        raise UnsupportedScalingError("iv_expansion requires beta0 = 1/2; use atm_asymptotics")
    z = np.asarray(z, dtype=float)
    k2, th = c.kappa2, c.theta
    sq = math.sqrt(th)
    t1, t2 = th ** c.beta1, th ** c.beta2
    d = z / k2 - k2 * sq / 2
    mills = normal_cdf(d) / normal_pdf(d)
    skew = k2 * c.kappa3 * (z / k2 + (1.5 - c.m) * k2 * sq - c.m * mills * k2 * k2 * th) * t1
    sq_term = k2 * (1.5 * c.kappa3 ** 2 - 3.0 * c.kappa3 ** 2 * z * z / (k2 * k2)) * t1 * t1
    kurt = k2 * c.kappa4 * (-1.0 + z * z / (k2 * k2) + (2.0 - c.n) * z * sq) * t2
    terms = [("level", k2 + 0.0 * z), ("skewness", skew), ("skewness-squared", sq_term), ("kurtosis", kurt)]
    terms = [(lab, v[()] if np.ndim(v) == 0 else v) for lab, v in terms]
    return ExpansionResult.from_terms(terms, _order(c.beta_bar))


CURVATURE_FORMS = ("proof", "statement")


def atm_asymptotics(c: CumulantData, curvature_form: str = "proof") -> tuple[ExpansionResult, ExpansionResult]:
    """Leading ATM skew and curvature in log-moneyness.

    ``curvature_form`` picks the exponent on the kappa3 curvature group:
    "proof" uses theta**(beta1 - beta0), "statement" uses theta**(beta1 + beta0).
    """
    if curvature_form not in CURVATURE_FORMS:
        raise DomainError(f"curvature_form must be one of {CURVATURE_FORMS}")
    th, b0, b1, b2 = c.theta, c.beta0, c.beta1, c.beta2
    k2, k3, k4 = c.kappa2, c.kappa3, c.kappa4
    skew_terms = [("skewness", k3 * th ** (b1 - b0)),
                  ("kurtosis", (2.0 - c.n) * k2 * k4 * th ** b2)]
    beta_star = min(b1 + b0, c.beta_bar - b0)
    skew = ExpansionResult.from_terms(skew_terms, _order(beta_star))

    expo = b1 - b0 if curvature_form == "proof" else b1 + b0
    curv_terms = [("kurtosis", 2.0 * k4 / k2 * th ** (b2 - 2 * b0)),
                  ("skewness-squared", -6.0 * k3 * k3 / k2 * th ** (2 * b1 - 2 * b0)),
                  ("skewness", ((1.0 - 2.0 * c.m) / 8.0 * k2 * k2 * k3
                                - SQRT_2PI * c.m / 2.0 * k2 * k3 * th ** b0) * th ** expo)]
    curv = ExpansionResult.from_terms(curv_terms, _order(c.beta_bar - 2 * b0))
    return skew, curv


def q_tilde_density(x, c: CumulantData, sigma_tilde: float | None = None):
    """Alternative approximator with beta1 = H, beta2 = 2H.

    The Gaussian is centred with ``sigma_tilde`` (defaults to c.sigma0); the
    kurtosis and squared-skewness corrections sit on the unshifted Gaussian.
    """
    x = np.asarray(x, dtype=float)
    H = c.beta1
    if abs(c.beta2 - 2 * H) > 1e-12:
        raise DomainError("q_tilde_density needs beta2 = 2 * beta1")
    st = c.sigma0 if sigma_tilde is None else float(sigma_tilde)
    y = x + st / 2
    tH = c.theta ** H
    out = (normal_pdf(y) * (1.0 + c.kappa3 * (hermite(3, y) - c.sigma0 * hermite(2, y)) * tH)
           + normal_pdf(x) * (c.kappa4 * hermite(4, x) + 0.5 * c.kappa3 ** 2 * hermite(6, x)) * tH * tH)
    return out[()] if out.ndim == 0 else out

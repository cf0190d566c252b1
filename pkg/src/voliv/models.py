"""Model catalog: scaled cumulants and characteristic functions of the normalized
log return X = Z / sigma0 for the supported models.

Distribution-based models (Gamma return, CGMY return) have closed-form CFs.
Stochastic-volatility models expose their leading coefficients; the Heston model
with constant leverage also has a CF, used as an exact reference.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields
from typing import Callable, Union

import numpy as np
from scipy import special as _sps

from .edgeworth import CumulantData
from .errors import DomainError, StripError
from .numerics import DEFAULT_QUAD, QuadratureSpec, gamma_fn, integrate

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib


def _check_theta(theta: float):
    if not (0 < theta <= 1):
        raise DomainError(f"theta must lie in (0, 1], got {theta}")


# --------------------------------------------------------------------------- Gamma return

@dataclass(frozen=True)
class GammaReturnParams:
    """Difference of two gamma variables with shapes k and k + kbar and scale gamma.

    k = c_k * theta**alpha, kbar = c_kbar * theta**alpha_bar,
    gamma = c_gamma * theta**((1 - alpha) / 2).
    """

    c_k: float = 3.0
    c_kbar: float = 0.5
    c_gamma: float = 0.1
    alpha: float = -0.2
    alpha_bar: float = 0.4

    kind = "gamma"

    def __post_init__(self):
        if not (-1 < self.alpha < 0):
            raise DomainError(f"alpha must lie in (-1, 0), got {self.alpha}")
        if not self.alpha_bar > self.alpha:
            raise DomainError("alpha_bar must exceed alpha")
        if self.c_k <= 0 or self.c_gamma <= 0 or self.c_kbar < 0:
            raise DomainError("scale constants must be positive")

    @property
    def beta(self) -> float:
        return 0.5 * (1.0 - self.alpha)

    def shapes(self, theta: float):
        return (self.c_k * theta ** self.alpha, self.c_kbar * theta ** self.alpha_bar,
                self.c_gamma * theta ** self.beta)


def gamma_standardized(p: GammaReturnParams, theta: float):
    """(sigma0, skewness, excess kurtosis) of the log return."""
    k, kb, g = p.shapes(theta)
    tot = 2 * k + kb
    return math.sqrt(tot) * g, -2.0 * kb / tot ** 1.5, 6.0 / tot


def gamma_cumulants(p: GammaReturnParams, theta: float) -> CumulantData:
    _check_theta(theta)
    s0, sk, ku = gamma_standardized(p, theta)
    a, ab = p.alpha, p.alpha_bar
    return CumulantData(theta=theta, sigma0=s0, kappa2=s0 / math.sqrt(theta),
                        kappa3=sk / 6.0 * theta ** (1.5 * a - ab), kappa4=ku / 24.0 * theta ** a,
                        beta0=0.5, beta1=ab - 1.5 * a, beta2=-a, m=0.0, n=0.0)


def gamma_strip(p: GammaReturnParams, theta: float):
    """Open interval of Im(u) on which the CF is analytic."""
    _, _, g = p.shapes(theta)
    s0 = gamma_standardized(p, theta)[0]
    return (-s0 / g, s0 / g)


def gamma_log_cf(u, p: GammaReturnParams, theta: float):
    """Principal log of the CF of X, evaluated without exponentiating."""
    k, kb, g = p.shapes(theta)
    if g >= 1:
        raise DomainError(f"gamma scale {g} >= 1 leaves the martingale shift undefined")
    s0 = gamma_standardized(p, theta)[0]
    u = np.asarray(u, dtype=complex)
    lo, hi = -s0 / g, s0 / g
    if np.any(u.imag <= lo) or np.any(u.imag >= hi):
        raise StripError(f"Im(u) outside the analyticity strip ({lo:.4g}, {hi:.4g})")
    w = k * math.log1p(-g) + (k + kb) * math.log1p(g)
    x = g * u / s0
    # (1 + x^2)^-k split into conjugate factors keeps the principal branch continuous
    return 1j * u * w / s0 - (k + kb) * _log1p(1j * x) - k * _log1p(-1j * x)


def gamma_cf(u, p: GammaReturnParams, theta: float):
    return np.exp(gamma_log_cf(u, p, theta))


# --------------------------------------------------------------------------- CGMY return

@dataclass(frozen=True)
class CgmyReturnParams:
    """Tempered-stable return. M = c_M theta**alpha_M, G = M + c_G theta**alpha_G,
    C = c_C theta**(1 - (Y - 2) alpha_M)."""

    c_C: float = 0.1
    c_G: float = 0.5
    c_M: float = 5.0
    alpha_M: float = -0.6
    alpha_G: float = 0.0
    Y: float = 1.5

    kind = "cgmy"

    def __post_init__(self):
        if not (-1 < self.alpha_M < -0.5):
            raise DomainError(f"alpha_M must lie in (-1, -0.5), got {self.alpha_M}")
        if not self.alpha_G > self.alpha_M:
            raise DomainError("alpha_G must exceed alpha_M")
        if not (0 < self.Y < 2) or self.Y == 1:
            raise DomainError("Y must lie in (0, 2) and differ from 1")
        if min(self.c_C, self.c_M) <= 0 or self.c_G < 0:
            raise DomainError("scale constants must be positive")

    @property
    def beta(self) -> float:
        return 1.0 - (self.Y - 2.0) * self.alpha_M

    def levels(self, theta: float):
        M = self.c_M * theta ** self.alpha_M
        return self.c_C * theta ** self.beta, M + self.c_G * theta ** self.alpha_G, M


def cgmy_cumulant(p: CgmyReturnParams, theta: float, order: int) -> float:
    """order-th cumulant of the log return: C Gamma(n - Y) (M^(Y-n) + (-1)^n G^(Y-n))."""
    C, G, M = p.levels(theta)
    Y = p.Y
    return C * gamma_fn(order - Y) * (M ** (Y - order) + (-1) ** order * G ** (Y - order))


def cgmy_standardized(p: CgmyReturnParams, theta: float):
    var = cgmy_cumulant(p, theta, 2)
    s0 = math.sqrt(var)
    return s0, cgmy_cumulant(p, theta, 3) / s0 ** 3, cgmy_cumulant(p, theta, 4) / var ** 2


def cgmy_cumulants(p: CgmyReturnParams, theta: float) -> CumulantData:
    _check_theta(theta)
    s0, sk, ku = cgmy_standardized(p, theta)
    aM, aG = p.alpha_M, p.alpha_G
    return CumulantData(theta=theta, sigma0=s0, kappa2=s0 / math.sqrt(theta),
                        kappa3=sk / 6.0 * theta ** (2 * aM - aG + 0.5),
                        kappa4=ku / 24.0 * theta ** (2 * aM + 1),
                        beta0=0.5, beta1=aG - 2 * aM - 0.5, beta2=-2 * aM - 1, m=0.0, n=0.0)


def cgmy_strip(p: CgmyReturnParams, theta: float):
    C, G, M = p.levels(theta)
    s0 = cgmy_standardized(p, theta)[0]
    return (-M * s0, G * s0)


def cgmy_log_cf(u, p: CgmyReturnParams, theta: float):
    C, G, M = p.levels(theta)
    if M <= 1:
        raise DomainError(f"M = {M} <= 1: exponential moment needed for the drift is infinite")
    Y = p.Y
    s0 = cgmy_standardized(p, theta)[0]
    u = np.asarray(u, dtype=complex)
    lo, hi = -M * s0, G * s0
    if np.any(u.imag <= lo) or np.any(u.imag >= hi):
        raise StripError(f"Im(u) outside the analyticity strip ({lo:.4g}, {hi:.4g})")
    cg = C * gamma_fn(-Y)
    w = -cg * ((M - 1) ** Y - M ** Y + (G + 1) ** Y - G ** Y)
    v = u / s0
    # M^Y ((1 - iv/M)^Y - 1) via expm1/log1p keeps small-|u| values accurate
    expo = cg * (M ** Y * _powm1(-1j * v / M, Y) + G ** Y * _powm1(1j * v / G, Y))
    return 1j * v * w + expo


def _log1p(z):
    """Principal log(1 + z), accurate for small complex z (numpy's complex log1p is not)."""
    z = np.asarray(z, dtype=complex)
    a, b = z.real, z.imag
    return 0.5 * np.log1p(a * (2 + a) + b * b) + 1j * np.arctan2(b, 1 + a)


def _powm1(x, y):
    """(1 + x)^y - 1 on the principal branch."""
    return np.expm1(y * _log1p(x))


def cgmy_cf(u, p: CgmyReturnParams, theta: float):
    return np.exp(cgmy_log_cf(u, p, theta))


# --------------------------------------------------------------------------- stochastic volatility

@dataclass(frozen=True)
class HestonDLParams:
    """Heston variance with leverage rho_t = rho * t**alpha_rho."""

    kappa: float = 1.0
    vbar: float = 0.06
    eta: float = 0.5
    rho: float = -0.7
    v0: float = 0.04
    alpha_rho: float = 0.0

    kind = "heston"

    def __post_init__(self):
        if self.kappa <= 0 or self.vbar <= 0 or self.v0 <= 0 or self.eta < 0:
            raise DomainError("kappa, vbar, v0 must be positive and eta non-negative")
        if not (-1 <= self.rho <= 1):
            raise DomainError("rho must lie in [-1, 1]")
        if self.alpha_rho < 0:
            raise DomainError("alpha_rho must be non-negative")

    @property
    def feller_ratio(self) -> float:
        return 2 * self.kappa * self.vbar / self.eta ** 2 if self.eta > 0 else math.inf


@dataclass(frozen=True)
class ThreeHalvesParams:
    kappa: float = 2.0
    vbar: float = 0.04
    eps: float = 8.0
    rho: float = -0.7
    v0: float = 0.04
    alpha_rho: float = 0.0

    kind = "three-halves"

    def __post_init__(self):
        if self.v0 <= 0 or self.eps <= 0:
            raise DomainError("v0 and eps must be positive")
        if not (-1 <= self.rho <= 1):
            raise DomainError("rho must lie in [-1, 1]")


@dataclass(frozen=True)
class RoughBergomiAsymParams:
    """Rough Bergomi leading coefficients. ``v0_curve`` is the forward variance curve;
    a flat curve at ``v0`` is used when it is None."""

    hurst: float = 0.1
    eta: float = 1.9
    rho: float = -0.9
    v0: float = 0.04
    v0_curve: Callable[[float], float] | None = None

    kind = "rough-bergomi"

    def __post_init__(self):
        if not (0 < self.hurst <= 0.5):
            raise DomainError("hurst must lie in (0, 0.5]")
        if self.eta <= 0 or self.v0 <= 0:
            raise DomainError("eta and v0 must be positive")
        if not (-1 <= self.rho <= 1):
            raise DomainError("rho must lie in [-1, 1]")

    def forward_variance(self, t: float) -> float:
        return self.v0 if self.v0_curve is None else float(self.v0_curve(t))


ModelSpec = Union[GammaReturnParams, CgmyReturnParams, HestonDLParams, ThreeHalvesParams,
                  RoughBergomiAsymParams]


def svm_coeffs(f0: float, g0: float, gprime_c0: float, rho: float, alpha_rho: float,
               theta: float, kappa2: float) -> CumulantData:
    """Coefficients for v = f(X)^2 with dX = b dt + c dW and g = f' c, all at X_0.

    gprime_c0 is g'(X_0) * c(X_0).
    """
    if f0 <= 0:
        raise DomainError(f"f(X0) must be positive, got {f0}")
    rt = rho * theta ** alpha_rho
    k3 = rho * g0 / (2.0 * f0)
    k4 = rt * rt / 6.0 * gprime_c0 / f0 + (1.0 + 2.0 * rt * rt) / 6.0 * (g0 / f0) ** 2
    return CumulantData.from_kappa2(theta, kappa2, k3, k4, beta1=0.5 + alpha_rho, beta2=1.0,
                                    beta0=0.5, m=1.0, n=2.0)


def heston_mean_variance(p: HestonDLParams, theta: float) -> float:
    """(1/theta) * integral of E[v_t] over [0, theta]."""
    x = p.kappa * theta
    frac = -math.expm1(-x) / x if x > 0 else 1.0
    return p.vbar + (p.v0 - p.vbar) * frac


def heston_coeffs(p: HestonDLParams, theta: float) -> CumulantData:
    # v(x) = x, c(x) = eta sqrt(x): f = sqrt(v), g = eta / 2, g' c = 0
    k2 = math.sqrt(heston_mean_variance(p, theta))
    return svm_coeffs(math.sqrt(p.v0), p.eta / 2.0, 0.0, p.rho, p.alpha_rho, theta, k2)


def three_halves_coeffs(p: ThreeHalvesParams, theta: float) -> CumulantData:
    """Catalogued 3/2-model coefficients.

    The catalogued kurtosis coefficient (1 + 3 rho^2) eps^2 v0^2 / 6 is used as
    printed. It differs from svm_coeffs with c = eps v^(3/2), which gives
    (1 + 4 rho^2) eps^2 v0 / 24; a warning reports both.
    """
    v = p.v0
    k3 = p.rho * p.eps * math.sqrt(v) / 4.0
    k4 = (1.0 + 3.0 * p.rho ** 2) * p.eps ** 2 * v ** 2 / 6.0
    general = svm_coeffs(math.sqrt(v), p.eps * v / 2.0, p.eps ** 2 * v ** 1.5 / 2.0, p.rho, 0.0,
                         theta, math.sqrt(v))
    warnings.warn(f"3/2 model: catalogued kappa4={k4:.6g} differs from the general "
                  f"stochastic-volatility formula kappa4={general.kappa4:.6g}", stacklevel=2)
    return CumulantData.from_kappa2(theta, math.sqrt(v), k3, k4, beta1=0.5 + p.alpha_rho, beta2=1.0,
                                    m=1.0, n=2.0)


def rough_bergomi_inner(p: RoughBergomiAsymParams, t: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """integral over [0, t] of (t - s)^(H - 1/2) sqrt(v0(s)) ds.

    Substituting r = (t - s)^(H + 1/2) / (H + 1/2) removes the endpoint singularity.
    """
    if t <= 0:
        return 0.0
    a = p.hurst + 0.5
    R = t ** a / a

    def f(r):
        s = t - (a * r) ** (1.0 / a)
        return math.sqrt(p.forward_variance(max(s, 0.0)))

    return integrate(f, 0.0, R, quad).value


def rough_bergomi_I(p: RoughBergomiAsymParams, theta: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    return integrate(lambda t: rough_bergomi_inner(p, t, quad) * p.forward_variance(t), 0.0, theta, quad).value


def rough_bergomi_J(p: RoughBergomiAsymParams) -> float:
    H, eta, rho = p.hurst, p.eta, p.rho
    num = (1 + 2 * rho ** 2) * eta ** 2 * H + 4 * rho ** 2 * eta ** 2 * H * (H + 1) * _sps.beta(H + 1.5, H + 1.5)
    return float(num / (8 * (H + 0.5) ** 2 * (H + 1)))


def rough_bergomi_coeffs(p: RoughBergomiAsymParams, theta: float,
                         quad: QuadratureSpec = DEFAULT_QUAD) -> CumulantData:
    """Catalogued rough Bergomi coefficients; the v0(theta)^3 normalization is used as printed."""
    H = p.hurst
    I = rough_bergomi_I(p, theta, quad)
    vth = p.forward_variance(theta)
    k3 = p.rho * p.eta * math.sqrt(H / 2) * I / (theta ** (H + 1.5) * vth ** 3)
    mean_var = integrate(p.forward_variance, 0.0, theta, quad).value / theta
    return CumulantData.from_kappa2(theta, math.sqrt(mean_var), k3, rough_bergomi_J(p),
                                    beta1=H, beta2=2 * H, m=1.0, n=2.0)


def heston_cf(u, p: HestonDLParams, theta: float, sigma0: float | None = None):
    """CF of Z / sigma0 for the constant-leverage Heston model (alpha_rho = 0).

    sigma0 defaults to sqrt(theta * mean variance), matching heston_coeffs.
    """
    if p.alpha_rho != 0:
        raise DomainError("closed-form Heston CF only exists for alpha_rho = 0")
    if sigma0 is None:
        sigma0 = math.sqrt(theta * heston_mean_variance(p, theta))
    w = np.asarray(u, dtype=complex) / sigma0
    kap, eta, rho = p.kappa, p.eta, p.rho
    b = kap - rho * eta * 1j * w
    d = np.sqrt(b * b + eta ** 2 * (1j * w + w * w))
    g = (b - d) / (b + d)
    e = np.exp(-d * theta)
    C = kap * p.vbar / eta ** 2 * ((b - d) * theta - 2.0 * np.log((1 - g * e) / (1 - g)))
    D = (b - d) / eta ** 2 * (1 - e) / (1 - g * e)
    return np.exp(C + D * p.v0)


# --------------------------------------------------------------------------- dispatch

MODEL_KINDS = {c.kind: c for c in (GammaReturnParams, CgmyReturnParams, HestonDLParams,
                                    ThreeHalvesParams, RoughBergomiAsymParams)}


def cumulants(model: ModelSpec, theta: float) -> CumulantData:
    if isinstance(model, GammaReturnParams):
        return gamma_cumulants(model, theta)
    if isinstance(model, CgmyReturnParams):
        return cgmy_cumulants(model, theta)
    if isinstance(model, HestonDLParams):
        return heston_coeffs(model, theta)
    if isinstance(model, ThreeHalvesParams):
        return three_halves_coeffs(model, theta)
    if isinstance(model, RoughBergomiAsymParams):
        return rough_bergomi_coeffs(model, theta)
    raise DomainError(f"unknown model {model!r}")


def characteristic_function(model: ModelSpec, theta: float):
    """(cf, sigma0) for models with a closed-form CF of X, else None."""
    if isinstance(model, GammaReturnParams):
        return (lambda u: gamma_cf(u, model, theta)), gamma_standardized(model, theta)[0]
    if isinstance(model, CgmyReturnParams):
        return (lambda u: cgmy_cf(u, model, theta)), cgmy_standardized(model, theta)[0]
    if isinstance(model, HestonDLParams) and model.alpha_rho == 0:
        s0 = math.sqrt(theta * heston_mean_variance(model, theta))
        return (lambda u: heston_cf(u, model, theta, s0)), s0
    return None


def model_to_dict(model: ModelSpec) -> dict:
    d = {"model": model.kind}
    for f in fields(model):
        v = getattr(model, f.name)
        if callable(v) or v is None:
            continue
        d[f.name] = v
    return d


def model_from_dict(d: dict) -> ModelSpec:
    d = dict(d)
    kind = d.pop("model", None)
    if kind not in MODEL_KINDS:
        raise DomainError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    cls = MODEL_KINDS[kind]
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise DomainError(f"unknown keys for model {kind!r}: {sorted(unknown)}")
    return cls(**{k: float(v) for k, v in d.items()})


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v) if isinstance(v, int) or math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__} to TOML")


def dumps_toml(d: dict) -> str:
    """Flat key = value TOML; nested tables one level deep."""
    flat = [f"{k} = {_toml_value(v)}" for k, v in d.items() if not isinstance(v, dict)]
    out = "\n".join(flat) + ("\n" if flat else "")
    for k, v in d.items():
        if isinstance(v, dict):
            out += f"\n[{k}]\n" + "".join(f"{kk} = {_toml_value(vv)}\n" for kk, vv in v.items())
    return out


def save_model(model: ModelSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_toml(model_to_dict(model)))


def load_model(path) -> ModelSpec:
    return model_from_dict(load_toml(path))

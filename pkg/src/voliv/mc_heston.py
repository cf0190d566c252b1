"""Monte Carlo for Heston with time-decaying leverage rho_t = rho * t**alpha_rho.

Full-truncation Euler on (log price, variance). Paths are simulated in fixed-size
blocks; block b draws from its own Philox stream keyed by (seed, b), and the
second half of each block is the antithetic mirror of the first. Output is
therefore identical for any number of worker threads.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .blackscholes import ForwardContract, Smile, bs_vega, implied_vol
from .errors import BoundsError, BracketError, DomainError
from .models import HestonDLParams, heston_mean_variance
from .numerics import STENCIL_OFFSETS, richardson_weights
from .parallel import ordered_map


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 2_000_000
    n_steps_per_year: int = 2000
    seed: int = 20240607
    antithetic: bool = True
    scheme: str = "full-truncation-euler"
    # floor on steps per path; short maturities need it to keep the Euler skew bias small
    min_steps: int = 200
    block_size: int = 1 << 16
    threads: int | None = None

    def __post_init__(self):
        if self.n_paths < 10_000:
            raise DomainError("n_paths must be at least 1e4")
        if self.n_steps_per_year < 250:
            raise DomainError("n_steps_per_year must be at least 250")
        if self.antithetic and (self.n_paths % 2 or self.block_size % 2):
            raise DomainError("n_paths and block_size must be even with antithetic sampling")
        if self.scheme != "full-truncation-euler":
            raise DomainError(f"unsupported scheme {self.scheme!r}")
        if not (0 <= self.seed < 2 ** 64):
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.min_steps < 1 or self.block_size < 2:
            raise DomainError("min_steps and block_size must be positive")

    def n_steps(self, theta: float) -> int:
        return max(math.ceil(theta * self.n_steps_per_year - 1e-9), self.min_steps)


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_effective: int


def _blocks(cfg: McConfig):
    starts = range(0, cfg.n_paths, cfg.block_size)
    return [(b, s, min(s + cfg.block_size, cfg.n_paths)) for b, s in enumerate(starts)]


def _simulate_block(p: HestonDLParams, theta: float, cfg: McConfig, block: int, size: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(block,))))
    n = cfg.n_steps(theta)
    dt = theta / n
    sq_dt = math.sqrt(dt)
    draw = size // 2 if cfg.antithetic else size
    z = np.zeros(size)
    v = np.full(size, p.v0)
    for i in range(n):
        t = i * dt
        rho_t = p.rho * t ** p.alpha_rho if p.alpha_rho > 0 else p.rho
        rho_c = math.sqrt(max(1.0 - rho_t * rho_t, 0.0))
        g1 = rng.standard_normal(draw)
        g2 = rng.standard_normal(draw)
        if cfg.antithetic:
            g1 = np.concatenate((g1, -g1))
            g2 = np.concatenate((g2, -g2))
        vp = np.maximum(v, 0.0)
        sv = np.sqrt(vp) * sq_dt
        z += -0.5 * vp * dt + sv * (rho_t * g1 + rho_c * g2)
        v += p.kappa * (p.vbar - vp) * dt + p.eta * sv * g1
    return z


def simulate_terminal(p: HestonDLParams, theta: float, cfg: McConfig = McConfig()) -> np.ndarray:
    """Terminal log returns log(S_theta / F) for cfg.n_paths paths.

    With antithetic sampling, path j + size/2 mirrors path j inside every block.
    """
    if theta <= 0:
        raise DomainError("theta must be positive")
    out = np.empty(cfg.n_paths)

    def run(blk):
        b, s, e = blk
        out[s:e] = _simulate_block(p, theta, cfg, b, e - s)

    ordered_map(run, _blocks(cfg), cfg.threads)
    return out


def _pair_means(values: np.ndarray, cfg: McConfig) -> np.ndarray:
    """Average each antithetic pair (or return samples unchanged)."""
    if not cfg.antithetic:
        return values
    parts = []
    for _, s, e in _blocks(cfg):
        h = (e - s) // 2
        parts.append(0.5 * (values[..., s:s + h] + values[..., s + h:e]))
    return np.concatenate(parts, axis=-1)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.shape[-1]
    # pairwise summation inside numpy keeps the reduction order fixed
    m = float(np.mean(x))
    return m, float(np.std(x, ddof=1) / math.sqrt(n))


def martingale_check(z: np.ndarray, cfg: McConfig) -> McEstimate:
    """Estimate of E[exp(Z)], which should equal 1."""
    pm = _pair_means(np.exp(z), cfg)
    m, se = _mean_se(pm)
    return McEstimate(m, se, pm.size)


def _smile_from_sample(z, theta, ks, cfg):
    ks = np.asarray(ks, dtype=float)
    c = ForwardContract(1.0, 0.0, theta)
    payoff = np.maximum(np.exp(ks)[:, None] - np.exp(z)[None, :], 0.0)
    pm = _pair_means(payoff, cfg)
    keep_k, vols, prices, ests, dropped, vegas = [], [], [], [], [], []
    for j, k in enumerate(ks):
        price, se = _mean_se(pm[j])
        try:
            iv = implied_vol(c, math.exp(k), price)
        except (BoundsError, BracketError) as exc:
            dropped.append((float(k), str(exc)))
            warnings.warn(f"MC smile point k={k} dropped: {exc}", stacklevel=3)
            continue
        vega = bs_vega(c, math.exp(k), iv)
        keep_k.append(k)
        vols.append(iv)
        prices.append(price)
        vegas.append(vega)
        ests.append(McEstimate(iv, se / vega, pm.shape[-1]))
    smile = Smile(theta, keep_k, vols, prices=np.array(prices), dropped=dropped)
    return smile, ests, pm, np.array(vegas)


def mc_smile(p: HestonDLParams, theta: float, ks, cfg: McConfig = McConfig()):
    """Implied-vol smile from simulated puts; returns (Smile, [McEstimate per kept point])."""
    ks = np.asarray(ks, dtype=float)
    if not np.any(ks == 0):
        raise DomainError("ks must contain 0")
    z = simulate_terminal(p, theta, cfg)
    smile, ests, _, _ = _smile_from_sample(z, theta, ks, cfg)
    return smile, ests


@dataclass(frozen=True)
class McAtm:
    atm_iv: McEstimate
    skew: McEstimate
    curvature: McEstimate
    h: float


def mc_atm(p: HestonDLParams, theta: float, cfg: McConfig = McConfig(), h: float | None = None) -> McAtm:
    """ATM level, skew and curvature from the 5-point stencil on one common sample.

    Standard errors linearize the stencil through each strike's vega, so the
    correlation between strikes (common random numbers) is accounted for.
    """
    if h is None:
        h = 0.05 * math.sqrt(theta * heston_mean_variance(p, theta))
    ks = STENCIL_OFFSETS * h
    z = simulate_terminal(p, theta, cfg)
    smile, ests, pm, vegas = _smile_from_sample(z, theta, ks, cfg)
    if len(smile) != ks.size:
        raise BoundsError(f"MC stencil lost {ks.size - len(smile)} points at theta={theta}", "lower")
    w1, w2 = richardson_weights(h)
    iv = smile.implied_vol
    lin = pm / vegas[:, None]
    out = []
    for w in (w1, w2):
        contrib = w @ lin
        out.append(McEstimate(float(w @ iv), float(np.std(contrib, ddof=1) / math.sqrt(contrib.size)), contrib.size))
    return McAtm(ests[2], out[0], out[1], h)

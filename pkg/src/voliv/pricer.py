"""Exact option prices from characteristic functions, smiles, finite-difference ATM
derivatives and term structures of ATM skew/curvature.

Prices use a single damped Fourier integral in the units of the normalized
return X = Z / sigma0. For a CF phi of X, damping v and log-moneyness k,

    E[(e^k - e^{sigma0 X})^+] = (1/pi) int_0^inf Re[ e^k e^{i xi k/sigma0} sigma0
                                  / (a (a + sigma0)) phi(-xi) ] du,

with xi = u - i v and a = i xi. It needs E[exp(-v X)] < inf.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .blackscholes import ForwardContract, Smile, implied_vol, otm_normalized
from .edgeworth import atm_asymptotics
from .errors import (AccuracyError, BoundsError, BracketError, DomainError, PropagationError,
                     SmileQualityError, StripError, VolivError)
from .models import (HestonDLParams, ModelSpec, characteristic_function, cumulants)
from .numerics import STENCIL_OFFSETS, QuadratureSpec, integrate, richardson_weights
from .parallel import ordered_map

DEFAULT_DAMPING = 1.5
# tighter than the library default: finite differences of implied vols amplify price noise
PRICING_QUAD = QuadratureSpec(abs_tol=1e-14, rel_tol=1e-12, max_subdivisions=1000)
MAX_DROP_FRACTION = 0.2


@dataclass
class PricingGrid:
    maturity: float
    log_moneyness: np.ndarray
    damping: float = DEFAULT_DAMPING
    quad: QuadratureSpec = PRICING_QUAD

    def __post_init__(self):
        self.log_moneyness = np.asarray(self.log_moneyness, dtype=float)
        if self.damping <= 0:
            raise DomainError("damping must be positive")
        if np.any(np.diff(self.log_moneyness) <= 0):
            raise DomainError("log_moneyness must be strictly increasing")
        if not np.any(self.log_moneyness == 0):
            raise DomainError("log_moneyness must contain 0")


@dataclass
class AtmTermStructure:
    thetas: list = field(default_factory=list)
    skew_numeric: list = field(default_factory=list)
    skew_asym: list = field(default_factory=list)
    curv_numeric: list = field(default_factory=list)
    curv_asym: list = field(default_factory=list)
    std_error: list | None = None
    failures: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.thetas)
        cols = [self.skew_numeric, self.skew_asym, self.curv_numeric, self.curv_asym]
        if self.std_error is not None:
            cols.append(self.std_error)
        if any(len(c) != n for c in cols):
            raise DomainError("term-structure columns must have equal length")
        if any(b >= a for a, b in zip(self.thetas, self.thetas[1:])):
            raise DomainError("thetas must be strictly decreasing")

    def __len__(self):
        return len(self.thetas)


def normalized_put_from_cf(cf: Callable, k: float, sigma0: float, damping: float = DEFAULT_DAMPING,
                           quad: QuadratureSpec = PRICING_QUAD) -> float:
    """E[(e^k - e^{sigma0 X})^+] for the normalized return X with CF ``cf``."""
    probe = cf(complex(0.0, damping))
    if not np.isfinite(probe):
        raise StripError(f"CF overflows at Im(u) = {damping}; damping outside the analyticity strip")
    ek = math.exp(k)
    kk = k / sigma0

    def f(u):
        xi = complex(u, -damping)
        a = 1j * xi
        return (ek * np.exp(1j * xi * kk) * sigma0 / (a * (a + sigma0)) * cf(-xi)).real

    return integrate(f, 0.0, math.inf, quad).value / math.pi


def put_from_cf(cf: Callable, c: ForwardContract, strike: float, damping: float = DEFAULT_DAMPING,
                quad: QuadratureSpec = PRICING_QUAD, sigma0: float = 1.0) -> float:
    if not strike > 0:
        raise DomainError("strike must be positive")
    k = math.log(strike / c.forward)
    return c.forward * c.discount * normalized_put_from_cf(cf, k, sigma0, damping, quad)


def smile_from_cf(cf: Callable, c: ForwardContract, grid: PricingGrid, sigma0: float) -> Smile:
    """Implied-vol smile on the grid; points that cannot be inverted are dropped."""
    ks, vols, prices, dropped = [], [], [], []
    for k in grid.log_moneyness:
        K = c.forward * math.exp(k)
        try:
            p = put_from_cf(cf, c, K, grid.damping, grid.quad, sigma0)
            iv = implied_vol(c, K, p)
        except (BoundsError, BracketError, AccuracyError) as exc:
            dropped.append((float(k), f"{type(exc).__name__}: {exc}"))
            warnings.warn(f"smile point k={k:.6g} dropped: {exc}", stacklevel=2)
            continue
        ks.append(float(k))
        vols.append(iv)
        prices.append(p)
    n = grid.log_moneyness.size
    if len(dropped) > MAX_DROP_FRACTION * n:
        raise SmileQualityError(f"{len(dropped)} of {n} smile points dropped at theta={grid.maturity}")
    return Smile(grid.maturity, ks, vols, prices=np.array(prices), dropped=dropped)


def numerical_atm(smile_fn: Callable[[float], float], h: float) -> tuple[float, float]:
    """Five-point Richardson estimates of sigma'(0) and sigma''(0)."""
    vals = np.array([float(smile_fn(o * h)) for o in STENCIL_OFFSETS])
    if not np.all(np.isfinite(vals)):
        raise PropagationError(f"non-finite smile values {vals}")
    w1, w2 = richardson_weights(h)
    return float(w1 @ vals), float(w2 @ vals)


@dataclass(frozen=True)
class AtmGridTemplate:
    """How term_structure computes numerical ATM derivatives at each maturity."""

    h_factor: float = 0.05
    damping: float = DEFAULT_DAMPING
    quad: QuadratureSpec = PRICING_QUAD
    curvature_form: str = "proof"
    mc: object | None = None
    threads: int | None = None


def cf_atm(cf: Callable, theta: float, sigma0: float, template: AtmGridTemplate = AtmGridTemplate()):
    """Numerical ATM skew/curvature of the smile generated by ``cf`` at maturity theta."""
    h = template.h_factor * sigma0
    grid = PricingGrid(theta, STENCIL_OFFSETS * h, template.damping, template.quad)
    smile = smile_from_cf(cf, ForwardContract(1.0, 0.0, theta), grid, sigma0)
    if len(smile) != STENCIL_OFFSETS.size:
        raise SmileQualityError(f"stencil point dropped at theta={theta}: {smile.dropped}")
    lookup = dict(zip(np.round(smile.log_moneyness / h).astype(int).tolist(), smile.implied_vol))
    return numerical_atm(lambda k: lookup[int(round(k / h))], h)


def _numeric_point(model: ModelSpec, theta: float, template: AtmGridTemplate):
    """(skew, curvature, skew std error) or None when no exact engine exists."""
    if isinstance(model, HestonDLParams):
        from .mc_heston import McConfig, mc_atm
        cfg = template.mc if template.mc is not None else McConfig()
        r = mc_atm(model, theta, cfg)
        return r.skew.value, r.curvature.value, r.skew.std_error
    found = characteristic_function(model, theta)
    if found is None:
        return None
    cf, s0 = found
    skew, curv = cf_atm(cf, theta, s0, template)
    return skew, curv, 0.0


def term_structure(model: ModelSpec, thetas: Sequence[float],
                   template: AtmGridTemplate = AtmGridTemplate()) -> AtmTermStructure:
    """Numerical and asymptotic ATM skew/curvature on a decreasing maturity grid.

    Per-maturity failures are recorded in ``failures`` with NaN numerics; the call
    raises only when every maturity fails.
    """
    thetas = [float(t) for t in thetas]
    if any(not (0 < t <= 1) for t in thetas):
        raise DomainError("maturities must lie in (0, 1]")
    if not thetas:
        return AtmTermStructure()

    def one(theta):
        c = cumulants(model, theta)
        skew_a, curv_a = atm_asymptotics(c, template.curvature_form)
        try:
            num = _numeric_point(model, theta, template)
            err = None
        except VolivError as exc:
            num, err = None, f"{type(exc).__name__}: {exc}"
        return theta, skew_a.value, curv_a.value, num, err

    # the MC engine parallelizes internally over path blocks
    threads = 1 if isinstance(model, HestonDLParams) else template.threads
    rows = ordered_map(one, thetas, threads)
    is_mc = isinstance(model, HestonDLParams)
    cols = {k: [] for k in ("skew_numeric", "skew_asym", "curv_numeric", "curv_asym", "std_error")}
    failures = []
    has_engine = False
    for theta, sa, ca, num, err in rows:
        cols["skew_asym"].append(float(sa))
        cols["curv_asym"].append(float(ca))
        if err is not None:
            failures.append((theta, err))
        if num is None:
            num = (math.nan, math.nan, math.nan)
            has_engine = has_engine or err is not None
        else:
            has_engine = True
        cols["skew_numeric"].append(float(num[0]))
        cols["curv_numeric"].append(float(num[1]))
        cols["std_error"].append(float(num[2]))
    if not is_mc:
        cols["std_error"] = None
    ts = AtmTermStructure(thetas=thetas, failures=failures, **cols)
    if has_engine and len(ts.failures) == len(thetas):
        raise AccuracyError(f"numerical ATM failed at every maturity: {ts.failures}", ts, math.nan)
    return ts


def geometric_grid(start: float = 0.25, stop: float = 0.004, n: int = 12) -> list:
    if n < 1 or not (start > 0 and stop > 0):
        raise DomainError("need n >= 1 and positive end points")
    if n == 1:
        return [float(start)]
    return [float(x) for x in np.geomspace(start, stop, n)]


def _fmt(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def smile_rows(smiles, errors=None):
    """Rows (theta, k, iv, price[, std_error]) for a list of smiles."""
    rows = []
    for i, s in enumerate(smiles):
        prices = s.prices if s.prices is not None else [math.nan] * len(s)
        for j, (k, v) in enumerate(s.points):
            row = [s.maturity, k, v, prices[j]]
            if errors is not None:
                row.append(errors[i][j])
            rows.append(row)
    return rows


def write_csv(path_or_buf, header, rows) -> None:
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", encoding="utf-8", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, int, np.floating)) and not isinstance(x, bool) else x
                        for x in r])
    finally:
        if own:
            fh.close()


def write_smile_csv(path_or_buf, smiles, errors=None) -> None:
    header = ["theta", "k", "iv", "price"] + (["std_error"] if errors is not None else [])
    write_csv(path_or_buf, header, smile_rows(smiles, errors))


def write_term_structure_csv(path_or_buf, ts: AtmTermStructure) -> None:
    header = ["theta", "skew_numeric", "skew_asym", "curv_numeric", "curv_asym"]
    cols = [ts.thetas, ts.skew_numeric, ts.skew_asym, ts.curv_numeric, ts.curv_asym]
    if ts.std_error is not None:
        header.append("std_error")
        cols.append(ts.std_error)
    write_csv(path_or_buf, header, zip(*cols))


def term_structure_csv_text(ts: AtmTermStructure) -> str:
    buf = io.StringIO()
    write_term_structure_csv(buf, ts)
    return buf.getvalue()


def convex_order_diagnostic(model: ModelSpec, thetas: Sequence[float], strikes_k: Sequence[float],
                            damping: float = DEFAULT_DAMPING) -> dict:
    """Call prices E[(e^Z - e^k)^+] by maturity for each strike, and whether each
    strike's sequence is non-decreasing in maturity. Diagnostic only."""
    thetas = sorted(float(t) for t in thetas)
    table = {}
    for k in strikes_k:
        vals = []
        for th in thetas:
            found = characteristic_function(model, th)
            if found is None:
                raise DomainError(f"no closed-form CF for {model.kind}")
            cf, s0 = found
            put = normalized_put_from_cf(cf, k, s0, damping)
            vals.append(put + 1.0 - math.exp(k))
        table[float(k)] = vals
    monotone = {k: bool(np.all(np.diff(v) >= -1e-10)) for k, v in table.items()}
    return {"thetas": thetas, "calls": table, "monotone": monotone}

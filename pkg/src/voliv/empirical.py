"""Option-quote pipeline: row filters, maturity buckets, spline smiles, ATM
skew/curvature and power-law fits of their term structure.

Conventions
-----------
* maturity theta = (expiry - quote_date) in days / 365
* log-moneyness k = log(strike / forward)
* standardized moneyness = k / (atm_iv * sqrt(theta)), where atm_iv is the quoted
  IV closest to k = 0 among the quotes of the same (quote_date, expiry)
* outliers: IV farther than 5 MADs from the median of its own 5-point moneyness window
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .blackscholes import ForwardContract, implied_vol
from .errors import (CountError, InsufficientDataError, OrderingError, SchemaError, SignError,
                     ZeroValueError, DomainError, PowerLawError)
from .parallel import ordered_map

QUOTE_COLUMNS = ["quote_date", "expiry", "symbol", "option_type", "strike", "forward",
                 "implied_vol", "volume", "open_interest"]
BUCKET_COLUMNS = ["theta", "atm_iv", "skew", "curvature", "accepted", "reject_reason"]

MIN_THETA, MAX_THETA = 3 / 365, 1.0
MAX_STD_MONEYNESS = 0.75
MIN_WING_MONEYNESS = 0.5
MIN_WING_QUOTES = 4
OUTLIER_WINDOW = 5
OUTLIER_MADS = 5.0
MIN_MATURITIES = 4
SYMBOL = "SPX"

FILTER_RULES = ("open-interest", "volume", "maturity-window", "missing-iv", "symbol", "moneyness")


@dataclass(frozen=True)
class OptionQuote:
    quote_date: dt.date
    expiry: dt.date
    symbol: str
    strike: float
    option_type: str
    implied_vol: float | None
    volume: int
    open_interest: int
    forward: float

    def __post_init__(self):
        if self.expiry < self.quote_date:
            raise DomainError("expiry precedes quote_date")
        if self.option_type not in ("call", "put"):
            raise DomainError(f"option_type must be 'call' or 'put', got {self.option_type!r}")
        if not (self.strike > 0 and self.forward > 0):
            raise DomainError("strike and forward must be positive")
        if self.volume < 0 or self.open_interest < 0:
            raise DomainError("volume and open_interest must be non-negative")
        if self.implied_vol is not None and not (self.implied_vol > 0 and math.isfinite(self.implied_vol)):
            raise DomainError("implied_vol must be positive when present")

    @property
    def theta(self) -> float:
        return (self.expiry - self.quote_date).days / 365.0

    @property
    def log_moneyness(self) -> float:
        return math.log(self.strike / self.forward)

    @property
    def is_otm(self) -> bool:
        k = self.log_moneyness
        return (self.option_type == "put" and k <= 0) or (self.option_type == "call" and k >= 0)


@dataclass
class MaturityBucket:
    theta: float
    quotes: list
    atm_vol: float
    quote_date: dt.date | None = None
    expiry: dt.date | None = None

    def __post_init__(self):
        if not self.quotes:
            raise DomainError("bucket needs at least one quote")
        if not (MIN_THETA - 1e-12 <= self.theta <= MAX_THETA):
            raise DomainError(f"bucket maturity {self.theta} outside [3/365, 1]")

    def standardized(self, q: OptionQuote) -> float:
        return q.log_moneyness / (self.atm_vol * math.sqrt(self.theta))


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    amplitude: float
    r_squared: float
    n_points: int
    sign: int

    def __post_init__(self):
        if self.n_points < MIN_MATURITIES:
            raise DomainError("a power-law fit needs at least four points")

    def predict(self, theta):
        return self.sign * self.amplitude * np.asarray(theta, dtype=float) ** self.exponent

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "amplitude": self.amplitude, "r_squared": self.r_squared,
                "n_points": self.n_points, "sign": self.sign}


# --------------------------------------------------------------------------- row filters

def _atm_reference(quotes) -> dict:
    """Quoted IV closest to k = 0 for each (quote_date, expiry)."""
    best = {}
    for q in quotes:
        key = (q.quote_date, q.expiry)
        d = abs(q.log_moneyness)
        if key not in best or d < best[key][0]:
            best[key] = (d, q.implied_vol)
    return {k: v[1] for k, v in best.items()}


def _first_failure(q: OptionQuote) -> str | None:
    if not q.open_interest > 0:
        return "open-interest"
    if not q.volume > 0:
        return "volume"
    if not (MIN_THETA - 1e-12 <= q.theta <= MAX_THETA):
        return "maturity-window"
    if q.implied_vol is None:
        return "missing-iv"
    if q.symbol != SYMBOL:
        return "symbol"
    return None


def filter_quotes(raw):
    """Split quotes into (kept, rejected); each rejection carries its first failing rule."""
    raw = list(raw)
    pre = [(q, _first_failure(q)) for q in raw]
    atm = _atm_reference([q for q, r in pre if r is None])
    kept, rejected = [], []
    for q, reason in pre:
        if reason is None:
            x = q.log_moneyness / (atm[(q.quote_date, q.expiry)] * math.sqrt(q.theta))
            if abs(x) > MAX_STD_MONEYNESS:
                reason = "moneyness"
        if reason is None:
            kept.append(q)
        else:
            rejected.append((q, reason))
    return kept, rejected


def build_buckets(kept) -> list[MaturityBucket]:
    groups = defaultdict(list)
    for q in kept:
        groups[(q.quote_date, q.expiry)].append(q)
    atm = _atm_reference(kept)
    out = []
    for key in sorted(groups):
        qs = groups[key]
        out.append(MaturityBucket(qs[0].theta, qs, atm[key], quote_date=key[0], expiry=key[1]))
    return out


# --------------------------------------------------------------------------- buckets

def _smile_points(b: MaturityBucket):
    """Out-of-the-money (k, iv, type) sorted by k."""
    pts = sorted((q.log_moneyness, q.implied_vol, q.option_type) for q in b.quotes if q.is_otm)
    return pts


def remove_outliers(k, iv):
    """Boolean mask of points kept by a local Hampel rule.

    Each point is compared with the median of its 5-point window (k order; the window
    is shifted inward at the ends) and dropped when it deviates by more than 5 MADs of
    that same window.
    """
    k = np.asarray(k, dtype=float)
    iv = np.asarray(iv, dtype=float)
    n = iv.size
    if n < 3:
        return np.ones(n, dtype=bool)
    w = min(OUTLIER_WINDOW, n)
    floor = 1e-6 * float(np.median(iv))
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        lo = min(max(i - w // 2, 0), n - w)
        win = iv[lo:lo + w]
        med = np.median(win)
        mad = np.median(np.abs(win - med))
        keep[i] = abs(iv[i] - med) <= OUTLIER_MADS * max(mad, floor)
    return keep


def _clean(b: MaturityBucket):
    pts = _smile_points(b)
    if not pts:
        return np.array([]), np.array([]), [], 0
    k = np.array([p[0] for p in pts])
    iv = np.array([p[1] for p in pts])
    kinds = [p[2] for p in pts]
    mask = remove_outliers(k, iv)
    return k[mask], iv[mask], [t for t, m in zip(kinds, mask) if m], int((~mask).sum())


def validate_bucket(b: MaturityBucket):
    """(accepted, diagnostics). Rules are checked after outlier removal in the order
    moneyness-range, otm-put-count, otm-call-count."""
    k, iv, kinds, n_out = _clean(b)
    xs = k / (b.atm_vol * math.sqrt(b.theta)) if k.size else k
    n_put = sum(1 for t, kk in zip(kinds, k) if t == "put" and kk < 0)
    n_call = sum(1 for t, kk in zip(kinds, k) if t == "call" and kk > 0)
    diag = {"outliers": n_out, "otm_puts": n_put, "otm_calls": n_call,
            "max_std_moneyness": float(np.max(np.abs(xs))) if xs.size else 0.0, "reason": ""}
    if diag["max_std_moneyness"] < MIN_WING_MONEYNESS:
        diag["reason"] = "moneyness-range"
    elif n_put < MIN_WING_QUOTES:
        diag["reason"] = "otm-put-count"
    elif n_call < MIN_WING_QUOTES:
        diag["reason"] = "otm-call-count"
    return diag["reason"] == "", diag


def spline_atm(b: MaturityBucket, bc_type="natural") -> tuple[float, float, float]:
    """Spline value, slope and curvature of IV in log-moneyness at k = 0."""
    k, iv, _, _ = _clean(b)
    return spline_atm_points(k, iv, bc_type)


def spline_atm_points(k, iv, bc_type="natural") -> tuple[float, float, float]:
    k = np.asarray(k, dtype=float)
    iv = np.asarray(iv, dtype=float)
    # average duplicated strikes (an ATM put and call share k = 0)
    uk, inv = np.unique(k, return_inverse=True)
    uiv = np.bincount(inv, weights=iv) / np.bincount(inv)
    if uk.size < 4:
        raise InsufficientDataError(f"spline needs at least 4 distinct points, got {uk.size}")
    sp = CubicSpline(uk, uiv, bc_type=bc_type)
    return float(sp(0.0)), float(sp(0.0, 1)), float(sp(0.0, 2))


# --------------------------------------------------------------------------- power law

def fit_power_law(thetas, values) -> PowerLawFit:
    """OLS of log|value| on log(theta): value ~ sign * amplitude * theta**exponent."""
    t = np.asarray(thetas, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise DomainError("thetas and values must have equal length")
    if np.unique(t).size < MIN_MATURITIES:
        raise CountError(f"need at least {MIN_MATURITIES} distinct maturities, got {np.unique(t).size}")
    if np.any(v == 0) or not np.all(np.isfinite(v)):
        raise ZeroValueError("values must be finite and non-zero")
    signs = np.sign(v)
    if np.any(signs != signs[0]):
        raise SignError("values change sign")
    order = np.argsort(t, kind="stable")
    a = np.abs(v[order][:3])
    if not (np.all(np.diff(a) >= 0) or np.all(np.diff(a) <= 0)):
        raise OrderingError("first three values are not monotone in magnitude")
    x, y = np.log(t), np.log(np.abs(v))
    X = np.column_stack([np.ones_like(x), x])
    (intercept, slope), *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(float(slope), float(math.exp(intercept)), min(max(r2, 0.0), 1.0), int(t.size),
                       int(signs[0]))


# --------------------------------------------------------------------------- files

def _parse_date(s: str, col: str, row: int) -> dt.date:
    try:
        return dt.date.fromisoformat(s.strip())
    except ValueError:
        raise SchemaError(f"row {row}: column {col!r} is not an ISO-8601 date: {s!r}", col, row) from None


def _parse_num(s: str, col: str, row: int, kind=float):
    try:
        v = kind(s.strip())
    except ValueError:
        raise SchemaError(f"row {row}: column {col!r} is not a valid {kind.__name__}: {s!r}", col, row) from None
    if kind is float and not math.isfinite(v):
        raise SchemaError(f"row {row}: column {col!r} is not finite", col, row)
    return v


def read_quotes_csv(path) -> list[OptionQuote]:
    """Read quotes; row numbers in errors are file line numbers (header is line 1)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file: missing header", None, 1) from None
        header = [h.strip() for h in header]
        if header != QUOTE_COLUMNS:
            bad = next((i for i, (a, b) in enumerate(zip(header, QUOTE_COLUMNS)) if a != b),
                       min(len(header), len(QUOTE_COLUMNS)))
            col = QUOTE_COLUMNS[bad] if bad < len(QUOTE_COLUMNS) else header[bad]
            raise SchemaError(f"header mismatch at column {bad + 1}: expected {QUOTE_COLUMNS}", col, 1)
        out = []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(QUOTE_COLUMNS):
                raise SchemaError(f"row {line}: expected {len(QUOTE_COLUMNS)} fields, got {len(rec)}", None, line)
            d = dict(zip(QUOTE_COLUMNS, rec))
            otype = d["option_type"].strip().lower()
            if otype not in ("call", "put"):
                raise SchemaError(f"row {line}: option_type must be call or put", "option_type", line)
            iv = None if not d["implied_vol"].strip() else _parse_num(d["implied_vol"], "implied_vol", line)
            try:
                q = OptionQuote(
                    quote_date=_parse_date(d["quote_date"], "quote_date", line),
                    expiry=_parse_date(d["expiry"], "expiry", line),
                    symbol=d["symbol"].strip(),
                    strike=_parse_num(d["strike"], "strike", line),
                    option_type=otype,
                    implied_vol=iv,
                    volume=_parse_num(d["volume"], "volume", line, int),
                    open_interest=_parse_num(d["open_interest"], "open_interest", line, int),
                    forward=_parse_num(d["forward"], "forward", line),
                )
            except DomainError as exc:
                raise SchemaError(f"row {line}: {exc}", None, line) from None
            out.append(q)
    return out


def write_quotes_csv(path, quotes) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(QUOTE_COLUMNS)
        for q in quotes:
            w.writerow([q.quote_date.isoformat(), q.expiry.isoformat(), q.symbol, q.option_type,
                        repr(float(q.strike)), repr(float(q.forward)),
                        "" if q.implied_vol is None else repr(float(q.implied_vol)),
                        q.volume, q.open_interest])


# --------------------------------------------------------------------------- pipeline

@dataclass
class BucketResult:
    theta: float
    atm_iv: float
    skew: float
    curvature: float
    accepted: bool
    reject_reason: str
    quote_date: dt.date | None = None
    expiry: dt.date | None = None


@dataclass
class PipelineResult:
    buckets: list
    rejected_quotes: list
    fits: dict = field(default_factory=dict)

    def accepted(self):
        return [b for b in self.buckets if b.accepted]


def aggregate_by_theta(buckets, attr: str):
    """Median of ``attr`` over accepted buckets sharing a maturity, sorted by theta."""
    groups = defaultdict(list)
    for b in buckets:
        if b.accepted:
            groups[round(b.theta * 365)].append(getattr(b, attr))
    days = sorted(groups)
    return [d / 365.0 for d in days], [float(np.median(groups[d])) for d in days]


def _process_bucket(b: MaturityBucket, bc_type: str) -> BucketResult:
    ok, diag = validate_bucket(b)
    if ok:
        try:
            atm, skew, curv = spline_atm(b, bc_type)
        except InsufficientDataError:
            ok, diag["reason"] = False, "insufficient-data"
    if not ok:
        atm = skew = curv = math.nan
    return BucketResult(b.theta, atm, skew, curv, ok, diag["reason"], b.quote_date, b.expiry)


def run_pipeline(quotes, bc_type="natural", threads=None) -> PipelineResult:
    kept, rejected = filter_quotes(quotes)
    results = ordered_map(lambda b: _process_bucket(b, bc_type), build_buckets(kept), threads)
    res = PipelineResult(results, rejected)
    for name in ("skew", "curvature"):
        thetas, vals = aggregate_by_theta(results, name)
        try:
            res.fits[name] = fit_power_law(thetas, vals).to_dict()
        except PowerLawError as exc:
            res.fits[name] = {"skipped": True, "reason": exc.reason, "detail": str(exc),
                              "n_points": len(thetas)}
    return res


def _fmt(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else "nan"


def write_bucket_csv(path, result: PipelineResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BUCKET_COLUMNS)
        for b in result.buckets:
            w.writerow([_fmt(b.theta), _fmt(b.atm_iv), _fmt(b.skew), _fmt(b.curvature),
                        "true" if b.accepted else "false", b.reject_reason])


def fits_json(result: PipelineResult) -> str:
    return json.dumps(result.fits, indent=2, sort_keys=True) + "\n"


def synthetic_quotes(smile_fn, thetas_days, quote_date=dt.date(2024, 1, 2), forward=100.0,
                     n_per_side=10, max_std=0.7, symbol=SYMBOL):
    """Clean OTM quotes from ``smile_fn(theta, k) -> iv``.

    For each maturity (in days) strikes cover standardized moneyness in
    [-max_std, max_std]: puts below the forward, calls above, both at the money.
    """
    quotes = []
    for days in thetas_days:
        theta = days / 365.0
        expiry = quote_date + dt.timedelta(days=int(days))
        atm = smile_fn(theta, 0.0)
        xs = np.linspace(-max_std, max_std, 2 * n_per_side + 1)
        for x in xs:
            k = float(x * atm * math.sqrt(theta))
            iv = float(smile_fn(theta, k))
            types = ("put", "call") if x == 0 else (("put",) if x < 0 else ("call",))
            for t in types:
                quotes.append(OptionQuote(quote_date, expiry, symbol, forward * math.exp(k), t, iv,
                                          10, 100, forward))
    return quotes


def model_smile(model):
    """smile_fn(theta, k) -> implied vol priced from the model's characteristic function."""
    from .models import characteristic_function
    from .pricer import put_from_cf

    def fn(theta, k):
        found = characteristic_function(model, theta)
        if found is None:
            raise DomainError(f"model {model.kind!r} has no characteristic function")
        cf, s0 = found
        c = ForwardContract(1.0, 0.0, theta)
        K = math.exp(k)
        return implied_vol(c, K, put_from_cf(cf, c, K, sigma0=s0))
    return fn

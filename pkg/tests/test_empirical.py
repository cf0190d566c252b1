import datetime as dt
import json
import math

import numpy as np
import pytest

from voliv.empirical import (FILTER_RULES, QUOTE_COLUMNS, MaturityBucket, OptionQuote, PowerLawFit,
                             aggregate_by_theta, build_buckets, filter_quotes, fit_power_law, fits_json,
                             model_smile, read_quotes_csv, remove_outliers, run_pipeline, spline_atm,
                             spline_atm_points, synthetic_quotes, validate_bucket, write_bucket_csv,
                             write_quotes_csv)
from voliv.errors import (CountError, DomainError, InsufficientDataError, OrderingError, SchemaError,
                          SignError, ZeroValueError)
from voliv.models import GammaReturnParams, characteristic_function
from voliv.pricer import cf_atm

D0 = dt.date(2024, 1, 2)


def quote(days=30, k=0.0, typ=None, iv=0.2, vol=10, oi=100, sym="SPX", fwd=100.0):
    typ = typ or ("put" if k <= 0 else "call")
    return OptionQuote(D0, D0 + dt.timedelta(days=days), sym, fwd * math.exp(k), typ, iv, vol, oi, fwd)


def quadratic(theta, k):
    return 0.2 + 0.3 * k + 1.0 * k * k


@pytest.fixture
def clean():
    return synthetic_quotes(quadratic, [30])


def one_failure_each(base):
    """One quote failing each filter rule, in FILTER_RULES order."""
    return [
        quote(oi=0),
        quote(vol=0),
        quote(days=2),
        quote(iv=None),
        quote(sym="SPXW"),
        quote(k=0.9 * 0.2 * math.sqrt(30 / 365)),
    ]


def test_quote_validation():
    with pytest.raises(DomainError):
        OptionQuote(D0, D0 - dt.timedelta(days=1), "SPX", 100, "put", 0.2, 1, 1, 100)
    with pytest.raises(DomainError):
        quote(typ="straddle")
    with pytest.raises(DomainError):
        quote(iv=-0.1)
    q = quote(days=73, k=0.1)
    assert q.theta == pytest.approx(0.2) and q.log_moneyness == pytest.approx(0.1) and q.is_otm


def test_each_filter_rule_triggers_exactly_once(clean):
    bad = one_failure_each(clean)
    kept, rejected = filter_quotes(clean + bad)
    assert [r for _, r in rejected] == list(FILTER_RULES)
    assert kept == clean
    assert len(kept) + len(rejected) == len(clean) + len(bad)


def test_filter_examples():
    kept, rej = filter_quotes([quote(vol=0)])
    assert rej[0][1] == "volume" and not kept
    assert filter_quotes([quote(days=2)])[1][0][1] == "maturity-window"
    assert filter_quotes([quote()])[0] == [quote()]
    # first failing rule wins
    assert filter_quotes([quote(oi=0, vol=0, sym="X")])[1][0][1] == "open-interest"


def test_filter_idempotent(clean):
    kept, _ = filter_quotes(clean + one_failure_each(clean))
    again, rej = filter_quotes(kept)
    assert again == kept and rej == []


def test_bucket_validation_rules():
    with pytest.raises(DomainError):
        MaturityBucket(0.001, [quote()], 0.2)
    with pytest.raises(DomainError):
        MaturityBucket(0.1, [], 0.2)
    ok, diag = validate_bucket(build_buckets(synthetic_quotes(quadratic, [30]))[0])
    assert ok and diag["otm_puts"] == 10 and diag["otm_calls"] == 10
    narrow = synthetic_quotes(quadratic, [30], max_std=0.4)
    ok, diag = validate_bucket(build_buckets(narrow)[0])
    assert not ok and diag["reason"] == "moneyness-range"
    b = build_buckets(synthetic_quotes(quadratic, [30], n_per_side=3))[0]
    ok, diag = validate_bucket(b)
    assert not ok and diag["reason"] == "otm-put-count"


def test_otm_call_count_rule():
    qs = synthetic_quotes(quadratic, [30])
    calls = [q for q in qs if q.option_type == "call" and q.log_moneyness > 0]
    # keep the outermost three OTM calls so the moneyness range still passes
    qs = [q for q in qs if q not in calls[:-3]]
    ok, diag = validate_bucket(build_buckets(qs)[0])
    assert not ok and diag["reason"] == "otm-call-count"


def test_outlier_removed():
    k = np.linspace(-0.1, 0.1, 15)
    iv = 0.2 + 0.3 * k
    iv[5] += 0.05
    mask = remove_outliers(k, iv)
    assert not mask[5] and mask.sum() == 14
    assert remove_outliers(k[:2], iv[:2]).all()


def test_spline_quadratic_recovery(clean):
    b = build_buckets(clean)[0]
    atm, skew, curv = spline_atm(b)
    assert (atm, skew, curv) == pytest.approx((0.2, 0.3, 2.0), abs=1e-3)


def test_spline_fifteen_nodes():
    k = np.linspace(-0.2, 0.2, 15)
    got = spline_atm_points(k, quadratic(0, k))
    assert got == pytest.approx((0.2, 0.3, 2.0), abs=1e-3)


def test_spline_flat_and_cubic_exact():
    k = np.linspace(-0.75, 0.75, 13)
    assert spline_atm_points(k, np.full(13, 0.2)) == pytest.approx((0.2, 0.0, 0.0), abs=1e-9)
    cubic = lambda x: 0.2 - 0.1 * x + 0.5 * x ** 2 + 0.3 * x ** 3
    d1 = lambda x: -0.1 + x + 0.9 * x ** 2
    d2 = lambda x: 1.0 + 1.8 * x
    # exact on cubics with end conditions matching the cubic's own second derivative
    got = spline_atm_points(k, cubic(k), bc_type=((2, d2(-0.75)), (2, d2(0.75))))
    assert got == pytest.approx((cubic(0), d1(0), d2(0)), abs=1e-9)
    got = spline_atm_points(k, cubic(k), bc_type="not-a-knot")
    assert got == pytest.approx((cubic(0), d1(0), d2(0)), abs=1e-9)


def test_spline_insufficient_data():
    with pytest.raises(InsufficientDataError):
        spline_atm_points([-0.1, 0.0, 0.0, 0.1], [0.2, 0.2, 0.2, 0.2])


def test_spline_matches_cf_pricer():
    model = GammaReturnParams()
    theta = 18 / 365
    qs = synthetic_quotes(model_smile(model), [18], n_per_side=40, max_std=0.7)
    b = build_buckets(qs)[0]
    _, skew, _ = spline_atm(b)
    cf, s0 = characteristic_function(model, theta)
    assert skew == pytest.approx(cf_atm(cf, theta, s0)[0], abs=1e-3)


def test_power_law_exact():
    t = np.array([0.02, 0.05, 0.1, 0.2])
    fit = fit_power_law(t, 2 * t ** -0.4)
    assert fit.exponent == pytest.approx(-0.4, abs=1e-12)
    assert fit.amplitude == pytest.approx(2.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0) and fit.sign == 1
    neg = fit_power_law(t, -2 * t ** -0.4)
    assert neg.sign == -1 and neg.predict(0.1) == pytest.approx(-2 * 0.1 ** -0.4)


def test_power_law_noise():
    t = np.array([0.02, 0.04, 0.08, 0.12, 0.2, 0.35, 0.5, 0.8])
    for seed in range(100):
        rng = np.random.default_rng(seed)
        v = 2 * t ** -0.4 * (1 + 0.01 * rng.standard_normal(t.size))
        fit = fit_power_law(t, v)
        assert abs(fit.exponent + 0.4) <= 0.02


def test_power_law_errors():
    t = [0.02, 0.05, 0.1, 0.2]
    with pytest.raises(CountError):
        fit_power_law(t[:3], [1, 2, 3])
    with pytest.raises(CountError):
        fit_power_law([0.1, 0.1, 0.2, 0.3], [1, 1, 2, 3])
    with pytest.raises(SignError):
        fit_power_law(t, [1, -2, 3, 4])
    with pytest.raises(ZeroValueError):
        fit_power_law(t, [1, 0, 3, 4])
    with pytest.raises(OrderingError):
        fit_power_law(t, [1, 3, 2, 4])
    with pytest.raises(DomainError):
        PowerLawFit(-0.4, 1.0, 1.0, 3, 1)


def test_csv_roundtrip(tmp_path, clean):
    path = tmp_path / "q.csv"
    qs = clean + [quote(iv=None)]
    write_quotes_csv(path, qs)
    assert path.read_text().splitlines()[0] == ",".join(QUOTE_COLUMNS)
    assert read_quotes_csv(path) == qs


def test_csv_schema_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("quote_date,expiry,symbol\n")
    with pytest.raises(SchemaError) as info:
        read_quotes_csv(p)
    assert info.value.row == 1
    good = "2024-01-02,2024-02-01,SPX,put,95,100,0.2,10,100"
    p.write_text(",".join(QUOTE_COLUMNS) + "\n" + good + "\n" + good.replace("2024-02-01", "2024-13-01") + "\n")
    with pytest.raises(SchemaError) as info:
        read_quotes_csv(p)
    assert info.value.row == 3 and info.value.column == "expiry"
    p.write_text(",".join(QUOTE_COLUMNS) + "\n" + good.replace(",10,", ",ten,") + "\n")
    with pytest.raises(SchemaError) as info:
        read_quotes_csv(p)
    assert info.value.column == "volume"


def test_aggregate_median():
    from voliv.empirical import BucketResult
    bs = [BucketResult(30 / 365, 0.2, s, 1.0, True, "") for s in (1.0, 2.0, 4.0)]
    bs.append(BucketResult(60 / 365, 0.2, 9.0, 1.0, False, "otm-put-count"))
    assert aggregate_by_theta(bs, "skew") == ([30 / 365], [2.0])


def test_pipeline_end_to_end(tmp_path):
    model = GammaReturnParams()
    days = [3, 5, 8, 13, 21, 34, 55, 90]
    res = run_pipeline(synthetic_quotes(model_smile(model), days))
    assert len(res.accepted()) == 8
    # leading skew exponent: min(beta1 - 1/2, beta2)
    b1, b2 = model.alpha_bar - 1.5 * model.alpha, -model.alpha
    assert res.fits["skew"]["exponent"] == pytest.approx(min(b1 - 0.5, b2), abs=0.05)
    write_bucket_csv(tmp_path / "b.csv", res)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "theta,atm_iv,skew,curvature,accepted,reject_reason" and len(lines) == 9
    js = json.loads(fits_json(res))
    assert set(js) == {"skew", "curvature"}
    assert set(js["skew"]) == {"exponent", "amplitude", "r_squared", "n_points", "sign"}


def test_pipeline_skip_record():
    res = run_pipeline(synthetic_quotes(quadratic, [10, 20, 30]))
    assert res.fits["skew"]["skipped"] is True and res.fits["skew"]["reason"] == "count"
    assert res.fits["skew"]["n_points"] == 3


def test_pipeline_threads_identical():
    qs = synthetic_quotes(quadratic, [5, 10, 20, 30, 60])
    a, b = run_pipeline(qs, threads=1), run_pipeline(qs, threads=4)
    assert [vars(x) for x in a.buckets] == [vars(x) for x in b.buckets]

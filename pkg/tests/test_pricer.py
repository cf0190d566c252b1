import io
import math
import warnings

import numpy as np
import pytest

from voliv.blackscholes import ForwardContract, bs_put
from voliv.edgeworth import atm_asymptotics, iv_expansion
from voliv.errors import DomainError, PropagationError, SmileQualityError, StripError
from voliv.models import (CgmyReturnParams, GammaReturnParams, RoughBergomiAsymParams, characteristic_function,
                          cumulants)
from voliv.pricer import (AtmGridTemplate, AtmTermStructure, PricingGrid, cf_atm, convex_order_diagnostic,
                          geometric_grid, normalized_put_from_cf, numerical_atm, put_from_cf, smile_from_cf,
                          term_structure, term_structure_csv_text, write_smile_csv)

from .oracles import density_put

REGIMES = ([GammaReturnParams(alpha_bar=a) for a in (-0.1, 0.4, 0.6)]
        + [CgmyReturnParams(alpha_G=a) for a in (-0.5, 0.0, 0.2)])
REGIME_IDS = ["gamma-0.1", "gamma0.4", "gamma0.6", "cgmy-0.5", "cgmy0", "cgmy0.2"]


def lognormal(s0):
    return lambda u: np.exp(-0.5j * np.asarray(u) * s0 - 0.5 * np.asarray(u) ** 2)


def test_pricing_grid_validation():
    with pytest.raises(DomainError):
        PricingGrid(0.1, [-0.1, 0.1])
    with pytest.raises(DomainError):
        PricingGrid(0.1, [0.1, 0.0])
    with pytest.raises(DomainError):
        PricingGrid(0.1, [0.0], damping=0.0)


def test_term_structure_container_validation():
    with pytest.raises(DomainError):
        AtmTermStructure([0.1, 0.2], [0, 0], [0, 0], [0, 0], [0, 0])
    with pytest.raises(DomainError):
        AtmTermStructure([0.2, 0.1], [0], [0, 0], [0, 0], [0, 0])


@pytest.mark.parametrize("theta", [0.5, 0.05, 0.01])
@pytest.mark.parametrize("k", [-0.2, 0.0, 0.1])
def test_lognormal_cf_gives_black_scholes(theta, k):
    vol = 0.25
    s0 = vol * math.sqrt(theta)
    c = ForwardContract(1.3, 0.02, theta)
    K = 1.3 * math.exp(k * math.sqrt(theta))
    assert put_from_cf(lognormal(s0), c, K, sigma0=s0) == pytest.approx(bs_put(c, K, vol), abs=1e-8)


def test_strike_to_zero_is_worthless():
    cf, s0 = characteristic_function(GammaReturnParams(), 0.05)
    assert put_from_cf(cf, ForwardContract(1.0, 0.0, 0.05), 1e-6, sigma0=s0) < 1e-12


def test_damping_outside_strip():
    cf, s0 = characteristic_function(GammaReturnParams(), 0.5)
    with pytest.raises(StripError):
        normalized_put_from_cf(cf, 0.0, s0, damping=50.0)
    with pytest.raises(DomainError):
        put_from_cf(cf, ForwardContract(1.0, 0.0, 0.5), 0.0, sigma0=s0)


@pytest.mark.parametrize("model", REGIMES, ids=REGIME_IDS)
@pytest.mark.parametrize("theta", [0.05, 0.02])
def test_dual_route_price_agreement(model, theta):
    cf, s0 = characteristic_function(model, theta)
    for k in (0.0, -0.5 * s0, 0.5 * s0):
        assert normalized_put_from_cf(cf, k, s0) == pytest.approx(density_put(cf, k, s0), abs=1e-7)


def test_lognormal_smile_is_flat():
    theta, vol = 0.05, 0.3
    s0 = vol * math.sqrt(theta)
    grid = PricingGrid(theta, np.linspace(-2, 2, 9) * s0)
    smile = smile_from_cf(lognormal(s0), ForwardContract(1.0, 0.0, theta), grid, s0)
    np.testing.assert_allclose(smile.implied_vol, vol, atol=1e-7)
    skew, curv = cf_atm(lognormal(s0), theta, s0)
    assert abs(skew) < 1e-6 and abs(curv) < 1e-6


def test_smile_signs_for_sign_flip_regimes():
    for model, sign in ((GammaReturnParams(alpha_bar=-0.1), -1), (CgmyReturnParams(alpha_G=0.2), 1)):
        cf, s0 = characteristic_function(model, 0.05)
        skew, _ = cf_atm(cf, 0.05, s0)
        assert np.sign(skew) == sign


def test_smile_drops_and_quality_error():
    cf, s0 = characteristic_function(GammaReturnParams(), 0.05)
    # deep in-the-money puts defeat the contour quadrature and are dropped
    grid = PricingGrid(0.05, np.concatenate([[0.0], np.linspace(20, 40, 3) * s0]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(SmileQualityError):
            smile_from_cf(cf, ForwardContract(1.0, 0.0, 0.05), grid, s0)
    grid = PricingGrid(0.05, np.concatenate([np.linspace(-1, 1, 9) * s0, [40 * s0]]))
    with pytest.warns(UserWarning, match="dropped"):
        smile = smile_from_cf(cf, ForwardContract(1.0, 0.0, 0.05), grid, s0)
    assert len(smile) == 9 and len(smile.dropped) == 1


def test_numerical_atm_examples():
    assert numerical_atm(lambda k: 0.2 + 0.5 * k, 0.01) == pytest.approx((0.5, 0.0), abs=1e-9)
    s, c = numerical_atm(lambda k: 0.2 + k * k, 0.01)
    assert s == pytest.approx(0.0, abs=1e-9) and c == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(PropagationError):
        numerical_atm(lambda k: math.nan, 0.01)


@pytest.mark.parametrize("model", [GammaReturnParams(), CgmyReturnParams()], ids=["gamma", "cgmy"])
def test_numerical_atm_of_iv_expansion(model):
    theta = 0.01
    c = cumulants(model, theta)
    smile = lambda k: iv_expansion(k / math.sqrt(theta), c).value
    skew, _ = numerical_atm(smile, 1e-3)
    assert skew == pytest.approx(atm_asymptotics(c)[0].value, rel=1e-3)


@pytest.mark.parametrize("model", REGIMES, ids=REGIME_IDS)
def test_skew_gap_convergence_and_richardson(model):
    ratios = []
    for j in range(5):
        theta = 0.08 * 2.0 ** -j
        c = cumulants(model, theta)
        b1, b2 = c.beta1, c.beta2
        bbar = min(b2 + 0.5, 2 * b1, 2 * b2, b1 + b2)
        bstar = min(b1 + 0.5, bbar - 0.5)
        cf, s0 = characteristic_function(model, theta)
        skew, curv = cf_atm(cf, theta, s0)
        skew_h, _ = cf_atm(cf, theta, s0, AtmGridTemplate(h_factor=0.025))
        gap = abs(skew - atm_asymptotics(c)[0].value)
        assert abs(skew_h - skew) < 0.05 * gap
        ratios.append(gap / theta ** bstar)
    assert max(ratios) <= 2.0 * ratios[0]


def test_term_structure_gamma():
    ts = term_structure(GammaReturnParams(alpha_bar=0.6), [0.05, 0.02, 0.01])
    assert len(ts) == 3 and ts.std_error is None and not ts.failures
    assert all(s > 0 for s in ts.skew_numeric)
    c = cumulants(GammaReturnParams(alpha_bar=0.6), 0.01)
    s, k = atm_asymptotics(c)
    assert ts.skew_asym[-1] == s.value and ts.curv_asym[-1] == k.value
    assert term_structure(GammaReturnParams(), []).thetas == []
    with pytest.raises(DomainError):
        term_structure(GammaReturnParams(), [0.0])


def test_term_structure_without_engine_has_nan_numerics():
    ts = term_structure(RoughBergomiAsymParams(), [0.05, 0.01])
    assert all(math.isnan(x) for x in ts.skew_numeric) and not ts.failures
    assert all(math.isfinite(x) for x in ts.skew_asym)


def test_term_structure_records_failures():
    # c_gamma large enough that gamma_theta >= 1 at theta = 1 only
    model = GammaReturnParams(c_gamma=1.2)
    ts = term_structure(model, [1.0, 0.05])
    assert [t for t, _ in ts.failures] == [1.0]
    assert math.isnan(ts.skew_numeric[0]) and math.isfinite(ts.skew_numeric[1])


def test_term_structure_threads_bitwise_identical():
    grid = [0.05, 0.02, 0.01]
    a = term_structure_csv_text(term_structure(CgmyReturnParams(), grid, AtmGridTemplate(threads=1)))
    b = term_structure_csv_text(term_structure(CgmyReturnParams(), grid, AtmGridTemplate(threads=3)))
    assert a == b
    assert a.splitlines()[0] == "theta,skew_numeric,skew_asym,curv_numeric,curv_asym"


def test_smile_csv_format():
    s0 = 0.05
    grid = PricingGrid(0.04, [-0.05, 0.0, 0.05])
    smile = smile_from_cf(lognormal(s0), ForwardContract(1.0, 0.0, 0.04), grid, s0)
    buf = io.StringIO()
    write_smile_csv(buf, [smile])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "theta,k,iv,price" and len(lines) == 4
    assert float(lines[2].split(",")[2]) == pytest.approx(0.25, abs=1e-7)


def test_geometric_grid():
    g = geometric_grid()
    assert len(g) == 12 and g[0] == pytest.approx(0.25) and g[-1] == pytest.approx(0.004)
    assert all(b < a for a, b in zip(g, g[1:]))
    with pytest.raises(DomainError):
        geometric_grid(n=0)


def test_convex_order_diagnostic_monotone():
    d = convex_order_diagnostic(GammaReturnParams(), [0.02, 0.05, 0.1], [-0.05, 0.0, 0.05])
    assert d["thetas"] == [0.02, 0.05, 0.1]
    assert all(d["monotone"].values())

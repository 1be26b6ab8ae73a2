import numpy as np
import pytest

from dslpid.dslp import DualSlsEstimate, realize_plant_ss, strictly_proper_part
from dslpid.errors import SingularClosedLoop, TooFewPoints, ZeroReferenceValue
from dslpid.lti import RationalTF, poly_roots, tf_eval, tf_neg, tf_to_ss
from dslpid.metrics import (
    closed_loop_response,
    closed_loop_stable,
    err1,
    err2,
    freq_grid,
    metric_report,
)
from dslpid.sls import true_dual_params

from conftest import K_STRICT, PLANT

N = 5110
GRID = freq_grid(N)


def test_grid_endpoints():
    np.testing.assert_array_equal(freq_grid(2), [0.0, np.pi])
    np.testing.assert_allclose(freq_grid(3), [0.0, np.pi / 2, np.pi])
    g = freq_grid(N)
    assert g.size == N and g[0] == 0.0 and g[-1] == np.pi
    with pytest.raises(TooFewPoints):
        freq_grid(1)


def test_err1_reference_cases():
    assert err1(PLANT, PLANT, GRID) == 0.0
    assert err1(PLANT, RationalTF.constant(0.0), GRID) == pytest.approx(100.0 * N, rel=1e-12)
    scaled = tf_eval(PLANT, np.exp(1j * GRID)) * 1.01
    assert err1(PLANT, scaled, GRID) == pytest.approx(1.0 * N, rel=1e-9)


def test_err2_exact_plant_is_zero():
    assert err2(PLANT, PLANT, K_STRICT, GRID) == 0.0


def test_err2_long_horizon_estimate():
    k = tf_to_ss(K_STRICT)
    est = DualSlsEstimate(true_dual_params(PLANT, k.A, k.B, k.C, 40), strictly_proper_part(k), k.D, 0.0, 0.0)
    ghat = realize_plant_ss(est)
    assert err2(PLANT, ghat, K_STRICT, GRID) / N <= 1e-4
    rep = metric_report(PLANT, ghat, K_STRICT, GRID, ghat, k)
    assert rep.cl_stable and rep.grid_size == N
    assert rep.err1_mean <= 1e-4


def test_closed_loop_response_scalar():
    z = np.exp(1j * GRID[::97])
    g, k = tf_eval(PLANT, z), tf_eval(K_STRICT, z)
    np.testing.assert_allclose(closed_loop_response(PLANT, K_STRICT, GRID[::97])[:, 0, 0], g / (1 - g * k), rtol=1e-12)


def test_stability_certificates():
    g, k = tf_to_ss(PLANT), tf_to_ss(K_STRICT)
    cert = closed_loop_stable(g, k)
    assert cert.stable and cert.spectral_radius == pytest.approx(0.3, abs=1e-6)
    cert = closed_loop_stable(g, tf_to_ss(tf_neg(K_STRICT)))
    assert not cert.stable and cert.spectral_radius == pytest.approx(1.3, abs=1e-6)
    k_pole = tf_to_ss(RationalTF.from_descending([1], [1, -0.5]))
    cert = closed_loop_stable(tf_to_ss(RationalTF.constant(0.0)), k_pole)
    assert cert.spectral_radius == pytest.approx(0.5, abs=1e-12)


def _random_strict(rng, n):
    den = np.poly(rng.uniform(-1.2, 1.2, n))
    return RationalTF.from_descending(rng.uniform(-1, 1, n), den)


def test_certificate_agrees_with_characteristic_polynomial():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 50:
        G = _random_strict(rng, int(rng.integers(1, 4)))
        K = _random_strict(rng, int(rng.integers(1, 3)))
        char = G.den * K.den - G.num * K.num  # positive feedback
        rho = np.abs(poly_roots(char)).max()
        if abs(rho - 1.0) < 1e-6:
            continue
        cert = closed_loop_stable(tf_to_ss(G), tf_to_ss(K))
        assert cert.stable == (rho < 1.0)
        assert cert.spectral_radius == pytest.approx(rho, rel=1e-6)
        checked += 1


def test_sum_is_order_independent():
    rng = np.random.default_rng(5)
    z = np.exp(1j * GRID)
    g = tf_eval(PLANT, z)
    ghat = g * (1 + 0.1 * rng.standard_normal(N))
    perm = rng.permutation(N)
    assert err1(g, ghat, GRID) == err1(g[perm], ghat[perm], GRID[perm])


def test_zero_reference_value():
    with pytest.raises(ZeroReferenceValue):
        err1(RationalTF.from_descending([1, -1], [1, 0]), PLANT, GRID)


def test_singular_closed_loop():
    with pytest.raises(SingularClosedLoop):
        err2(PLANT, RationalTF.constant(1.0), RationalTF.constant(1.0), GRID)

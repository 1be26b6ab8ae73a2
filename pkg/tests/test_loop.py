import numpy as np
import pytest

from dslpid.errors import IllPosedLoop, LengthMismatch, UnstableLoop
from dslpid.lti import RationalTF, tf_combine, tf_simulate
from dslpid.loop import (
    LoopConfig,
    LoopDataset,
    composite_reference,
    loop_report,
    simulate_loop,
    simulate_loop_statespace,
    validate_loop,
)
from dslpid.signals import RngStream, Signal

from conftest import K_STRICT, NOISE, PLANT, make_dataset


def config(G=PLANT, K=K_STRICT, S=NOISE, r2=None, r1=None, sigma=0.0, seed=0):
    r2 = np.zeros(64) if r2 is None else np.asarray(r2, dtype=float)
    r1 = np.zeros(r2.size) if r1 is None else np.asarray(r1, dtype=float)
    return LoopConfig(G, K, S, Signal(r1), Signal(r2), sigma, RngStream(seed))


def test_benchmark_poles():
    rep = validate_loop(config())
    np.testing.assert_allclose(np.sort(np.abs(rep.poles)), [0, 0, 0.3, 0.3], atol=1e-7)


def test_textbook_sign_is_unstable():
    with pytest.raises(UnstableLoop) as exc:
        validate_loop(config(K=RationalTF.from_descending([1, -0.8], [1, 0, 0])))
    np.testing.assert_allclose(np.abs(exc.value.poles), [1.3, 1.3], atol=1e-6)


def test_open_loop_stable():
    assert validate_loop(config(K=RationalTF.constant(0.0))).ok


def test_ill_posed():
    with pytest.raises(IllPosedLoop):
        validate_loop(config(G=RationalTF.constant(1.0), K=RationalTF.constant(1.0)))


def test_unstable_noise_filter():
    with pytest.raises(UnstableLoop):
        validate_loop(config(S=RationalTF.from_descending([1], [1, -1.5])))


def test_impulse_gives_closed_loop_impulse_response():
    r2 = np.zeros(30)
    r2[0] = 1.0
    d = simulate_loop(config(r2=r2))
    t = np.arange(30)
    np.testing.assert_allclose(d.y.samples, (t + 1) * 0.3**t, atol=1e-13)


def test_structural_identities():
    d = make_dataset(sigma=2.0, seed=3)
    assert np.all(np.isfinite(d.y.samples))
    np.testing.assert_array_equal(d.ubar.samples, d.u.samples + d.r2.samples)
    np.testing.assert_allclose(d.ybar.samples, d.y.samples - tf_simulate(NOISE, d.e.samples), atol=0)
    assert np.var(d.y.samples) < 1e4


def test_zero_plant_gives_filtered_noise():
    d = simulate_loop(config(G=RationalTF.constant(0.0), r2=np.ones(200), sigma=1.0))
    np.testing.assert_allclose(d.y.samples, tf_simulate(NOISE, d.e.samples), atol=1e-12)


def test_noiseless_output_matches_closed_loop_map():
    d = make_dataset(sigma=0.0, periods=2)
    L = tf_combine("feedback", PLANT, K_STRICT)
    np.testing.assert_allclose(d.y.samples, tf_simulate(L, d.r.samples), atol=1e-9)


def test_composite_reference():
    r2 = np.arange(5.0)
    np.testing.assert_array_equal(composite_reference(np.zeros(5), r2, K_STRICT).samples, r2)
    r1 = np.array([1.0, 2.0, 3.0, 0.0, 0.0])
    np.testing.assert_array_equal(composite_reference(r1, np.zeros(5), RationalTF.constant(1.0)).samples, r1)
    delay = RationalTF.from_descending([1], [1, 0])
    np.testing.assert_array_equal(composite_reference(r1, r2, delay).samples, r2 + [0, 1, 2, 3, 0])
    with pytest.raises(LengthMismatch):
        composite_reference(np.zeros(3), np.zeros(4), K_STRICT)


def test_r1_path_consistent():
    rng = np.random.default_rng(0)
    r1, r2 = rng.normal(size=100), rng.normal(size=100)
    for sign in (1, -1):
        cfg = LoopConfig(PLANT, K_STRICT, NOISE, Signal(r1), Signal(r2), 0.5, RngStream(4), sign)
        d = simulate_loop(cfg)
        oracle = simulate_loop_statespace(cfg, e=d.e.samples)
        for k in ("y", "u", "ubar", "ybar"):
            np.testing.assert_allclose(getattr(d, k).samples, oracle[k], atol=1e-9)


def test_deterministic():
    a = make_dataset(sigma=2.0, seed=11)
    b = make_dataset(sigma=2.0, seed=11)
    assert a.hash() == b.hash()
    assert make_dataset(sigma=2.0, seed=12).hash() != a.hash()


def test_csv_roundtrip(tmp_path):
    d = make_dataset(sigma=2.0, seed=5, periods=1)
    side = d.to_csv(tmp_path / "data.csv")
    assert (tmp_path / "data.csv").read_text().splitlines()[0] == "t,r1,r2,e,u,ubar,y,ybar,r"
    back = LoopDataset.from_csv(tmp_path / "data.csv")
    assert back.hash() == d.hash()
    assert back.metadata["seed"] == 5 and side.exists()


def test_loop_report_no_raise():
    rep = loop_report(PLANT, RationalTF.from_descending([1, -0.8], [1, 0, 0]))
    assert not rep.ok and rep.spectral_radius == pytest.approx(1.3, abs=1e-6)

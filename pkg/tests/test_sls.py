import numpy as np
import pytest

from dslpid.dslp import NullSpace
from dslpid.errors import DimensionMismatch, UnstableLoop
from dslpid.lti import RationalTF, tf_impulse, tf_to_ss
from dslpid.sls import (
    FirParams,
    ParamLayout,
    build_affine_constraints,
    check_feasibility,
    true_dual_params,
    verify_params,
)

from conftest import K_STRICT, PLANT

AK = np.array([[0.0, 1.0], [0.0, 0.0]])
BK = np.array([[0.0], [1.0]])
CK = np.array([[0.8, -1.0]])


def feasible_point(A, B, C, T):
    ns = NullSpace.from_system(build_affine_constraints(A, B, C, T))
    return ns.system.layout.unpack(ns.theta_p), ns


def test_leading_R_tap_is_identity():
    rng = np.random.default_rng(0)
    A, B, C = rng.normal(size=(3, 3)) * 0.3, rng.normal(size=(3, 2)), rng.normal(size=(1, 3))
    sysm = build_affine_constraints(A, B, C, 4)
    lay = sysm.layout
    # the z^0 equations of the left_RM family read R[1] = I
    rows = sysm.E[sysm.families["left_RM"].start:sysm.families["left_RM"].start + 9].toarray()
    cols = [lay.index("R", 1, i, j) for i in range(3) for j in range(3)]
    np.testing.assert_array_equal(rows[:, cols], np.eye(9))
    np.testing.assert_array_equal(sysm.f[:9], np.eye(3).ravel())


def test_first_taps_tied_to_L0():
    params, _ = feasible_point(AK, BK, CK, 15)
    L0 = params.L[0]
    np.testing.assert_allclose(params.N[0], np.vstack([[0.0], L0]), atol=1e-12)
    np.testing.assert_allclose(params.M[0], L0 @ np.array([[0.8, -1.0]]), atol=1e-12)


def test_exact_solution_exists_at_T15():
    params, ns = feasible_point(AK, BK, CK, 15)
    assert verify_params(params, AK, BK, CK).max_abs <= 1e-10
    assert ns.Z.shape[1] == 13


@pytest.mark.parametrize("T, null_dim", [(1, 0), (2, 0), (3, 1), (15, 13)])
def test_feasibility_report(T, null_dim):
    # outcomes measured on the benchmark realization and frozen here
    rep = check_feasibility(AK, BK, CK, T)
    assert rep.feasible and rep.null_dim == null_dim


def test_unstable_without_inputs_is_infeasible():
    A = np.array([[1.5]])
    for T in (1, 5, 20):
        assert not check_feasibility(A, np.zeros((1, 1)), np.zeros((1, 1)), T).feasible


def test_deadbeat_residual_and_perturbation():
    params, _ = feasible_point(AK, BK, CK, 6)
    assert verify_params(params, AK, BK, CK).max_abs <= 1e-12
    R = params.R.copy()
    R[3, 0, 1] += 1e-3
    bumped = FirParams(6, R, params.M, params.N, params.L)
    assert verify_params(bumped, AK, BK, CK).max_abs >= 1e-4


def test_verify_dimension_mismatch():
    params, _ = feasible_point(AK, BK, CK, 3)
    with pytest.raises(DimensionMismatch):
        verify_params(params, np.eye(3), np.ones((3, 1)), np.ones((1, 3)))


def test_true_dual_L_taps_closed_form():
    p = true_dual_params(PLANT, AK, BK, CK, 20)
    t = np.arange(21)
    np.testing.assert_allclose(p.L[:, 0, 0], (t + 1) * 0.3**t, atol=1e-12)
    np.testing.assert_array_equal(p.R[0], np.eye(2))


def test_true_dual_L_sum_approaches_closed_loop_gain():
    p = true_dual_params(PLANT, AK, BK, CK, 80)
    assert p.L[:, 0, 0].sum() == pytest.approx(1 / 0.49, abs=1e-10)


def test_true_dual_zero_plant():
    p = true_dual_params(RationalTF.constant(0.0), AK, BK, CK, 5)
    assert not np.any(p.L)
    # R = (zI - A)^-1: taps A^(d-1) at delay d
    np.testing.assert_allclose(p.R[0], np.eye(2))
    np.testing.assert_allclose(p.R[1], AK)
    np.testing.assert_allclose(p.R[2:], 0.0)


def test_true_dual_unstable():
    with pytest.raises(UnstableLoop):
        true_dual_params(PLANT, AK, BK, -CK, 5)


def test_frequency_domain_identities():
    params, _ = feasible_point(AK, BK, CK, 15)
    rng = np.random.default_rng(1)
    z = np.exp(1j * rng.uniform(0, np.pi, 16))
    v = params.evaluate(z)
    zI_A = z[:, None, None] * np.eye(2) - AK
    left = np.concatenate([zI_A, -np.broadcast_to(BK, (16, 2, 1))], axis=2)
    right = np.concatenate([zI_A, -np.broadcast_to(CK, (16, 1, 2))], axis=1)
    Phi = np.concatenate([np.concatenate([v["R"], v["N"]], axis=2), np.concatenate([v["M"], v["L"]], axis=2)], axis=1)
    np.testing.assert_allclose((left @ Phi)[:, :, :2], np.broadcast_to(np.eye(2), (16, 2, 2)), atol=1e-9)
    np.testing.assert_allclose((left @ Phi)[:, :, 2:], 0.0, atol=1e-9)
    np.testing.assert_allclose((Phi @ right)[:, :2, :], np.broadcast_to(np.eye(2), (16, 2, 2)), atol=1e-9)
    np.testing.assert_allclose((Phi @ right)[:, 2:, :], 0.0, atol=1e-9)


def test_generic_mimo_realization():
    # the builder works for any (A, B, C); with a stable A an FIR solution exists once T exceeds the nilpotency
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    B = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    C = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 0.0]])
    params, _ = feasible_point(A, B, C, 6)
    assert params.dims == (3, 2, 2)
    assert verify_params(params, A, B, C).max_abs <= 1e-10


def test_json_roundtrip():
    params, _ = feasible_point(AK, BK, CK, 4)
    back = FirParams.from_json(params.to_json())
    for k in "RMNL":
        np.testing.assert_array_equal(getattr(back, k), getattr(params, k))


def test_layout_pack_unpack():
    lay = ParamLayout(2, 1, 1, 3)
    theta = np.arange(lay.size, dtype=float)
    np.testing.assert_array_equal(lay.pack(lay.unpack(theta)), theta)
    assert lay.index("L", 0, 0, 0) == lay.offset("L")
    with pytest.raises(IndexError):
        lay.index("R", 0, 0, 0)


def test_true_params_match_long_division():
    k = tf_to_ss(K_STRICT)
    L = true_dual_params(PLANT, k.A, k.B, k.C, 20).L[:, 0, 0]
    Lk = RationalTF.from_descending([1, 0, 0], [1, -0.6, 0.09])
    np.testing.assert_allclose(L, tf_impulse(Lk, 21), atol=1e-10)

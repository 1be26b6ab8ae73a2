"""Closed-loop identification through the dual system-level parameters.

The output obeys y = L_k r + (1 - G K)^-1 S e with r = K r1 + r2 and
L_k = (1 - G K)^-1 G.  The estimator fits the FIR taps of L_k by least
squares while forcing all four FIR responses {R, M, N, L} into the affine
subspace built from the controller realization; the plant then follows from
G = L - M R^-1 N.

Proper controllers: the constraints use only the strictly proper part
(A_k, B_k, C_k).  Writing G_check = G (1 - D_k G)^-1 one has
G (1 - K G)^-1 = G_check (1 - K_sp G_check)^-1 with K_sp = K - D_k, so the
same regression identifies the dual parameters of (G_check, K_sp) and the
plant is recovered as G = G_check (1 + D_k G_check)^-1.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    IllPosedRealization,
    InfeasibleConstraints,
    RankDeficientRegressor,
    SingularCorrection,
    SingularRk,
    SingularTransform,
)
from .lti import FrequencyResponse, StateSpaceModel
from .signals import toeplitz_regressor
from .sls import AffineSystem, FirParams, build_affine_constraints

log = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-8
RK_COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class NullSpace:
    """Particular solution and orthonormal null-space basis of E theta = f."""

    system: AffineSystem
    theta_p: np.ndarray
    Z: np.ndarray
    rank: int

    @classmethod
    def from_system(cls, system: AffineSystem) -> "NullSpace":
        E = system.dense()
        U, s, Vt = np.linalg.svd(E, full_matrices=True)
        tol = (s[0] if s.size else 0.0) * max(E.shape) * np.finfo(float).eps
        r = int(np.sum(s > tol))
        theta_p = Vt[:r].T @ ((U[:, :r].T @ system.f) / s[:r])
        res = float(np.linalg.norm(E @ theta_p - system.f))
        if res > CONSTRAINT_TOL * (1.0 + np.linalg.norm(system.f)):
            raise InfeasibleConstraints(f"no FIR solution at horizon {system.layout.horizon} (residual {res:.3g})")
        return cls(system, theta_p, Vt[r:].T.copy(), r)


@dataclass(frozen=True, eq=False)
class DualSlsEstimate:
    params: FirParams
    realization: StateSpaceModel  # strictly proper part (A_k, B_k, C_k, 0)
    D_k: np.ndarray
    fit_residual: float  # RMS of y - Phi(r) L
    constraint_residual: float  # max |E theta - f|
    rank_deficient: bool = False
    n_free: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "realization": self.realization.to_dict(),
            "D_k": np.asarray(self.D_k).tolist(),
            "fit_residual": self.fit_residual,
            "constraint_residual": self.constraint_residual,
            "rank_deficient": self.rank_deficient,
            "n_free": self.n_free,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "DualSlsEstimate":
        return cls(FirParams.from_dict(d["params"]), StateSpaceModel.from_dict(d["realization"]),
                   np.asarray(d["D_k"], dtype=float), float(d["fit_residual"]),
                   float(d["constraint_residual"]), bool(d.get("rank_deficient", False)),
                   int(d.get("n_free", 0)))

    @classmethod
    def from_json(cls, s: str) -> "DualSlsEstimate":
        return cls.from_dict(json.loads(s))


def strictly_proper_part(K: StateSpaceModel) -> StateSpaceModel:
    return StateSpaceModel(K.A, K.B, K.C, np.zeros_like(K.D))


def estimate_dual_params(dataset, K: StateSpaceModel, T: int,
                         null_space: Optional[NullSpace] = None) -> DualSlsEstimate:
    """Constrained LS fit of the dual FIR parameters to (r, y).

    ``null_space`` may be passed to reuse the factorization of the constraint
    matrix across datasets that share the controller realization and horizon.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if K.n_states == 0:
        raise DimensionMismatch("controller realization needs at least one state")
    if K.n_inputs != 1 or K.n_outputs != 1:
        raise DimensionMismatch("the regression y = L r is implemented for SISO loops")
    r = np.asarray(dataset.r.samples if hasattr(dataset, "r") else dataset[0], dtype=float)
    y = np.asarray(dataset.y.samples if hasattr(dataset, "y") else dataset[1], dtype=float)
    if r.size <= T:
        raise ValueError(f"dataset length {r.size} must exceed the horizon {T}")
    if null_space is None:
        null_space = NullSpace.from_system(build_affine_constraints(K.A, K.B, K.C, T))
    sysm = null_space.system
    if sysm.layout.horizon != T:
        raise DimensionMismatch("null-space horizon differs from T")

    Phi = toeplitz_regressor(r, T)
    sl = sysm.layout.block_slice("L")
    L_p = null_space.theta_p[sl]
    L_Z = null_space.Z[sl]
    A_red = Phi @ L_Z
    b = y - Phi @ L_p
    w, _, rank, sv = np.linalg.lstsq(A_red, b, rcond=None)
    deficient = A_red.shape[1] > 0 and rank < A_red.shape[1]
    if deficient:
        warnings.warn(f"reduced regressor has rank {rank} < {A_red.shape[1]}; using min-norm solution",
                      RankDeficientRegressor, stacklevel=2)
    theta = null_space.theta_p + null_space.Z @ w
    cres = float(np.abs(sysm.residual(theta)).max(initial=0.0))
    if cres > CONSTRAINT_TOL:
        raise InfeasibleConstraints(f"constraint residual {cres:.3g} exceeds {CONSTRAINT_TOL}")
    params = sysm.layout.unpack(theta)
    fit = y - Phi @ params.L[:, 0, 0]
    return DualSlsEstimate(
        params=params,
        realization=strictly_proper_part(K),
        D_k=np.array(K.D, dtype=float),
        fit_residual=float(np.sqrt(np.mean(fit**2))),
        constraint_residual=cres,
        rank_deficient=bool(deficient),
        n_free=int(null_space.Z.shape[1]),
    )


def _check_values(est: DualSlsEstimate, z: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    blocks = est.params.evaluate(z)
    R, M, N, L = blocks["R"], blocks["M"], blocks["N"], blocks["L"]
    conds = np.linalg.cond(R)
    bad = ~np.isfinite(conds) | (conds > RK_COND_LIMIT)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise SingularRk(float(omegas[i]), float(conds[i]))
    return L - M @ np.linalg.solve(R, N)


def _apply_feedthrough(Gc: np.ndarray, D_k: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    if not np.any(D_k):
        return Gc
    p = Gc.shape[1]
    W = np.eye(D_k.shape[0]) + D_k @ Gc  # (k, m, m)
    conds = np.linalg.cond(W)
    bad = ~np.isfinite(conds) | (conds > RK_COND_LIMIT)
    if np.any(bad):
        raise SingularCorrection(float(omegas[int(np.flatnonzero(bad)[0])]))
    del p
    # G = Gc (I + D_k Gc)^-1  computed as  (W^T \ Gc^T)^T
    return np.swapaxes(np.linalg.solve(np.swapaxes(W, 1, 2), np.swapaxes(Gc, 1, 2)), 1, 2)


def recover_plant_freqresp(est: DualSlsEstimate, omegas) -> FrequencyResponse:
    """G(e^jw) = L - M R^-1 N pointwise, then the feedthrough correction when D_k != 0."""
    omegas = np.asarray(omegas, dtype=float)
    z = np.exp(1j * omegas)
    Gc = _check_values(est, z, omegas)
    return FrequencyResponse(omegas, _apply_feedthrough(Gc, np.asarray(est.D_k), omegas))


def _fir_shift_realization(params: FirParams) -> StateSpaceModel:
    """State-space form of the dual implementation with FIR blocks.

    zeta[t+1] = sum_j Rt[j] zeta[t-j] - sum_j Nt[j] ubar[t-j]
    ybar[t]   = sum_j Mt[j] zeta[t-j] + sum_j L[j] ubar[t-j]

    with Rt = z(I - zR) (taps -R[j+2], R's unit leading tap removed),
    Mt = zM and Nt = zN.  The state stacks zeta[t..t-T] and ubar[t-1..t-T].
    This realizes L - M R^-1 N.
    """
    T = params.horizon
    n, m, p = params.dims  # ybar has m entries, ubar has p entries
    nz = (T + 1) * n
    nu = T * p
    A = np.zeros((nz + nu, nz + nu))
    B = np.zeros((nz + nu, p))
    C = np.zeros((m, nz + nu))
    D = params.L[0].copy()

    def zcol(j):  # columns of zeta[t-j]
        return slice(j * n, (j + 1) * n)

    def ucol(j):  # columns of ubar[t-j], j >= 1
        return slice(nz + (j - 1) * p, nz + j * p)

    for j in range(T):  # Rt[j] = -R[j+2], stored at array index j+1
        A[0:n, zcol(j)] = -params.R[j + 1]
    B[0:n, :] = -params.N[0]
    for j in range(1, T + 1):
        A[0:n, ucol(j)] = -params.N[j]
    for j in range(1, T + 1):
        A[zcol(j), zcol(j - 1)] = np.eye(n)
    if T >= 1:
        B[ucol(1), :] = np.eye(p)
    for j in range(2, T + 1):
        A[ucol(j), ucol(j - 1)] = np.eye(p)
    for j in range(T + 1):
        C[:, zcol(j)] = params.M[j]
    for j in range(1, T + 1):
        C[:, ucol(j)] = params.L[j]
    return StateSpaceModel(A, B, C, D)


def feedthrough_correction_ss(gc: StateSpaceModel, D_k: np.ndarray) -> StateSpaceModel:
    """Realize G = Gc (I + D_k Gc)^-1, i.e. Gc in negative feedback with D_k."""
    D_k = np.atleast_2d(np.asarray(D_k, dtype=float))
    if not np.any(D_k):
        return gc
    W = np.eye(gc.n_outputs) + gc.D @ D_k
    if abs(np.linalg.det(W)) < 1e-12:
        raise IllPosedRealization("I + D D_k is singular")
    Wi = np.linalg.inv(W)
    A = gc.A - gc.B @ D_k @ Wi @ gc.C
    B = gc.B @ (np.eye(gc.n_inputs) - D_k @ Wi @ gc.D)
    C = Wi @ gc.C
    D = Wi @ gc.D
    return StateSpaceModel(A, B, C, D)


def realize_plant_ss(est: DualSlsEstimate) -> StateSpaceModel:
    if est.constraint_residual > 1e-6:
        raise IllPosedRealization(f"constraint residual {est.constraint_residual:.3g} too large to realize")
    gc = _fir_shift_realization(est.params)
    return feedthrough_correction_ss(gc, est.D_k)


def transform_realization(K: StateSpaceModel, Tbar) -> StateSpaceModel:
    """(T^-1 A T, T^-1 B, C T, D): the same controller in new state coordinates."""
    Tbar = np.atleast_2d(np.asarray(Tbar, dtype=float))
    if Tbar.shape != (K.n_states, K.n_states):
        raise DimensionMismatch(f"transform must be {K.n_states}x{K.n_states}")
    cond = np.linalg.cond(Tbar)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularTransform(f"transform is singular (cond={cond:.3g})")
    log.debug("similarity transform condition number %.3g", cond)
    Ti = np.linalg.inv(Tbar)
    return StateSpaceModel(Ti @ K.A @ Tbar, Ti @ K.B, K.C @ Tbar, K.D)


def expected_param_transform(params: FirParams, Tbar) -> FirParams:
    """(T R T^-1, M T^-1, T N, L).

    If ``params`` lie in the subspace of the transformed realization
    (T^-1 A T, T^-1 B, C T), the result lies in the subspace of the original
    (A, B, C), and vice versa with ``Tbar`` replaced by its inverse.
    """
    Tbar = np.atleast_2d(np.asarray(Tbar, dtype=float))
    cond = np.linalg.cond(Tbar)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularTransform(f"transform is singular (cond={cond:.3g})")
    Ti = np.linalg.inv(Tbar)
    return FirParams(params.horizon, R=Tbar @ params.R @ Ti, M=params.M @ Ti,
                     N=Tbar @ params.N, L=params.L.copy())

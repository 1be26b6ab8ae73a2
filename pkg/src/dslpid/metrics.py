"""Frequency-domain error sums and closed-loop stability certification.

Both error measures are sums over the grid (not means) of a per-point
relative error in percent.  Summation goes through ``math.fsum`` so the result
does not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    IllPosedInterconnection,
    SingularClosedLoop,
    TooFewPoints,
    ZeroReferenceValue,
)
from .lti import STABILITY_TOL, FrequencyResponse, RationalTF, StateSpaceModel, tf_eval

ZERO_REF_TOL = 1e-12
SINGULAR_COND = 1e12


def freq_grid(n: int) -> np.ndarray:
    """n equally spaced frequencies on [0, pi], both ends included."""
    if n < 2:
        raise TooFewPoints(f"grid needs at least 2 points, got {n}")
    return np.linspace(0.0, np.pi, int(n))


def frequency_values(obj, grid) -> np.ndarray:
    """Values of ``obj`` at e^{j w} for w in ``grid`` as a (k, p, m) complex array.

    Accepts a RationalTF, a StateSpaceModel, a FrequencyResponse sampled on
    ``grid``, anything with ``freqresp(omegas)``, a callable of z, or a
    precomputed array.
    """
    grid = np.asarray(grid, dtype=float)
    z = np.exp(1j * grid)
    if isinstance(obj, RationalTF):
        v = np.asarray(tf_eval(obj, z), dtype=complex)
    elif isinstance(obj, StateSpaceModel):
        v = obj.evaluate(z)
    elif isinstance(obj, FrequencyResponse):
        if obj.omegas.shape != grid.shape or not np.allclose(obj.omegas, grid, rtol=0, atol=1e-12):
            raise DimensionMismatch("frequency response is sampled on a different grid")
        v = obj.values
    elif hasattr(obj, "freqresp"):
        v = obj.freqresp(grid).values
    elif callable(obj):
        v = np.asarray(obj(z), dtype=complex)
    else:
        v = np.asarray(obj, dtype=complex)
    if v.ndim == 1:
        v = v.reshape(-1, 1, 1)
    if v.shape[0] != grid.size:
        raise DimensionMismatch(f"{v.shape[0]} values for a grid of {grid.size} points")
    return v


def _norms(v: np.ndarray) -> np.ndarray:
    if v.shape[1:] == (1, 1):
        return np.abs(v[:, 0, 0])
    return np.linalg.norm(v, ord=2, axis=(1, 2))


def _percent_sum(ref: np.ndarray, est: np.ndarray, grid) -> float:
    den = _norms(ref)
    small = den < ZERO_REF_TOL
    if np.any(small):
        w = float(np.asarray(grid)[np.flatnonzero(small)[0]])
        raise ZeroReferenceValue(f"reference response vanishes at omega={w:.6g}")
    return math.fsum(100.0 * _norms(ref - est) / den)


def err1(G, Ghat, grid) -> float:
    return _percent_sum(frequency_values(G, grid), frequency_values(Ghat, grid), grid)


def closed_loop_response(G, K, grid) -> np.ndarray:
    """(I - G K)^-1 G pointwise."""
    g = frequency_values(G, grid)
    k = frequency_values(K, grid)
    I = np.eye(g.shape[1])
    W = I - g @ k
    cond = np.linalg.cond(W)
    bad = ~np.isfinite(cond) | (cond > SINGULAR_COND)
    if np.any(bad):
        raise SingularClosedLoop(float(np.asarray(grid)[np.flatnonzero(bad)[0]]))
    return np.linalg.solve(W, g)


def err2(G, Ghat, K, grid) -> float:
    return _percent_sum(closed_loop_response(G, K, grid), closed_loop_response(Ghat, K, grid), grid)


class LoopStability(NamedTuple):
    stable: bool
    spectral_radius: float


def interconnection_matrix(G: StateSpaceModel, K: StateSpaceModel) -> np.ndarray:
    """State matrix of ubar = K y, y = G ubar (positive feedback)."""
    if G.n_outputs != K.n_inputs or K.n_outputs != G.n_inputs:
        raise DimensionMismatch("plant and controller dimensions do not interconnect")
    W = np.eye(G.n_outputs) - G.D @ K.D
    if abs(np.linalg.det(W)) < 1e-12:
        raise IllPosedInterconnection("I - D_G D_K is singular")
    Q = np.linalg.inv(W)
    # y = Q (Cg xg + Dg Ck xk),  ubar = Ck xk + Dk y
    y_g, y_k = Q @ G.C, Q @ G.D @ K.C
    u_g, u_k = K.D @ y_g, K.C + K.D @ y_k
    return np.block([[G.A + G.B @ u_g, G.B @ u_k], [K.B @ y_g, K.A + K.B @ y_k]])


def closed_loop_stable(Ghat: StateSpaceModel, K: StateSpaceModel) -> LoopStability:
    A = interconnection_matrix(Ghat, K)
    rho = float(np.abs(np.linalg.eigvals(A)).max()) if A.size else 0.0
    return LoopStability(rho < 1.0 - STABILITY_TOL, rho)


@dataclass(frozen=True)
class MetricReport:
    err1: float
    err2: float
    cl_stable: bool
    grid_size: int
    spectral_radius: float = float("nan")

    def __post_init__(self):
        for v in (self.err1, self.err2):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"error sums must be finite and non-negative, got {v}")

    @property
    def err1_mean(self) -> float:
        return self.err1 / self.grid_size

    @property
    def err2_mean(self) -> float:
        return self.err2 / self.grid_size


def metric_report(G, Ghat, K, grid, Ghat_ss: StateSpaceModel, K_ss: StateSpaceModel) -> MetricReport:
    """Both error sums on ``grid`` plus the closed-loop certificate of the realized estimate."""
    ghat = frequency_values(Ghat, grid)
    cert = closed_loop_stable(Ghat_ss, K_ss)
    return MetricReport(err1(G, ghat, grid), err2(G, ghat, K, grid), cert.stable, len(grid), cert.spectral_radius)

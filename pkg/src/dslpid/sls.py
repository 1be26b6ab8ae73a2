"""FIR system-level parameters and the affine subspace they must lie in.

For a realization (A, B, C) with n states, B of shape (n, m) and C of shape
(p, n), the four responses have shapes

    R: n x n,   M: m x n,   N: n x p,   L: m x p

and must satisfy

    [zI - A, -B] [R N; M L] = [I 0],     [R N; M L] [zI - A; -C] = [I; 0].

Tap convention: R, M, N are stored at delays 1..T+1 and L at delays 0..T.
Array index i of ``R`` therefore holds the coefficient of z^-(i+1); array
index i of ``L`` holds the coefficient of z^-i.  Matching coefficients of
z^0, z^-1, ..., z^-(T+1) in the two identities gives the linear system
E theta = f assembled by :func:`build_affine_constraints`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, UnstableLoop
from .lti import RationalTF, StateSpaceModel, tf_to_ss

BLOCKS = ("R", "M", "N", "L")
FAMILIES = ("left_RM", "left_NL", "right_RN", "right_ML")


@dataclass(frozen=True, eq=False)
class FirParams:
    horizon: int
    R: np.ndarray  # (T+1, n, n), delays 1..T+1
    M: np.ndarray  # (T+1, m, n), delays 1..T+1
    N: np.ndarray  # (T+1, n, p), delays 1..T+1
    L: np.ndarray  # (T+1, m, p), delays 0..T

    def __post_init__(self):
        T = int(self.horizon)
        arrs = {}
        for k in BLOCKS:
            a = np.array(getattr(self, k), dtype=float)
            if a.ndim != 3 or a.shape[0] != T + 1:
                raise DimensionMismatch(f"{k} must have shape (T+1, rows, cols) with T={T}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{k} taps must be finite")
            a.setflags(write=False)
            arrs[k] = a
        n, m, p = arrs["R"].shape[1], arrs["M"].shape[1], arrs["N"].shape[2]
        if arrs["R"].shape[1:] != (n, n) or arrs["M"].shape[1:] != (m, n) \
                or arrs["N"].shape[1:] != (n, p) or arrs["L"].shape[1:] != (m, p):
            raise DimensionMismatch("inconsistent tap shapes among R, M, N, L")
        for k, a in arrs.items():
            object.__setattr__(self, k, a)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.R.shape[1], self.M.shape[1], self.N.shape[2]

    def evaluate(self, z) -> Dict[str, np.ndarray]:
        """Each block's transfer matrix at the points ``z``; arrays of shape (len(z), rows, cols)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        T = self.horizon
        zinv = 1.0 / z
        powers_rmn = zinv[:, None] ** np.arange(1, T + 2)[None, :]
        powers_l = zinv[:, None] ** np.arange(0, T + 1)[None, :]
        out = {}
        for k in ("R", "M", "N"):
            out[k] = np.einsum("kd,dij->kij", powers_rmn, getattr(self, k))
        out["L"] = np.einsum("kd,dij->kij", powers_l, self.L)
        return out

    def to_dict(self) -> dict:
        n, m, p = self.dims
        return {"horizon": self.horizon, "dims": {"n": n, "m": m, "p": p},
                **{k: [tap.ravel().tolist() for tap in getattr(self, k)] for k in BLOCKS}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "FirParams":
        n, m, p = d["dims"]["n"], d["dims"]["m"], d["dims"]["p"]
        shapes = {"R": (n, n), "M": (m, n), "N": (n, p), "L": (m, p)}
        T = int(d["horizon"])
        return cls(T, **{k: np.asarray(d[k], dtype=float).reshape((T + 1,) + shapes[k]) for k in BLOCKS})

    @classmethod
    def from_json(cls, s: str) -> "FirParams":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class ParamLayout:
    """Coordinates of every tap entry inside the stacked unknown vector theta.

    Blocks are stacked in the order R, M, N, L; within a block taps follow
    delay order and each tap matrix is flattened row-major.
    """

    n: int
    m: int
    p: int
    horizon: int

    def shape(self, block: str) -> Tuple[int, int]:
        return {"R": (self.n, self.n), "M": (self.m, self.n),
                "N": (self.n, self.p), "L": (self.m, self.p)}[block]

    def first_delay(self, block: str) -> int:
        return 0 if block == "L" else 1

    def block_size(self, block: str) -> int:
        r, c = self.shape(block)
        return (self.horizon + 1) * r * c

    def offset(self, block: str) -> int:
        off = 0
        for b in BLOCKS:
            if b == block:
                return off
            off += self.block_size(b)
        raise KeyError(block)

    @property
    def size(self) -> int:
        return sum(self.block_size(b) for b in BLOCKS)

    def block_slice(self, block: str) -> slice:
        o = self.offset(block)
        return slice(o, o + self.block_size(block))

    def has_tap(self, block: str, delay: int) -> bool:
        d0 = self.first_delay(block)
        return d0 <= delay <= d0 + self.horizon

    def tap_start(self, block: str, delay: int) -> int:
        r, c = self.shape(block)
        return self.offset(block) + (delay - self.first_delay(block)) * r * c

    def index(self, block: str, delay: int, row: int, col: int) -> int:
        if not self.has_tap(block, delay):
            raise IndexError(f"{block} has no tap at delay {delay}")
        r, c = self.shape(block)
        if not (0 <= row < r and 0 <= col < c):
            raise IndexError(f"entry ({row}, {col}) outside {block} tap of shape {(r, c)}")
        return self.tap_start(block, delay) + row * c + col

    def pack(self, params: FirParams) -> np.ndarray:
        if params.dims != (self.n, self.m, self.p) or params.horizon != self.horizon:
            raise DimensionMismatch("parameter dimensions do not match the layout")
        return np.concatenate([getattr(params, b).ravel() for b in BLOCKS])

    def unpack(self, theta: np.ndarray) -> FirParams:
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.size:
            raise DimensionMismatch(f"theta has {theta.size} entries, layout needs {self.size}")
        return FirParams(self.horizon, **{
            b: theta[self.block_slice(b)].reshape((self.horizon + 1,) + self.shape(b)) for b in BLOCKS})


@dataclass(frozen=True, eq=False)
class AffineSystem:
    E: sp.csr_matrix
    f: np.ndarray
    layout: ParamLayout
    families: Dict[str, slice]

    def residual(self, theta: np.ndarray) -> np.ndarray:
        return self.E @ theta - self.f

    def dense(self) -> np.ndarray:
        return self.E.toarray()


def _check_realization(A, B, C):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or n == 0:
        raise DimensionMismatch(f"A must be a nonempty square matrix, got {A.shape}")
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    if B.ndim == 1:
        B = B.reshape(n, -1)
    if C.ndim == 1:
        C = C.reshape(-1, n)
    if B.shape[0] != n:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
    if C.shape[1] != n:
        raise DimensionMismatch(f"C has {C.shape[1]} columns, expected {n}")
    return A, B, C


class _Assembler:
    def __init__(self, layout: ParamLayout):
        self.layout = layout
        self.rows, self.cols, self.vals = [], [], []
        self.f = []
        self.n_rows = 0

    def add(self, row0: int, coef: np.ndarray, block: str, delay: int):
        """Add ``coef @ vec(tap)`` to the equations starting at ``row0``."""
        if not self.layout.has_tap(block, delay):
            return
        col0 = self.layout.tap_start(block, delay)
        r, c = np.nonzero(coef)
        self.rows.append(row0 + r)
        self.cols.append(col0 + c)
        self.vals.append(coef[r, c])

    def new_rows(self, rhs: np.ndarray) -> int:
        row0 = self.n_rows
        self.f.append(rhs.ravel())
        self.n_rows += rhs.size
        return row0

    def build(self) -> Tuple[sp.csr_matrix, np.ndarray]:
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, int)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, int)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        E = sp.coo_matrix((vals, (rows, cols)), shape=(self.n_rows, self.layout.size)).tocsr()
        return E, np.concatenate(self.f)


def build_affine_constraints(A, B, C, T: int) -> AffineSystem:
    """Coefficient-matching equations of the two subspace identities at horizon ``T``.

    With row-major vectorization, vec(X Y) = (X kron I) vec(Y) = (I kron Y^T) vec(X).
    Each family yields one block of equations per power z^-j, j = 0..T+1; taps
    outside their stored delay range are zero.
    """
    A, B, C = _check_realization(A, B, C)
    if T < 1:
        raise ValueError("horizon must be >= 1")
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    lay = ParamLayout(n, m, p, T)
    asm = _Assembler(lay)
    In, Im, Ip = np.eye(n), np.eye(m), np.eye(p)
    families = {}

    # [zI - A, -B][R; M] = I  ->  R[j+1] - A R[j] - B M[j] = delta_j I
    start = asm.n_rows
    for j in range(T + 2):
        row0 = asm.new_rows(In if j == 0 else np.zeros((n, n)))
        asm.add(row0, np.kron(In, In), "R", j + 1)
        asm.add(row0, -np.kron(A, In), "R", j)
        asm.add(row0, -np.kron(B, In), "M", j)
    families["left_RM"] = slice(start, asm.n_rows)

    # [zI - A, -B][N; L] = 0  ->  N[j+1] - A N[j] - B L[j] = 0
    start = asm.n_rows
    for j in range(T + 2):
        row0 = asm.new_rows(np.zeros((n, p)))
        asm.add(row0, np.kron(In, Ip), "N", j + 1)
        asm.add(row0, -np.kron(A, Ip), "N", j)
        asm.add(row0, -np.kron(B, Ip), "L", j)
    families["left_NL"] = slice(start, asm.n_rows)

    # [R, N][zI - A; -C] = I  ->  R[j+1] - R[j] A - N[j] C = delta_j I
    start = asm.n_rows
    for j in range(T + 2):
        row0 = asm.new_rows(In if j == 0 else np.zeros((n, n)))
        asm.add(row0, np.kron(In, In), "R", j + 1)
        asm.add(row0, -np.kron(In, A.T), "R", j)
        asm.add(row0, -np.kron(In, C.T), "N", j)
    families["right_RN"] = slice(start, asm.n_rows)

    # [M, L][zI - A; -C] = 0  ->  M[j+1] - M[j] A - L[j] C = 0
    start = asm.n_rows
    for j in range(T + 2):
        row0 = asm.new_rows(np.zeros((m, n)))
        asm.add(row0, np.kron(Im, In), "M", j + 1)
        asm.add(row0, -np.kron(Im, A.T), "M", j)
        asm.add(row0, -np.kron(Im, C.T), "L", j)
    families["right_ML"] = slice(start, asm.n_rows)

    E, f = asm.build()
    return AffineSystem(E, f, lay, families)


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    residual: float
    null_dim: int
    rank: int
    n_unknowns: int
    n_equations: int


def _rank_tol(s: np.ndarray, shape) -> float:
    return (s[0] if s.size else 0.0) * max(shape) * np.finfo(float).eps


def check_feasibility(A, B, C, T: int) -> FeasibilityReport:
    """Least-squares feasibility of the FIR subspace at horizon ``T``."""
    sysm = build_affine_constraints(A, B, C, T)
    E = sysm.dense()
    theta, *_ = np.linalg.lstsq(E, sysm.f, rcond=None)
    res = float(np.linalg.norm(E @ theta - sysm.f))
    s = np.linalg.svd(E, compute_uv=False)
    rank = int(np.sum(s > _rank_tol(s, E.shape)))
    ok = res <= 1e-8 * (1.0 + np.linalg.norm(sysm.f))
    return FeasibilityReport(ok, res, E.shape[1] - rank, rank, E.shape[1], E.shape[0])


@dataclass(frozen=True)
class ResidualReport:
    max_abs: float
    by_family: Dict[str, float]

    def ok(self, tol: float) -> bool:
        return self.max_abs <= tol


def verify_params(params: FirParams, A, B, C, tol: float = 1e-8, system: AffineSystem = None) -> ResidualReport:
    """Max |E theta - f| overall and per constraint family.  ``tol`` is informational."""
    A, B, C = _check_realization(A, B, C)
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    if params.dims != (n, m, p):
        raise DimensionMismatch(f"params have dims {params.dims}, realization needs {(n, m, p)}")
    if system is None:
        system = build_affine_constraints(A, B, C, params.horizon)
    res = np.abs(system.residual(system.layout.pack(params)))
    fam = {k: float(res[s].max(initial=0.0)) for k, s in system.families.items()}
    return ResidualReport(float(res.max(initial=0.0)), fam)


def markov_parameters(ss: StateSpaceModel, count: int) -> np.ndarray:
    """Impulse-response taps h[0..count-1] of a state-space model, by simulating a unit impulse."""
    out = np.zeros((count, ss.n_outputs, ss.n_inputs))
    if count == 0:
        return out
    out[0] = ss.D
    x = ss.B.copy()
    for d in range(1, count):
        out[d] = ss.C @ x
        x = ss.A @ x
    return out


def dual_closed_loop(G: RationalTF, A_k, B_k, C_k) -> StateSpaceModel:
    """State-space map (delta_xi, delta_ubar) -> (xi, ybar) of the dual loop.

    xi+ = A_k xi + B_k ybar + delta_xi,  ubar = C_k xi + delta_ubar,  ybar = G ubar.
    """
    A_k, B_k, C_k = _check_realization(A_k, B_k, C_k)
    g = tf_to_ss(G)
    if B_k.shape[1] != g.n_outputs or C_k.shape[0] != g.n_inputs:
        raise DimensionMismatch("controller realization does not match the plant I/O")
    n, ng = A_k.shape[0], g.n_states
    Ag, Bg, Cg, Dg = g.A, g.B, g.C, g.D
    A = np.block([[A_k + B_k @ Dg @ C_k, B_k @ Cg], [Bg @ C_k, Ag]])
    m = C_k.shape[0]
    B = np.block([[np.eye(n), B_k @ Dg], [np.zeros((ng, n)), Bg]])
    C = np.block([[np.eye(n), np.zeros((n, ng))], [Dg @ C_k, Cg]])
    D = np.block([[np.zeros((n, n)), np.zeros((n, m))], [np.zeros((g.n_outputs, n)), Dg]])
    return StateSpaceModel(A, B, C, D)


def true_dual_params(G: RationalTF, A_k, B_k, C_k, T: int) -> FirParams:
    """Exact dual responses of (G, K) truncated to the FIR tap ranges (test oracle).

    The truncated taps generally violate the terminal FIR constraints.
    """
    A_k, B_k, C_k = _check_realization(A_k, B_k, C_k)
    cl = dual_closed_loop(G, A_k, B_k, C_k)
    eig = np.linalg.eigvals(cl.A)
    if np.abs(eig).max() >= 1.0 - 1e-9:
        raise UnstableLoop("dual closed loop is unstable", eig)
    n = A_k.shape[0]
    h = markov_parameters(cl, T + 2)
    return FirParams(T, R=h[1:T + 2, :n, :n], M=h[1:T + 2, n:, :n],
                     N=h[1:T + 2, :n, n:], L=h[0:T + 1, n:, n:])

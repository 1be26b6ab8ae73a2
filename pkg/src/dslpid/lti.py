"""Discrete-time LTI primitives.

Coefficient convention: every polynomial stores its coefficients in
*ascending* powers of z, i.e. ``coeffs[k]`` multiplies ``z**k``.  A
polynomial written the usual way, ``z^2 - 1.6 z + 0.89``, is therefore
stored as ``[0.89, -1.6, 1.0]``.  Use :meth:`Polynomial.from_descending`
when copying coefficients from a textbook expression.

Rational arithmetic never cancels common factors on its own.  Silent
cancellation can hide an unstable pole-zero pair, so cancellation only
happens through :func:`reduce`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .errors import (
    AlgebraicLoop,
    ConstantPolynomial,
    DimensionMismatch,
    ImproperTransferFunction,
    PoleOnEvaluationPoint,
    ZeroPolynomial,
)

STABILITY_TOL = 1e-9
EVAL_TOL = 1e-12
REDUCE_TOL = 1e-8


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _trim(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float).ravel()
    if c.size and not np.all(np.isfinite(c)):
        raise ValueError("polynomial coefficients must be finite")
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(0)
    return c[: nz[-1] + 1].copy()


class Polynomial:
    """Real polynomial in z with ascending coefficients; trailing zeros trimmed."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Sequence[float] = ()):
        object.__setattr__(self, "coeffs", _readonly(_trim(coeffs)))

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    def __reduce__(self):
        return (Polynomial, (self.coeffs.tolist(),))

    @classmethod
    def from_descending(cls, coeffs: Sequence[float]) -> "Polynomial":
        return cls(np.asarray(coeffs, dtype=float)[::-1])

    @classmethod
    def monomial(cls, degree: int, scale: float = 1.0) -> "Polynomial":
        c = np.zeros(degree + 1)
        c[degree] = scale
        return cls(c)

    @property
    def is_zero(self) -> bool:
        return self.coeffs.size == 0

    @property
    def degree(self) -> int:
        """Degree; -1 for the zero polynomial."""
        return self.coeffs.size - 1

    @property
    def lead(self) -> float:
        return float(self.coeffs[-1]) if self.coeffs.size else 0.0

    def padded(self, length: int) -> np.ndarray:
        out = np.zeros(length)
        out[: self.coeffs.size] = self.coeffs
        return out

    def __call__(self, z):
        return poly_eval(self, z)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        n = max(self.coeffs.size, other.coeffs.size)
        return Polynomial(self.padded(n) + other.padded(n))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        n = max(self.coeffs.size, other.coeffs.size)
        return Polynomial(self.padded(n) - other.padded(n))

    def __neg__(self) -> "Polynomial":
        return Polynomial(-self.coeffs)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return poly_mul(self, other)
        return Polynomial(self.coeffs * float(other))

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def __repr__(self) -> str:
        return f"Polynomial({self.coeffs.tolist()})"


def poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    if p.is_zero or q.is_zero:
        return Polynomial()
    return Polynomial(np.convolve(p.coeffs, q.coeffs))


def poly_eval(p: Polynomial, z):
    """Horner evaluation; ``z`` may be a scalar or an array."""
    z = np.asarray(z)
    acc = np.zeros_like(z, dtype=complex if np.iscomplexobj(z) else float)
    for c in p.coeffs[::-1]:
        acc = acc * z + c
    return acc if acc.ndim else acc.item()


def poly_from_roots(roots: Sequence[complex], scale: float = 1.0) -> Polynomial:
    """Monic polynomial (times ``scale``) with the given roots; imaginary residue dropped."""
    c = np.array([1.0 + 0j])
    for r in roots:
        c = np.convolve(c, [-r, 1.0])
    return Polynomial(np.real(c) * scale)


def companion_matrix(p: Polynomial) -> np.ndarray:
    if p.is_zero:
        raise ZeroPolynomial("zero polynomial has no companion matrix")
    n = p.degree
    if n == 0:
        raise ConstantPolynomial("constant polynomial has no roots")
    a = p.coeffs[:-1] / p.lead
    comp = np.zeros((n, n))
    comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -a
    return comp


def _sorted(vals) -> np.ndarray:
    vals = np.asarray(vals, dtype=complex)
    order = np.lexsort((vals.imag, vals.real))
    return vals[order]


def poly_roots(p: Polynomial) -> np.ndarray:
    """All roots of ``p`` as eigenvalues of its companion matrix, sorted by (real, imag).

    LAPACK balances the matrix before the QR iteration.
    """
    return _sorted(np.linalg.eigvals(companion_matrix(p)))


@dataclass(frozen=True, eq=False)
class RationalTF:
    """SISO discrete-time transfer function num(z)/den(z)."""

    num: Polynomial
    den: Polynomial

    def __post_init__(self):
        if not isinstance(self.num, Polynomial):
            object.__setattr__(self, "num", Polynomial(self.num))
        if not isinstance(self.den, Polynomial):
            object.__setattr__(self, "den", Polynomial(self.den))
        if self.den.is_zero:
            raise ZeroPolynomial("transfer function denominator is zero")

    @classmethod
    def from_coeffs(cls, num: Sequence[float], den: Sequence[float]) -> "RationalTF":
        """Build from ascending coefficient arrays."""
        return cls(Polynomial(num), Polynomial(den))

    @classmethod
    def from_descending(cls, num: Sequence[float], den: Sequence[float]) -> "RationalTF":
        return cls(Polynomial.from_descending(num), Polynomial.from_descending(den))

    @classmethod
    def constant(cls, c: float) -> "RationalTF":
        return cls(Polynomial([c]), Polynomial([1.0]))

    @classmethod
    def fir(cls, taps: Sequence[float]) -> "RationalTF":
        """sum_i taps[i] z^-i written over the common denominator z^(len-1)."""
        taps = np.asarray(taps, dtype=float)
        d = max(taps.size - 1, 0)
        return cls(Polynomial(taps[::-1]), Polynomial.monomial(d))

    @property
    def is_proper(self) -> bool:
        return self.num.degree <= self.den.degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num.degree < self.den.degree

    def __call__(self, z):
        return tf_eval(self, z)

    def to_dict(self) -> dict:
        return {"num": self.num.coeffs.tolist(), "den": self.den.coeffs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RationalTF":
        return cls.from_coeffs(d["num"], d["den"])

    def __repr__(self) -> str:
        return f"RationalTF(num={self.num.coeffs.tolist()}, den={self.den.coeffs.tolist()})"


def tf_eval(tf: RationalTF, z):
    """num(z)/den(z); raises if |den(z)| is tiny relative to the coefficient norm."""
    d = np.asarray(poly_eval(tf.den, z))
    scale = np.linalg.norm(tf.den.coeffs)
    bad = np.abs(d) < EVAL_TOL * scale
    if np.any(bad):
        zs = np.asarray(z)[bad] if np.ndim(z) else z
        raise PoleOnEvaluationPoint(f"denominator vanishes at z={np.ravel(zs)[0]!r}")
    out = np.asarray(poly_eval(tf.num, z)) / d
    return out if out.ndim else complex(out) if np.iscomplexobj(out) else float(out)


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    poles: np.ndarray
    moduli: np.ndarray

    @property
    def spectral_radius(self) -> float:
        return float(self.moduli.max()) if self.moduli.size else 0.0


def roots_stability(poly: Polynomial, tol: float = STABILITY_TOL) -> StabilityReport:
    poles = poly_roots(poly) if poly.degree >= 1 else np.zeros(0, dtype=complex)
    mods = np.abs(poles)
    return StabilityReport(bool(np.all(mods < 1.0 - tol)), poles, mods)


def tf_is_stable(tf: RationalTF, tol: float = STABILITY_TOL) -> StabilityReport:
    """Stability from the stored denominator; common factors are *not* cancelled."""
    return roots_stability(tf.den, tol)


def tf_to_ss(tf: RationalTF) -> "StateSpaceModel":
    """Controllable canonical realization.

    For den = z^n + a_{n-1} z^{n-1} + ... + a_0 the state matrix has ones on the
    superdiagonal and ``-a`` on its last row, B = e_n, and C holds the ascending
    coefficients of num - D*den.
    """
    if not tf.is_proper:
        raise ImproperTransferFunction(f"deg num {tf.num.degree} > deg den {tf.den.degree}")
    n = tf.den.degree
    lead = tf.den.lead
    den = tf.den.coeffs / lead
    num = tf.num.padded(n + 1) / lead
    d = num[n]
    if n == 0:
        return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), np.array([[d]]))
    rem = num[:n] - d * den[:n]
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -den[:n]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = rem.reshape(1, n)
    return StateSpaceModel(A, B, C, np.array([[d]]))


def tf_simulate(tf: RationalTF, u) -> np.ndarray:
    """Zero-initial-condition response of a proper tf (direct-form filtering)."""
    if not tf.is_proper:
        raise ImproperTransferFunction(f"deg num {tf.num.degree} > deg den {tf.den.degree}")
    u = np.asarray(u, dtype=float)
    if tf.num.is_zero:
        return np.zeros_like(u)
    n = tf.den.degree
    # in powers of z^-1 after multiplying through by z^-n
    b = tf.num.padded(n + 1)[::-1]
    a = tf.den.coeffs[::-1]
    return sps.lfilter(b, a, u)


def tf_impulse(tf: RationalTF, length: int) -> np.ndarray:
    x = np.zeros(length)
    if length:
        x[0] = 1.0
    return tf_simulate(tf, x)


def _combine_feedback(a: RationalTF, b: RationalTF) -> RationalTF:
    num = poly_mul(a.num, b.den)
    den_terms = poly_mul(a.den, b.den)
    loop = poly_mul(a.num, b.num)
    n = max(den_terms.coeffs.size, loop.coeffs.size)
    raw = den_terms.padded(n) - loop.padded(n)
    expected = den_terms.degree
    scale = max(np.abs(den_terms.coeffs).max(initial=0.0), np.abs(loop.coeffs).max(initial=0.0), 1e-300)
    if np.all(np.abs(raw) <= EVAL_TOL * scale):
        raise AlgebraicLoop("1 - a b is identically zero")
    if a.is_proper and b.is_proper and abs(raw[expected]) <= EVAL_TOL * scale:
        raise AlgebraicLoop("feedback loop is not well posed: 1 - a(inf) b(inf) = 0")
    return RationalTF(num, Polynomial(raw))


def tf_combine(op: str, a: RationalTF, b: RationalTF) -> RationalTF:
    """Raw polynomial interconnection of two transfer functions.

    ``series``   a*b
    ``parallel`` a+b over the product denominator
    ``feedback`` a/(1 - a*b), i.e. *positive* feedback; pass ``-b`` for the
                 negative-feedback convention.
    """
    if op == "series":
        return RationalTF(poly_mul(a.num, b.num), poly_mul(a.den, b.den))
    if op == "parallel":
        return RationalTF(poly_mul(a.num, b.den) + poly_mul(b.num, a.den), poly_mul(a.den, b.den))
    if op == "feedback":
        return _combine_feedback(a, b)
    raise ValueError(f"unknown interconnection {op!r}")


def tf_neg(tf: RationalTF) -> RationalTF:
    return RationalTF(-tf.num, tf.den)


def tf_inv(tf: RationalTF) -> RationalTF:
    if tf.num.is_zero:
        raise ZeroPolynomial("cannot invert the zero transfer function")
    return RationalTF(tf.den, tf.num)


def tf_div(a: RationalTF, b: RationalTF) -> RationalTF:
    return tf_combine("series", a, tf_inv(b))


def cancel_z_powers(tf: RationalTF) -> RationalTF:
    """Cancel common factors z^k (exact zero low-order coefficients) from num and den.

    Poles at the origin are always stable, so this never hides an instability.
    """
    if tf.num.is_zero:
        return RationalTF(Polynomial(), Polynomial([1.0]))
    kn = int(np.flatnonzero(tf.num.coeffs)[0])
    kd = int(np.flatnonzero(tf.den.coeffs)[0])
    k = min(kn, kd)
    if k == 0:
        return tf
    return RationalTF(Polynomial(tf.num.coeffs[k:]), Polynomial(tf.den.coeffs[k:]))


def reduce(tf: RationalTF, tol: float = REDUCE_TOL) -> RationalTF:
    """Explicit pole-zero cancellation: drop root pairs closer than ``tol``."""
    if tf.num.is_zero:
        return RationalTF(Polynomial(), Polynomial([1.0]))
    zeros = list(poly_roots(tf.num)) if tf.num.degree >= 1 else []
    poles = list(poly_roots(tf.den)) if tf.den.degree >= 1 else []
    kept_zeros = []
    for zr in zeros:
        if poles:
            dist = np.abs(np.asarray(poles) - zr)
            j = int(np.argmin(dist))
            if dist[j] <= tol * max(1.0, abs(zr)):
                poles.pop(j)
                continue
        kept_zeros.append(zr)
    gain = tf.num.lead / tf.den.lead
    return RationalTF(poly_from_roots(kept_zeros, gain), poly_from_roots(poles))


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """x[t+1] = A x[t] + B u[t],  y[t] = C x[t] + D u[t]."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0] if A.size else 0
        if A.size == 0:
            A = np.zeros((0, 0))
        B = np.asarray(self.B, dtype=float).reshape(n, -1) if n else np.zeros((0, D.shape[1]))
        C = np.asarray(self.C, dtype=float).reshape(-1, n) if n else np.zeros((D.shape[0], 0))
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != n or C.shape[1] != n:
            raise DimensionMismatch("B rows and C columns must match the state dimension")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch(f"D must be {C.shape[0]}x{B.shape[1]}, got {D.shape}")
        for name, val in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, _readonly(val.copy()))

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    @property
    def is_strictly_proper(self) -> bool:
        return not np.any(self.D)

    def evaluate(self, z) -> np.ndarray:
        """C (zI - A)^-1 B + D at each z; returns shape (..., p, m)."""
        z = np.asarray(z, dtype=complex)
        flat = z.ravel()
        n = self.n_states
        out = np.empty((flat.size, self.n_outputs, self.n_inputs), dtype=complex)
        out[:] = self.D
        if n:
            eye = np.eye(n)
            mats = flat[:, None, None] * eye - self.A
            out += self.C @ np.linalg.solve(mats, np.broadcast_to(self.B, (flat.size, n, self.n_inputs)))
        return out.reshape(z.shape + out.shape[1:])

    def freqresp(self, omegas) -> "FrequencyResponse":
        omegas = np.asarray(omegas, dtype=float)
        return FrequencyResponse(omegas, self.evaluate(np.exp(1j * omegas)))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "ABCD"}

    @classmethod
    def from_dict(cls, d: dict) -> "StateSpaceModel":
        n = len(d["A"])
        D = np.asarray(d["D"], dtype=float)
        return cls(np.asarray(d["A"], dtype=float).reshape(n, n),
                   np.asarray(d["B"], dtype=float).reshape(n, D.shape[1]),
                   np.asarray(d["C"], dtype=float).reshape(D.shape[0], n), D)


def ss_eigenvalues(ss: StateSpaceModel) -> np.ndarray:
    if ss.n_states == 0:
        return np.zeros(0, dtype=complex)
    return _sorted(np.linalg.eigvals(ss.A))


def ss_simulate(ss: StateSpaceModel, u) -> np.ndarray:
    """Zero-initial-state simulation by direct state iteration.

    ``u`` is (N,) for single-input systems or (N, m); output is (N,) for
    single-output systems, else (N, p).
    """
    u = np.asarray(u, dtype=float)
    squeeze_out = ss.n_outputs == 1
    U = u.reshape(len(u), -1)
    if U.shape[1] != ss.n_inputs:
        raise DimensionMismatch(f"input has {U.shape[1]} channels, model expects {ss.n_inputs}")
    x = np.zeros(ss.n_states)
    Y = np.empty((len(U), ss.n_outputs))
    A, B, C, D = ss.A, ss.B, ss.C, ss.D
    for t in range(len(U)):
        Y[t] = C @ x + D @ U[t]
        x = A @ x + B @ U[t]
    return Y[:, 0] if squeeze_out else Y


@dataclass(frozen=True)
class FrequencyResponse:
    omegas: np.ndarray
    values: np.ndarray  # (k, p, m) complex

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim == 1:
            vals = vals[:, None, None]
        if vals.shape[0] != om.size:
            raise DimensionMismatch("one value per frequency required")
        if om.size > 1 and np.any(np.diff(om) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "omegas", _readonly(om))
        object.__setattr__(self, "values", _readonly(vals))

    @property
    def siso(self) -> np.ndarray:
        return self.values[:, 0, 0]

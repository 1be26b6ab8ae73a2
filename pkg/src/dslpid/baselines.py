"""Dual-Youla and coprime-factor closed-loop identification.

Both methods work with factorizations built by dividing numerator and
denominator by z^deg(den), so every factor is a polynomial in z^-1 and has
all its poles at the origin.  Internally such factors are handled as
coefficient arrays in powers of z^-1 ("q-polynomials").

Loop convention is the package-wide positive feedback ubar = K y + r with K
the signed loop controller.  With K = X0/Y0 and G0 = N0/D0 every plant has the
form G = (N0 + R Y0)/(D0 + R X0), and

    beta = D0 y - N0 ubar = R (Y0 r) + (D0 + R X0) S e,

so R follows from an open-loop FIR fit of beta on alpha = Y0 r.  The closed
loop of such a G with K has characteristic q-polynomial D0 Y0 - N0 X0, which
does not depend on R.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ImproperTransferFunction,
    NominalNotStabilized,
    RankDeficientRegressor,
    UnstableFilter,
)
from .lti import (
    STABILITY_TOL,
    FrequencyResponse,
    Polynomial,
    RationalTF,
    StateSpaceModel,
    cancel_z_powers,
    poly_roots,
    tf_eval,
    tf_simulate,
    tf_to_ss,
)
from .signals import toeplitz_regressor


def _qpoly(tf: RationalTF) -> np.ndarray:
    """Coefficients in z^-1 of a factor p(z)/(c z^k)."""
    den = tf.den.coeffs
    k = tf.den.degree
    if np.any(den[:k]):
        raise ValueError("factor denominator must be a monomial")
    if tf.num.degree > k:
        raise ImproperTransferFunction("factor is improper")
    return tf.num.padded(k + 1)[::-1] / den[k]


def _qadd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = max(a.size, b.size)
    return np.pad(a, (0, n - a.size)) + np.pad(b, (0, n - b.size))


def _from_q(num: np.ndarray, den: np.ndarray) -> RationalTF:
    """sum a_j z^-j / sum b_j z^-j as a ratio of polynomials in z."""
    n = max(num.size, den.size)
    a = np.pad(num, (0, n - num.size))
    b = np.pad(den, (0, n - den.size))
    return cancel_z_powers(RationalTF(Polynomial(a[::-1]), Polynomial(b[::-1])))


def _q_inverse_poles(c: np.ndarray) -> np.ndarray:
    """Poles of 1 / sum c_j z^-j, excluding those at the origin."""
    c = np.trim_zeros(np.asarray(c, dtype=float), "b")
    if c.size == 0 or c[0] == 0.0:
        return np.array([np.inf + 0j])  # no proper inverse
    return poly_roots(Polynomial(c[::-1])) if c.size > 1 else np.zeros(0, complex)


@dataclass(frozen=True, eq=False)
class CoprimeFactors:
    numerator: RationalTF
    denominator: RationalTF
    subject: str = "plant"

    @property
    def qnum(self) -> np.ndarray:
        return _qpoly(self.numerator)

    @property
    def qden(self) -> np.ndarray:
        return _qpoly(self.denominator)

    def ratio(self) -> RationalTF:
        return _from_q(self.qnum, self.qden)

    def __call__(self, z):
        return tf_eval(self.numerator, z) / tf_eval(self.denominator, z)


def coprime_factorize(tf: RationalTF, subject: str = "plant") -> CoprimeFactors:
    """(num/z^d, den/z^d) with d = deg(den); common powers of z cancelled."""
    if not tf.is_proper:
        raise ImproperTransferFunction(f"deg num {tf.num.degree} > deg den {tf.den.degree}")
    zd = Polynomial.monomial(tf.den.degree)
    return CoprimeFactors(cancel_z_powers(RationalTF(tf.num, zd)),
                          cancel_z_powers(RationalTF(tf.den, zd)), subject)


@dataclass(frozen=True, eq=False)
class PlantEstimate:
    """A rational plant estimate with the FIR taps it was built from."""

    method: str
    tf: RationalTF
    fit_residual: float
    taps: dict = field(default_factory=dict)
    rank_deficient: bool = False
    nominal_stabilized: bool = True

    def freqresp(self, omegas) -> FrequencyResponse:
        omegas = np.asarray(omegas, dtype=float)
        v = tf_eval(self.tf, np.exp(1j * omegas))
        return FrequencyResponse(omegas, np.asarray(v, dtype=complex).reshape(-1, 1, 1))

    def realize(self) -> StateSpaceModel:
        return tf_to_ss(self.tf)


def fir_lstsq(x, target, T: int):
    """FIR taps 0..T minimizing ||target - Phi(x) h||; returns (taps, rms residual, rank deficient)."""
    Phi = toeplitz_regressor(x, T)
    target = np.asarray(target, dtype=float)
    h, _, rank, _ = np.linalg.lstsq(Phi, target, rcond=None)
    deficient = rank < Phi.shape[1]
    if deficient:
        warnings.warn(f"FIR regressor has rank {rank} < {Phi.shape[1]}; using min-norm solution",
                      RankDeficientRegressor, stacklevel=3)
    res = target - Phi @ h
    return h, float(np.sqrt(np.mean(res**2))), bool(deficient)


def nominal_char_qpoly(K: CoprimeFactors, G0: CoprimeFactors) -> np.ndarray:
    """D0 Y0 - N0 X0 in powers of z^-1."""
    return _qadd(np.convolve(G0.qden, K.qden), -np.convolve(G0.qnum, K.qnum))


def _signals(dataset):
    return (np.asarray(dataset.r.samples), np.asarray(dataset.y.samples), np.asarray(dataset.ubar.samples))


def dual_youla_estimate(dataset, K_factors: CoprimeFactors, G0_factors: CoprimeFactors, T: int,
                        allow_unstabilized_nominal: bool = False) -> PlantEstimate:
    """FIR Youla parameter fit and plant recovery G = (N0 + R Y0)/(D0 + R X0).

    With ``allow_unstabilized_nominal`` the fit runs even when G0 is not
    stabilized by K; the result then carries no stability guarantee.
    """
    char = nominal_char_qpoly(K_factors, G0_factors)
    poles = _q_inverse_poles(char)
    stabilized = bool(np.all(np.abs(poles) < 1.0 - STABILITY_TOL))
    if not stabilized and not allow_unstabilized_nominal:
        raise NominalNotStabilized("nominal plant is not stabilized by the controller", poles)
    r, y, ubar = _signals(dataset)
    alpha = tf_simulate(K_factors.denominator, r)
    beta = tf_simulate(G0_factors.denominator, y) - tf_simulate(G0_factors.numerator, ubar)
    R, fit, deficient = fir_lstsq(alpha, beta, T)
    num = _qadd(G0_factors.qnum, np.convolve(R, K_factors.qden))
    den = _qadd(G0_factors.qden, np.convolve(R, K_factors.qnum))
    return PlantEstimate("dual_youla", _from_q(num, den), fit, {"R": R}, deficient, stabilized)


def coprime_estimate(dataset, K: RationalTF, G0_factors: CoprimeFactors, T: int) -> PlantEstimate:
    """Filter r by (D0 - K N0)^-1, then fit FIR N and D from y and ubar; G = N/D."""
    kq = coprime_factorize(K, "controller")
    # D0 - K N0 = (D0 Y0 - X0 N0) / Y0, so its inverse is Y0 / (D0 Y0 - X0 N0)
    char = nominal_char_qpoly(kq, G0_factors)
    poles = _q_inverse_poles(char)
    if not np.all(np.abs(poles) < 1.0 - STABILITY_TOL):
        raise UnstableFilter("(D0 - K N0)^-1 is unstable", poles)
    r, y, ubar = _signals(dataset)
    x = tf_simulate(_from_q(kq.qden, char), r)
    n_taps, fit, def_n = fir_lstsq(x, y, T)
    d_taps, _, def_d = fir_lstsq(x, ubar, T)
    return PlantEstimate("coprime", _from_q(n_taps, d_taps), fit, {"N": n_taps, "D": d_taps}, def_n or def_d)


def zero_nominal() -> CoprimeFactors:
    return coprime_factorize(RationalTF.constant(0.0))


def estimate_as_nominal(est: PlantEstimate) -> CoprimeFactors:
    """Factors of a previous estimate, for use as the next stage's nominal plant."""
    return coprime_factorize(est.tf)


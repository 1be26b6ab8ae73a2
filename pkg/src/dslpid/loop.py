"""Closed-loop data generation.

Loop equations (positive feedback, taken literally)::

    ubar = K y + r,     y = G ubar + S e,     r = K r1 + r2

so ``y = (1 - G K)^-1 G r + (1 - G K)^-1 S e``.  Under these equations the
textbook benchmark controller (z - 0.8)/z^2 destabilizes the benchmark plant
(double closed-loop pole at z = 1.3).  The presets therefore carry the signed
loop controller ``K_loop = -(z - 0.8)/z^2``, which matches the negative
summing junction of the usual block diagram and gives closed-loop poles
{0, 0, 0.3, 0.3}.

``r1_sign`` selects r = r2 + r1_sign * K r1; the controller output is
u = K (y + r1_sign * r1), which keeps ubar = K y + r for either sign.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import IllPosedLoop, LengthMismatch, UnstableLoop
from .lti import (
    STABILITY_TOL,
    EVAL_TOL,
    Polynomial,
    RationalTF,
    StabilityReport,
    poly_mul,
    roots_stability,
    tf_combine,
    tf_is_stable,
    tf_simulate,
    tf_to_ss,
)
from .signals import RngStream, Signal, gaussian_noise

ONE = RationalTF.constant(1.0)

SIGNAL_NAMES = ("r1", "r2", "e", "u", "ubar", "y", "ybar", "r")


@dataclass(frozen=True, eq=False)
class LoopConfig:
    plant: RationalTF
    controller: RationalTF
    noise_filter: RationalTF
    r1: Signal
    r2: Signal
    sigma: float
    rng: RngStream
    r1_sign: int = 1

    def __post_init__(self):
        if len(self.r1) != len(self.r2):
            raise LengthMismatch("r1 and r2 must have equal length")
        if self.r1_sign not in (1, -1):
            raise ValueError("r1_sign must be +1 or -1")

    @property
    def length(self) -> int:
        return len(self.r2)

    def to_dict(self) -> dict:
        return {
            "plant": self.plant.to_dict(),
            "controller": self.controller.to_dict(),
            "noise_filter": self.noise_filter.to_dict(),
            "sigma": float(self.sigma),
            "seed": int(self.rng.seed),
            "stream": int(self.rng.stream),
            "r1_sign": int(self.r1_sign),
            "length": self.length,
            "r1_sha256": hashlib.sha256(self.r1.samples.tobytes()).hexdigest(),
            "r2_sha256": hashlib.sha256(self.r2.samples.tobytes()).hexdigest(),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class LoopDataset:
    r1: Signal
    r2: Signal
    e: Signal
    u: Signal
    ubar: Signal
    y: Signal
    ybar: Signal
    r: Signal
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = {len(getattr(self, k)) for k in SIGNAL_NAMES}
        if len(n) != 1:
            raise LengthMismatch("all dataset signals must have equal length")

    def __len__(self) -> int:
        return len(self.y)

    def hash(self) -> str:
        h = hashlib.sha256()
        for k in SIGNAL_NAMES:
            h.update(getattr(self, k).samples.tobytes())
        return h.hexdigest()[:16]

    def to_csv(self, path) -> Path:
        """Write ``t,r1,...,r`` rows plus a ``<path>.json`` sidecar; returns the sidecar path."""
        path = Path(path)
        cols = [getattr(self, k).samples for k in SIGNAL_NAMES]
        with open(path, "w") as fh:
            fh.write("t," + ",".join(SIGNAL_NAMES) + "\n")
            for t in range(len(self)):
                fh.write(str(t) + "," + ",".join(repr(float(c[t])) for c in cols) + "\n")
        side = path.with_suffix(path.suffix + ".json")
        side.write_text(json.dumps(self.metadata, indent=2, sort_keys=True))
        return side

    @classmethod
    def from_csv(cls, path) -> "LoopDataset":
        path = Path(path)
        data = np.genfromtxt(path, delimiter=",", names=True)
        side = path.with_suffix(path.suffix + ".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        return cls(**{k: Signal(np.atleast_1d(data[k]), k) for k in SIGNAL_NAMES}, metadata=meta)


@dataclass(frozen=True)
class LoopReport:
    ok: bool
    well_posed: bool
    char_poly: Polynomial
    poles: np.ndarray
    spectral_radius: float


def characteristic_polynomial(G: RationalTF, K: RationalTF) -> Polynomial:
    """den_G den_K - num_G num_K for the loop ubar = K y, y = G ubar."""
    return poly_mul(G.den, K.den) - poly_mul(G.num, K.num)


def loop_report(G: RationalTF, K: RationalTF, tol: float = STABILITY_TOL) -> LoopReport:
    """Closed-loop poles of (G, K) without raising; ``ok`` is False if unstable or ill-posed."""
    dd = poly_mul(G.den, K.den)
    nn = poly_mul(G.num, K.num)
    char = characteristic_polynomial(G, K)
    scale = max(np.abs(dd.coeffs).max(initial=0.0), np.abs(nn.coeffs).max(initial=0.0))
    ill = char.degree < dd.degree or abs(char.lead) <= EVAL_TOL * scale
    if char.degree < 1:
        poles = np.zeros(0, dtype=complex)
        rep = StabilityReport(not char.is_zero, poles, np.abs(poles))
    else:
        rep = roots_stability(char, tol)
    return LoopReport(rep.stable and not ill, not ill, char, rep.poles, rep.spectral_radius)


def validate_loop(config: LoopConfig) -> LoopReport:
    G, K, S = config.plant, config.controller, config.noise_filter
    for name, tf in (("plant", G), ("controller", K), ("noise filter", S)):
        if not tf.is_proper:
            raise IllPosedLoop(f"{name} is improper")
    s_rep = tf_is_stable(S)
    if not s_rep.stable:
        raise UnstableLoop("noise filter S is unstable", s_rep.poles)
    rep = loop_report(G, K)
    if not rep.well_posed:
        raise IllPosedLoop("1 - G(inf) K(inf) = 0")
    if not rep.ok:
        bad = rep.poles[np.abs(rep.poles) >= 1.0 - STABILITY_TOL]
        raise UnstableLoop(f"closed loop has poles outside the unit disk: {np.round(bad, 6).tolist()}", bad)
    return rep


def composite_reference(r1, r2, K: RationalTF, r1_sign: int = 1) -> Signal:
    a = np.asarray(r1, dtype=float).ravel()
    b = np.asarray(r2, dtype=float).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"r1 has {a.size} samples, r2 has {b.size}")
    if not np.any(a):
        return Signal(b.copy(), "r")
    return Signal(b + r1_sign * tf_simulate(K, a), "r")


def closed_loop_maps(G: RationalTF, K: RationalTF, S: RationalTF):
    """(L_k, H) with L_k = (1-GK)^-1 G and H = (1-GK)^-1 S, as raw rationals."""
    Lk = tf_combine("feedback", G, K)
    sens = tf_combine("feedback", ONE, tf_combine("series", G, K))
    return Lk, tf_combine("series", sens, S)


def simulate_loop(config: LoopConfig, *, validate: bool = True) -> LoopDataset:
    if validate:
        validate_loop(config)
    G, K, S = config.plant, config.controller, config.noise_filter
    n = config.length
    e = gaussian_noise(n, config.sigma, config.rng)
    r = composite_reference(config.r1, config.r2, K, config.r1_sign)
    Lk, H = closed_loop_maps(G, K, S)
    y = tf_simulate(Lk, r.samples) + tf_simulate(H, e.samples)
    se = tf_simulate(S, e.samples)
    ybar = y - se
    r1 = config.r1.samples
    u = tf_simulate(K, y + config.r1_sign * r1 if np.any(r1) else y)
    ubar = u + config.r2.samples
    meta = {"config": config.to_dict(), "config_hash": config.config_hash(),
            "seed": int(config.rng.seed), "stream": int(config.rng.stream)}
    return LoopDataset(
        r1=Signal(r1, "r1"), r2=Signal(config.r2.samples, "r2"), e=e,
        u=Signal(u, "u"), ubar=Signal(ubar, "ubar"), y=Signal(y, "y"),
        ybar=Signal(ybar, "ybar"), r=r, metadata=meta,
    )


def simulate_loop_statespace(config: LoopConfig, e: Optional[np.ndarray] = None) -> dict:
    """Sample-by-sample state-space iteration of the loop; test oracle for :func:`simulate_loop`.

    Feedthrough is handled by solving the scalar algebraic loop each step.
    """
    G = tf_to_ss(config.plant)
    K = tf_to_ss(config.controller)
    S = tf_to_ss(config.noise_filter)
    n = config.length
    if e is None:
        e = gaussian_noise(n, config.sigma, config.rng).samples
    r1 = config.r1.samples
    r2 = config.r2.samples
    s = config.r1_sign
    dg, dk, ds = G.D[0, 0], K.D[0, 0], S.D[0, 0]
    denom = 1.0 - dg * dk
    if abs(denom) < EVAL_TOL:
        raise IllPosedLoop("1 - D_G D_K = 0")
    xg = np.zeros(G.n_states)
    xk = np.zeros(K.n_states)
    xs = np.zeros(S.n_states)
    out = {k: np.empty(n) for k in ("y", "u", "ubar", "ybar", "se")}
    for t in range(n):
        se = float((S.C @ xs)[0]) + ds * e[t] if S.n_states else ds * e[t]
        yg_free = float((G.C @ xg)[0]) if G.n_states else 0.0
        uk_free = float((K.C @ xk)[0]) if K.n_states else 0.0
        # y = yg_free + dg*ubar + se ;  ubar = uk_free + dk*(y + s r1) + r2
        ubar = (uk_free + dk * (yg_free + se + s * r1[t]) + r2[t]) / denom
        ybar = yg_free + dg * ubar
        y = ybar + se
        kin = y + s * r1[t]
        u = uk_free + dk * kin
        if G.n_states:
            xg = G.A @ xg + G.B[:, 0] * ubar
        if K.n_states:
            xk = K.A @ xk + K.B[:, 0] * kin
        if S.n_states:
            xs = S.A @ xs + S.B[:, 0] * e[t]
        out["y"][t], out["u"][t], out["ubar"][t], out["ybar"][t], out["se"][t] = y, u, ubar, ybar, se
    return out

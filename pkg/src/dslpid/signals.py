"""Excitation and noise generation, and the Toeplitz regressor used by every FIR fit.

Gaussian draws come from numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=(stream,))`` and transformed with
``Generator.standard_normal``.  This pairing is fixed for the package; do not
swap the generator without bumping the results format.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.linalg import toeplitz

from .errors import (
    EmptySignal,
    NegativeSigma,
    NonFiniteSignal,
    NonMaximalLength,
    ZeroInitialState,
)

# x^9 + x^5 + 1; any primitive polynomial gives the same period
DEFAULT_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
}


@dataclass(frozen=True, eq=False)
class Signal:
    samples: np.ndarray
    name: str = ""

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).ravel()
        if not np.all(np.isfinite(s)):
            raise NonFiniteSignal(f"signal {self.name!r} contains NaN or Inf")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.size

    def __array__(self, dtype=None, copy=None):
        return self.samples if dtype is None else self.samples.astype(dtype)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for t, v in enumerate(self.samples):
                w.writerow([t, repr(float(v))])

    @classmethod
    def from_csv(cls, path, name: Optional[str] = None) -> "Signal":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        vals = [float(r["value"]) for r in sorted(rows, key=lambda r: int(r["t"]))]
        return cls(np.array(vals), name if name is not None else Path(path).stem)


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: int = 0

    def __post_init__(self):
        for v in (self.seed, self.stream):
            if not 0 <= int(v) < 2**64:
                raise ValueError("seed and stream must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))


def _as_array(x) -> np.ndarray:
    return np.asarray(x.samples if isinstance(x, Signal) else x, dtype=float).ravel()


def lfsr_bits(order: int, taps: Iterable[int], init: Sequence[int], length: int) -> np.ndarray:
    """Fibonacci LFSR output bits; register position k (1-based) is a tap when k in ``taps``."""
    reg = [int(b) & 1 for b in init]
    if len(reg) != order:
        raise ValueError(f"init must have {order} bits")
    taps = sorted({int(t) for t in taps})
    if not taps or taps[-1] != order or taps[0] < 1:
        raise ValueError(f"taps must lie in 1..{order} and include {order}")
    out = np.empty(length, dtype=np.int8)
    for t in range(length):
        out[t] = reg[-1]
        fb = 0
        for k in taps:
            fb ^= reg[k - 1]
        reg = [fb] + reg[:-1]
    return out


def lfsr_period(order: int, taps: Iterable[int], init: Sequence[int]) -> int:
    start = tuple(int(b) & 1 for b in init)
    taps = sorted({int(t) for t in taps})
    reg = list(start)
    for step in range(1, 2**order + 1):
        fb = 0
        for k in taps:
            fb ^= reg[k - 1]
        reg = [fb] + reg[:-1]
        if tuple(reg) == start:
            return step
    return 0


def prbs_generate(
    order: int = 9,
    amplitude: float = 10.0,
    periods: int = 10,
    taps: Optional[Iterable[int]] = None,
    init: Optional[Sequence[int]] = None,
) -> Signal:
    """Periodic maximal-length PRBS, bit 1 -> +amplitude, bit 0 -> -amplitude."""
    if order < 2:
        raise ValueError("order must be >= 2")
    if periods < 1:
        raise ValueError("periods must be >= 1")
    taps = tuple(taps) if taps is not None else DEFAULT_TAPS.get(order)
    if taps is None:
        raise ValueError(f"no default taps for order {order}; pass taps explicitly")
    init = tuple(init) if init is not None else (1,) * order
    if not any(int(b) & 1 for b in init):
        raise ZeroInitialState("LFSR initial state must be nonzero")
    period = 2**order - 1
    got = lfsr_period(order, taps, init)
    if got != period:
        raise NonMaximalLength(f"taps {taps} give period {got}, expected {period}")
    bits = lfsr_bits(order, taps, init, period)
    one = np.where(bits == 1, amplitude, -amplitude).astype(float)
    return Signal(np.tile(one, periods), name="prbs")


def gaussian_noise(length: int, sigma: float, rng: RngStream, name: str = "e") -> Signal:
    if sigma < 0:
        raise NegativeSigma(f"sigma must be >= 0, got {sigma}")
    if length < 0:
        raise ValueError("length must be >= 0")
    if sigma == 0:
        return Signal(np.zeros(length), name)
    return Signal(sigma * rng.generator().standard_normal(length), name)


def toeplitz_regressor(r, horizon: int) -> np.ndarray:
    """Column j is ``r`` delayed by j samples, zero before t=0."""
    x = _as_array(r)
    if x.size == 0:
        raise EmptySignal("cannot build a regressor from an empty signal")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if x.size <= horizon:
        raise ValueError(f"signal length {x.size} must exceed horizon {horizon}")
    first_row = np.zeros(horizon + 1)
    first_row[0] = x[0]
    return toeplitz(x, first_row)

"""Experiment configuration: TOML loading, validation and built-in presets."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, ImproperTransferFunction, ZeroPolynomial
from .lti import RationalTF
from .loop import LoopConfig
from .signals import RngStream, Signal, prbs_generate

METHODS = ("dslp", "dual_youla", "coprime")
SPECIAL_NOMINALS = ("zero", "two_stage")

# ascending coefficients
BENCHMARK_PLANT = {"num": [0.0, 0.0, 1.0], "den": [0.89, -1.6, 1.0]}
BENCHMARK_NOISE = {"num": [-0.3338, 1.045, -1.56, 1.0], "den": [-0.6675, 2.09, -2.35, 1.0]}
STRICT_CONTROLLER = {"num": [0.8, -1.0], "den": [0.0, 0.0, 1.0]}  # -(z - 0.8)/z^2
PROPER_CONTROLLER = {"num": [0.8, -1.0], "den": [0.0, 1.0]}  # -(z - 0.8)/z
NOMINAL_A = {"name": "g0_a", "num": [-1.0], "den": [0.5, 1.0]}  # -1/(z + 0.5)


@dataclass(frozen=True)
class ExcitationSpec:
    order: int = 9
    amplitude: float = 10.0
    periods: int = 10
    sigma: float = 2.0
    r1_sign: int = 1
    taps: Optional[Tuple[int, ...]] = None
    length: Optional[int] = None  # truncate or extend the periodic schedule

    def reference(self, length: Optional[int] = None) -> Signal:
        """PRBS on r2, repeated or truncated to ``length`` samples."""
        one = prbs_generate(self.order, self.amplitude, 1, self.taps).samples
        n = length or self.length or one.size * self.periods
        reps = -(-n // one.size)
        return Signal(np.tile(one, reps)[:n], "r2")

    @property
    def n_samples(self) -> int:
        return self.length or (2**self.order - 1) * self.periods


@dataclass(frozen=True, eq=False)
class NominalSpec:
    """A nominal plant choice for the baselines: ``zero``, ``two_stage`` or an explicit G0."""

    label: str
    kind: str
    tf: Optional[RationalTF] = None


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    plant: RationalTF
    controller: RationalTF
    noise_filter: RationalTF
    excitation: ExcitationSpec = ExcitationSpec()
    horizon: int = 15
    methods: Tuple[str, ...] = METHODS
    nominals: Tuple[NominalSpec, ...] = (NominalSpec("zero", "zero"),)
    allow_unstabilized_nominal: bool = False
    trials: int = 100
    seed: int = 0
    grid_size: int = 5110
    workers: int = 1
    name: str = "custom"
    output: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.grid_size < 2:
            raise ConfigError("grid_size must be >= 2")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}, got {list(self.methods)}")
        labels = [n.label for n in self.nominals]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate nominal labels {labels}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.excitation.r1_sign not in (1, -1):
            raise ConfigError("r1_sign must be +1 or -1")
        if self.excitation.sigma < 0:
            raise ConfigError("sigma must be >= 0")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_length(self, length: int) -> "ExperimentConfig":
        return self.replace(excitation=dataclasses.replace(self.excitation, length=int(length)))

    def loop_config(self, seed: int, stream: int = 0) -> LoopConfig:
        r2 = self.excitation.reference()
        return LoopConfig(self.plant, self.controller, self.noise_filter,
                          Signal(np.zeros(len(r2)), "r1"), r2, self.excitation.sigma,
                          RngStream(int(seed), stream), self.excitation.r1_sign)


def _tf(section: dict, where: str) -> RationalTF:
    if not isinstance(section, dict) or "num" not in section or "den" not in section:
        raise ConfigError(f"[{where}] needs 'num' and 'den' arrays (ascending powers of z)")
    try:
        tf = RationalTF.from_coeffs([float(c) for c in section["num"]], [float(c) for c in section["den"]])
    except (TypeError, ValueError, ZeroPolynomial) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc
    if not tf.is_proper:
        raise ConfigError(f"[{where}] is improper")
    return tf


def _nominal(item) -> NominalSpec:
    if isinstance(item, str):
        if item not in SPECIAL_NOMINALS:
            raise ConfigError(f"unknown nominal {item!r}; use {SPECIAL_NOMINALS} or a {{name, num, den}} table")
        return NominalSpec(item, item)
    if isinstance(item, dict):
        label = str(item.get("name", "g0"))
        if label in SPECIAL_NOMINALS or ":" in label:
            raise ConfigError(f"nominal name {label!r} is reserved")
        return NominalSpec(label, "tf", _tf(item, f"nominal {label}"))
    raise ConfigError(f"cannot parse nominal {item!r}")


def config_from_dict(d: dict, name: str = "custom") -> ExperimentConfig:
    try:
        exc = dict(d.get("excitation", {}))
        est = dict(d.get("estimation", {}))
        exp = dict(d.get("experiment", {}))
        if "taps" in exc:
            exc["taps"] = tuple(int(t) for t in exc["taps"])
        known = {f.name for f in dataclasses.fields(ExcitationSpec)}
        extra = set(exc) - known
        if extra:
            raise ConfigError(f"unknown [excitation] keys {sorted(extra)}")
        excitation = ExcitationSpec(**exc)
        return ExperimentConfig(
            plant=_tf(d.get("plant"), "plant"),
            controller=_tf(d.get("controller"), "controller"),
            noise_filter=_tf(d.get("noise_filter"), "noise_filter"),
            excitation=excitation,
            horizon=int(est.get("horizon", 15)),
            methods=tuple(est.get("methods", METHODS)),
            nominals=tuple(_nominal(n) for n in est.get("nominals", ["zero"])),
            allow_unstabilized_nominal=bool(est.get("allow_unstabilized_nominal", False)),
            trials=int(exp.get("trials", 100)),
            seed=int(exp.get("seed", 0)),
            grid_size=int(exp.get("grid_size", 5110)),
            workers=int(exp.get("workers", 1)),
            name=str(d.get("name", name)),
            output=dict(d.get("output", {})),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, ImproperTransferFunction) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, name=path.stem)


def _benchmark(controller: dict) -> dict:
    return {
        "plant": BENCHMARK_PLANT,
        "controller": controller,
        "noise_filter": BENCHMARK_NOISE,
        "excitation": {"order": 9, "amplitude": 10.0, "periods": 10, "sigma": 2.0},
        "estimation": {"horizon": 15, "methods": list(METHODS),
                       "nominals": [NOMINAL_A, "zero", "two_stage"],
                       "allow_unstabilized_nominal": True},
        "experiment": {"trials": 100, "seed": 20240601, "grid_size": 5110},
        "output": {"results": "results.csv"},
    }


PRESETS = {
    "benchmark": ("second-order resonant plant, strictly proper loop controller -(z-0.8)/z^2",
                  lambda: _benchmark(STRICT_CONTROLLER)),
    "benchmark_proper": ("same plant, proper loop controller -(z-0.8)/z (feedthrough -1)",
                         lambda: _benchmark(PROPER_CONTROLLER)),
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return config_from_dict(PRESETS[name][1](), name=name)


def preset_toml(name: str) -> str:
    """TOML text of a preset, usable as a starting config file."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    d = PRESETS[name][1]()
    lines = [f'name = "{name}"']

    def arr(v):
        return "[" + ", ".join(repr(float(x)) for x in v) + "]"

    for sec in ("plant", "controller", "noise_filter"):
        lines += ["", f"[{sec}]", f"num = {arr(d[sec]['num'])}", f"den = {arr(d[sec]['den'])}"]
    e = d["excitation"]
    lines += ["", "[excitation]"] + [f"{k} = {v!r}" for k, v in e.items()]
    est = d["estimation"]
    noms = []
    for n in est["nominals"]:
        noms.append(f'"{n}"' if isinstance(n, str) else
                    f'{{ name = "{n["name"]}", num = {arr(n["num"])}, den = {arr(n["den"])} }}')
    lines += ["", "[estimation]", f"horizon = {est['horizon']}",
              "methods = [" + ", ".join(f'"{m}"' for m in est["methods"]) + "]",
              "nominals = [" + ", ".join(noms) + "]",
              f"allow_unstabilized_nominal = {str(est['allow_unstabilized_nominal']).lower()}"]
    lines += ["", "[experiment]"] + [f"{k} = {v!r}" for k, v in d["experiment"].items()]
    lines += ["", "[output]"] + [f'{k} = "{v}"' for k, v in d["output"].items()]
    return "\n".join(lines) + "\n"

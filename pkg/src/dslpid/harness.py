"""Monte Carlo orchestration, convergence sweeps and result summaries.

Every trial derives its seed from (base seed, trial index), so the rows a
trial produces do not depend on which worker ran it or in what order.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import (
    CoprimeFactors,
    PlantEstimate,
    coprime_estimate,
    coprime_factorize,
    dual_youla_estimate,
    estimate_as_nominal,
    zero_nominal,
)
from .config import ExperimentConfig
from .dslp import NullSpace, estimate_dual_params, realize_plant_ss, recover_plant_freqresp
from .errors import DslpError, LengthTooShort, MalformedResults, RankDeficientRegressor
from .lti import tf_to_ss
from .loop import LoopDataset, simulate_loop, validate_loop
from .metrics import freq_grid, metric_report
from .sls import build_affine_constraints

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("trial", "seed", "dataset_hash", "method", "nominal", "err1", "err2", "cl_stable",
                  "fit_residual", "constraint_residual", "wall_ms", "status")
TIMING_COLUMNS = ("wall_ms",)
STAGE1_SUFFIX = ":stage1"


def trial_seed(base_seed: int, trial: int) -> int:
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(trial),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    dataset_hash: str
    method: str
    nominal: str
    err1: float = math.nan
    err2: float = math.nan
    cl_stable: bool = False
    fit_residual: float = math.nan
    constraint_residual: float = math.nan
    wall_ms: float = 0.0
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status.split(";")[0] == "ok"

    @property
    def sort_key(self):
        return (self.trial, self.method, self.nominal)

    def csv_row(self) -> List[str]:
        out = []
        for f in RESULT_COLUMNS:
            v = getattr(self, f)
            if isinstance(v, bool):
                out.append("true" if v else "false")
            elif isinstance(v, float):
                out.append("nan" if math.isnan(v) else format(v, ".17g"))
            else:
                out.append(str(v))
        return out


@lru_cache(maxsize=8)
def _null_space(A: bytes, B: bytes, C: bytes, n: int, m: int, p: int, T: int) -> NullSpace:
    a = np.frombuffer(A).reshape(n, n)
    b = np.frombuffer(B).reshape(n, m)
    c = np.frombuffer(C).reshape(p, n)
    return NullSpace.from_system(build_affine_constraints(a, b, c, T))


def null_space_for(K_ss, T: int) -> NullSpace:
    A, B, C = (np.ascontiguousarray(x, dtype=float) for x in (K_ss.A, K_ss.B, K_ss.C))
    return _null_space(A.tobytes(), B.tobytes(), C.tobytes(), K_ss.n_states, B.shape[1], C.shape[0], T)


class _TrialContext:
    def __init__(self, config: ExperimentConfig, trial: int):
        self.config = config
        self.trial = trial
        self.seed = trial_seed(config.seed, trial)
        self.grid = freq_grid(config.grid_size)
        self.K_ss = tf_to_ss(config.controller)
        self.K_factors = coprime_factorize(config.controller, "controller")
        self.rows: List[TrialResult] = []
        self.hash = ""

    def record(self, method: str, nominal: str, fn):
        """Run ``fn`` -> (values, realized model, fit, constraint residual, status suffix); append a row."""
        t0 = time.perf_counter()
        base = dict(trial=self.trial, seed=self.seed, dataset_hash=self.hash, method=method, nominal=nominal)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RankDeficientRegressor)
            try:
                values, model, fit, cres, extra = fn()
                rep = metric_report(self.config.plant, values, self.config.controller, self.grid, model, self.K_ss)
                status = "ok" + extra
                if any(issubclass(w.category, RankDeficientRegressor) for w in caught):
                    status += ";rank_deficient"
                row = TrialResult(**base, err1=rep.err1, err2=rep.err2, cl_stable=rep.cl_stable,
                                  fit_residual=fit, constraint_residual=cres, status=status)
                result = values
            except (DslpError, np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
                log.debug("trial %d %s/%s failed: %s", self.trial, method, nominal, exc)
                row = TrialResult(**base, status=type(exc).__name__)
                result = None
        self.rows.append(replace(row, wall_ms=(time.perf_counter() - t0) * 1e3))
        return result


def _baseline(est: PlantEstimate):
    extra = "" if est.nominal_stabilized else ";nominal_unstabilized"
    return est, est.realize(), est.fit_residual, math.nan, extra


def run_trial(config: ExperimentConfig, trial: int) -> List[TrialResult]:
    """All method/nominal rows of one trial, computed on one shared dataset."""
    ctx = _TrialContext(config, trial)
    T = config.horizon
    data = simulate_loop(config.loop_config(ctx.seed, stream=0))
    ctx.hash = data.hash()
    labels = [n.label for n in config.nominals] or ["none"]

    if "dslp" in config.methods:
        def dslp():
            est = estimate_dual_params(data, ctx.K_ss, T, null_space_for(ctx.K_ss, T))
            return recover_plant_freqresp(est, ctx.grid), realize_plant_ss(est), est.fit_residual, \
                est.constraint_residual, ""
        # one estimate, reported under every nominal label so each comparison group is complete
        n_before = len(ctx.rows)
        ctx.record("dslp", labels[0], dslp)
        first = ctx.rows[n_before]
        for lab in labels[1:]:
            ctx.rows.append(replace(first, nominal=lab))

    baselines = [m for m in ("dual_youla", "coprime") if m in config.methods]
    if not baselines:
        return sorted(ctx.rows, key=lambda r: r.sort_key)

    def run_pair(ds: LoopDataset, g0: CoprimeFactors, label: str):
        if "dual_youla" in baselines:
            ctx.record("dual_youla", label, lambda: _baseline(dual_youla_estimate(
                ds, ctx.K_factors, g0, T, config.allow_unstabilized_nominal)))
        if "coprime" in baselines:
            ctx.record("coprime", label, lambda: _baseline(coprime_estimate(ds, config.controller, g0, T)))

    for nom in config.nominals:
        if nom.kind == "zero":
            run_pair(data, zero_nominal(), nom.label)
        elif nom.kind == "tf":
            try:
                g0 = coprime_factorize(nom.tf)
            except DslpError as exc:
                for m in baselines:
                    ctx.rows.append(TrialResult(trial, ctx.seed, ctx.hash, m, nom.label, status=type(exc).__name__))
                continue
            run_pair(data, g0, nom.label)
        else:  # two_stage: dual-Youla with G0 = 0, then a second pass on fresh data
            stage1 = ctx.record("dual_youla", nom.label + STAGE1_SUFFIX, lambda: _baseline(dual_youla_estimate(
                data, ctx.K_factors, zero_nominal(), T)))
            if stage1 is None:
                for m in baselines:
                    ctx.rows.append(TrialResult(trial, ctx.seed, ctx.hash, m, nom.label, status="StageOneFailed"))
                continue
            second = simulate_loop(config.loop_config(ctx.seed, stream=1), validate=False)
            run_pair(second, estimate_as_nominal(stage1), nom.label)
    return sorted(ctx.rows, key=lambda r: r.sort_key)


def _run_trial_star(args):
    return run_trial(*args)


def run_monte_carlo(config: ExperimentConfig, workers: Optional[int] = None,
                    trials: Optional[Iterable[int]] = None) -> List[TrialResult]:
    """Run every trial (optionally in worker processes); rows sorted by (trial, method, nominal)."""
    validate_loop(config.loop_config(0))
    idx = list(range(config.trials)) if trials is None else list(trials)
    workers = workers or config.workers
    if workers > 1 and len(idx) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_trial_star, [(config, t) for t in idx], chunksize=max(1, len(idx) // (4 * workers))))
    else:
        chunks = [run_trial(config, t) for t in idx]
    rows = [r for chunk in chunks for r in chunk]
    return sorted(rows, key=lambda r: r.sort_key)


def failures(rows: Sequence[TrialResult]) -> List[TrialResult]:
    return [r for r in rows if not r.ok]


def write_results(rows: Sequence[TrialResult], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow(r.csv_row())
    return path


def _parse_float(s: str) -> float:
    return math.nan if s in ("", "nan") else float(s)


def read_results(path) -> List[TrialResult]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(RESULT_COLUMNS[:-1]) - set(reader.fieldnames or ())
            if missing:
                raise MalformedResults(f"{path}: missing columns {sorted(missing)}")
            rows = []
            for i, rec in enumerate(reader, start=2):
                try:
                    rows.append(TrialResult(
                        trial=int(rec["trial"]), seed=int(rec["seed"]), dataset_hash=rec["dataset_hash"],
                        method=rec["method"], nominal=rec["nominal"], err1=_parse_float(rec["err1"]),
                        err2=_parse_float(rec["err2"]), cl_stable=rec["cl_stable"].strip().lower() == "true",
                        fit_residual=_parse_float(rec["fit_residual"]),
                        constraint_residual=_parse_float(rec["constraint_residual"]),
                        wall_ms=_parse_float(rec["wall_ms"]), status=rec.get("status") or "ok"))
                except (KeyError, TypeError, ValueError) as exc:
                    raise MalformedResults(f"{path}:{i}: {exc}") from exc
    except OSError as exc:
        raise MalformedResults(f"cannot read {path}: {exc}") from exc
    return rows


@dataclass(frozen=True)
class FiveNumber:
    min: float
    q1: float
    median: float
    q3: float
    max: float

    @classmethod
    def of(cls, values) -> "FiveNumber":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls(*([math.nan] * 5))
        return cls(*(float(x) for x in np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")))


@dataclass(frozen=True)
class SummaryStats:
    method: str
    nominal: str
    n: int
    n_failed: int
    stable: int
    err1: FiveNumber
    err2: FiveNumber


def summarize_rows(rows: Sequence[TrialResult]) -> List[SummaryStats]:
    """Five-number summaries per (method, nominal) over successful rows."""
    groups: Dict[Tuple[str, str], List[TrialResult]] = {}
    for r in rows:
        groups.setdefault((r.method, r.nominal), []).append(r)
    out = []
    for (method, nominal), grp in sorted(groups.items()):
        good = [r for r in grp if r.ok]
        out.append(SummaryStats(method, nominal, len(grp), len(grp) - len(good),
                                sum(r.cl_stable for r in good),
                                FiveNumber.of([r.err1 for r in good]), FiveNumber.of([r.err2 for r in good])))
    return out


SUMMARY_COLUMNS = ("method", "nominal", "metric", "min", "q1", "median", "q3", "max", "n", "n_failed", "stable")


def write_summary(stats: Sequence[SummaryStats], path, dat_path=None) -> Tuple[Path, Path]:
    """Summary CSV plus a gnuplot candlestick file (x q1 min max q3 median, one block per metric)."""
    path = Path(path)
    dat_path = Path(dat_path) if dat_path else path.with_suffix(".dat")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in stats:
            for metric in ("err1", "err2"):
                f = getattr(s, metric)
                w.writerow([s.method, s.nominal, metric, *(format(x, ".17g") for x in asdict(f).values()),
                            s.n, s.n_failed, s.stable])
    with open(dat_path, "w") as fh:
        for block, metric in enumerate(("err1", "err2")):
            if block:
                fh.write("\n\n")
            fh.write(f"# {metric}: x q1 min max q3 median label\n")
            for x, s in enumerate(stats, start=1):
                f = getattr(s, metric)
                fh.write(f"{x} {f.q1:.10g} {f.min:.10g} {f.max:.10g} {f.q3:.10g} {f.median:.10g} "
                         f"\"{s.method}/{s.nominal}\"\n")
    return path, dat_path


def summarize(results_path, out=None, dat=None) -> List[SummaryStats]:
    stats = summarize_rows(read_results(results_path))
    if not stats:
        raise MalformedResults(f"{results_path}: no result rows")
    if out is not None:
        write_summary(stats, out, dat)
    return stats


@dataclass(frozen=True)
class SweepPoint:
    length: int
    method: str
    nominal: str
    median_err1: float
    n_ok: int


def convergence_sweep(config: ExperimentConfig, lengths: Sequence[int],
                      workers: Optional[int] = None) -> List[SweepPoint]:
    """Median err1 per method and nominal for each data length; the metric grid stays fixed."""
    lengths = [int(n) for n in lengths]
    if not lengths:
        raise ValueError("lengths must be nonempty")
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise ValueError("lengths must be strictly ascending")
    short = [n for n in lengths if n <= config.horizon]
    if short:
        raise LengthTooShort(f"lengths {short} do not exceed the horizon {config.horizon}")
    out = []
    for n in lengths:
        rows = run_monte_carlo(config.with_length(n), workers=workers)
        for s in summarize_rows(rows):
            out.append(SweepPoint(n, s.method, s.nominal, s.err1.median, s.n - s.n_failed))
    return out


def write_sweep(points: Sequence[SweepPoint], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f.name for f in fields(SweepPoint)])
        for p in points:
            w.writerow([p.length, p.method, p.nominal, format(p.median_err1, ".17g"), p.n_ok])
    return path

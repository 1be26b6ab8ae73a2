import csv
import math

import numpy as np
import pytest

from dslpid.cli import main
from dslpid.config import ExcitationSpec, config_from_dict, load_config, preset, preset_toml
from dslpid.errors import ConfigError, LengthTooShort, MalformedResults
from dslpid.harness import (
    RESULT_COLUMNS,
    STAGE1_SUFFIX,
    FiveNumber,
    TrialResult,
    convergence_sweep,
    read_results,
    run_monte_carlo,
    run_trial,
    summarize,
    summarize_rows,
    trial_seed,
    write_results,
)

SMALL_TOML = """
[plant]
num = [0.0, 0.0, 1.0]
den = [0.89, -1.6, 1.0]

[controller]
num = [{k0}, {k1}]
den = [0.0, 0.0, 1.0]

[noise_filter]
num = [-0.3338, 1.045, -1.56, 1.0]
den = [-0.6675, 2.09, -2.35, 1.0]

[excitation]
order = 7
periods = 2
sigma = 2.0

[estimation]
horizon = 10
methods = {methods}
nominals = ["zero"]

[experiment]
trials = 3
seed = 42
grid_size = 64
"""


def small_config(tmp_path, methods='["dslp", "dual_youla"]', k0=0.8, k1=-1.0):
    p = tmp_path / "small.toml"
    p.write_text(SMALL_TOML.format(methods=methods, k0=k0, k1=k1))
    return p


@pytest.fixture(scope="module")
def quick_benchmark():
    cfg = preset("benchmark")
    return cfg.replace(trials=2, grid_size=128,
                       excitation=ExcitationSpec(order=7, periods=3))


def strip_timing(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    i = rows[0].index("wall_ms")
    return [r[:i] + r[i + 1:] for r in rows]


def test_trial_seed_is_stable():
    assert trial_seed(7, 0) == trial_seed(7, 0)
    assert len({trial_seed(7, t) for t in range(100)}) == 100


def test_benchmark_rows(quick_benchmark):
    rows = run_trial(quick_benchmark, 0)
    keys = {(r.method, r.nominal) for r in rows}
    labels = ("g0_a", "zero", "two_stage")
    for m in ("dslp", "dual_youla", "coprime"):
        for lab in labels:
            assert (m, lab) in keys
    assert ("dual_youla", "two_stage" + STAGE1_SUFFIX) in keys
    assert len(rows) == 10
    assert len({r.dataset_hash for r in rows}) == 1
    by = {(r.method, r.nominal): r for r in rows}
    assert by["coprime", "g0_a"].status == "UnstableFilter"
    assert by["dual_youla", "g0_a"].status == "ok;nominal_unstabilized"
    assert by["dslp", "zero"].ok and by["dslp", "zero"].constraint_residual <= 1e-8
    d = [by["dslp", lab] for lab in labels]
    assert d[0].err1 == d[1].err1 == d[2].err1


def test_monte_carlo_deterministic_across_workers(quick_benchmark, tmp_path):
    a = write_results(run_monte_carlo(quick_benchmark, workers=1), tmp_path / "a.csv")
    b = write_results(run_monte_carlo(quick_benchmark, workers=2), tmp_path / "b.csv")
    assert strip_timing(a) == strip_timing(b)
    rows = read_results(a)
    assert len(rows) == 2 * 10
    assert [r.trial for r in rows] == sorted(r.trial for r in rows)


def test_results_roundtrip(tmp_path):
    row = TrialResult(3, 99, "abc", "dslp", "zero", 1.5, math.nan, True, 0.1, 1e-16, 2.0, "ok")
    p = write_results([row], tmp_path / "r.csv")
    back = read_results(p)[0]
    assert back.err1 == 1.5 and math.isnan(back.err2) and back.cl_stable and back.constraint_residual == 1e-16
    with open(p) as fh:
        assert fh.readline().strip().split(",") == list(RESULT_COLUMNS)


def test_malformed_results(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("trial,seed\n1,2\n")
    with pytest.raises(MalformedResults):
        read_results(bad)
    cols = ",".join(RESULT_COLUMNS)
    bad.write_text(cols + "\nx,1,h,dslp,zero,1,1,true,0,0,0,ok\n")
    with pytest.raises(MalformedResults):
        read_results(bad)
    with pytest.raises(MalformedResults):
        read_results(tmp_path / "missing.csv")


def test_five_number_summary():
    f = FiveNumber.of([5, 1, 4, 2, 3])
    assert (f.min, f.q1, f.median, f.q3, f.max) == (1, 2, 3, 4, 5)
    c = FiveNumber.of([7.0] * 9)
    assert (c.min, c.q1, c.median, c.q3, c.max) == (7.0,) * 5
    assert all(math.isnan(x) for x in vars(FiveNumber.of([])).values())


def test_summary_counts_failures():
    rows = [TrialResult(t, 0, "h", "coprime", "g0", status="UnstableFilter") for t in range(3)]
    rows += [TrialResult(t, 0, "h", "dslp", "g0", err1=float(t), err2=1.0, cl_stable=True) for t in range(3)]
    s = {x.method: x for x in summarize_rows(rows)}
    assert s["coprime"].n_failed == 3 and math.isnan(s["coprime"].err1.median)
    assert s["dslp"].n == 3 and s["dslp"].stable == 3 and s["dslp"].err1.median == 1.0


def test_sweep_checks(tmp_path):
    cfg = load_config(small_config(tmp_path))
    with pytest.raises(LengthTooShort):
        convergence_sweep(cfg, [5, 100])
    with pytest.raises(ValueError):
        convergence_sweep(cfg, [200, 100])
    pts = convergence_sweep(cfg.replace(trials=2, methods=("dslp",)), [127, 254])
    assert [p.length for p in pts] == [127, 254]
    assert all(p.n_ok == 2 for p in pts)


def test_preset_toml_roundtrip(tmp_path):
    for name in ("benchmark", "benchmark_proper"):
        p = tmp_path / f"{name}.toml"
        p.write_text(preset_toml(name))
        a, b = load_config(p), preset(name)
        assert a.horizon == b.horizon and a.seed == b.seed and a.trials == b.trials
        assert [n.label for n in a.nominals] == [n.label for n in b.nominals]
        np.testing.assert_array_equal(a.controller.num.coeffs, b.controller.num.coeffs)
        assert a.allow_unstabilized_nominal


def test_config_errors():
    with pytest.raises(ConfigError):
        config_from_dict({})
    base = {"plant": {"num": [1], "den": [1, 1]}, "controller": {"num": [1], "den": [0, 1]},
            "noise_filter": {"num": [1], "den": [1]}}
    config_from_dict(base)
    with pytest.raises(ConfigError):
        config_from_dict({**base, "estimation": {"methods": ["magic"]}})
    with pytest.raises(ConfigError):
        config_from_dict({**base, "excitation": {"colour": "red"}})
    with pytest.raises(ConfigError):
        config_from_dict({**base, "estimation": {"nominals": ["zero", "zero"]}})
    with pytest.raises(ConfigError):
        preset("nope")


def test_cli_success_and_summary(tmp_path, capsys):
    cfg = small_config(tmp_path)
    out, summ = tmp_path / "res.csv", tmp_path / "sum.csv"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--summary", str(summ)]) == 0
    assert len(read_results(out)) == 3 * 2
    assert summ.exists() and summ.with_suffix(".dat").exists()
    assert main(["summarize", "--in", str(out), "--out", str(tmp_path / "s2.csv")]) == 0
    assert summ.read_text() == (tmp_path / "s2.csv").read_text()


def test_cli_seed_override_changes_data(tmp_path):
    cfg = small_config(tmp_path, methods='["dslp"]')
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a.csv")])
    main(["run", "--config", str(cfg), "--seed", "43", "--out", str(tmp_path / "b.csv")])
    ha = {r.dataset_hash for r in read_results(tmp_path / "a.csv")}
    hb = {r.dataset_hash for r in read_results(tmp_path / "b.csv")}
    assert ha.isdisjoint(hb)


def test_cli_config_error_exit(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path / "x.csv")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("nonsense\n")
    assert main(["summarize", "--in", str(bad), "--out", str(tmp_path / "s.csv")]) == 2
    cfg = small_config(tmp_path)
    assert main(["sweep", "--config", str(cfg), "--lengths", "3,100", "--out", str(tmp_path / "w.csv")]) == 2


def test_cli_unstable_loop_exit(tmp_path):
    cfg = small_config(tmp_path, k0=-0.8, k1=1.0)  # +(z - 0.8)/z^2 destabilizes the loop
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 3


def test_cli_partial_failure_exit(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    assert main(["run", "--preset", "benchmark", "--trials", "1", "--out", str(out)]) == 4
    assert "UnstableFilter" in capsys.readouterr().err
    assert len(read_results(out)) == 10


def test_cli_presets_and_simulate(tmp_path, capsys):
    assert main(["presets"]) == 0
    assert "benchmark_proper" in capsys.readouterr().out
    assert main(["presets", "--show", "benchmark"]) == 0
    assert "[controller]" in capsys.readouterr().out
    out = tmp_path / "data.csv"
    assert main(["simulate", "--preset", "benchmark", "--trial", "2", "--out", str(out)]) == 0
    assert out.exists()

import csv
import io
import json
import math
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from darksqueeze.cli import (
    EXIT_CONFIG,
    EXIT_NUMERIC,
    EXIT_OK,
    SWEEP_FIELDS,
    ConfigError,
    RunConfig,
    SweepSpec,
    main,
    worker_count,
)
from darksqueeze.dynamics import TimeSeries

CONF = str(Path(__file__).resolve().parents[1] / "configs" / "benchmark.conf")
G = 50.0
ANG = 2 * math.pi * 1e-3


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(out):
    rows = {}
    for line in out.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            rows[k.strip()] = v.split()[0]
    return rows


class TestConfig:
    def test_round_trip_default(self):
        cfg = RunConfig()
        assert RunConfig.parse(cfg.serialize()) == cfg

    @settings(max_examples=40, deadline=None)
    @given(st.floats(min_value=-1e7, max_value=1e7, allow_nan=False).filter(lambda x: x != 0),
           st.integers(min_value=1, max_value=10 ** 7), st.booleans(),
           st.sampled_from(["linear", "sine_squared", "tanh"]), st.one_of(st.none(), st.floats(0, 1e3)))
    def test_round_trip(self, d1, n, open_sys, shape, da):
        cfg = RunConfig(delta1_kHz=d1, n_atoms=n, open_system=open_sys, shape=shape, delta_a_kHz=da)
        assert RunConfig.parse(cfg.serialize()) == cfg

    def test_comments_and_overrides(self):
        cfg = RunConfig.parse("# header\nn_atoms = 10000  # ten thousand\n\n", ["n_steps=50"])
        assert cfg.n_atoms == 10_000 and cfg.n_steps == 50

    def test_benchmark_file(self):
        cfg = RunConfig.parse(Path(CONF).read_text()).validate()
        assert cfg.physical_params().delta_a == pytest.approx(100.0)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key 'bogus'"):
            RunConfig.parse("bogus = 1")

    @pytest.mark.parametrize("text", ["n_atoms = 1.5", "open_system = maybe", "kappa_kHz = nan", "no equals"])
    def test_bad_values(self, text):
        with pytest.raises(ConfigError):
            RunConfig.parse(text)

    @pytest.mark.parametrize("override,msg", [
        ("shape=cubic", "shape"), ("level=quantum", "level"), ("branch=up", "branch"), ("n_steps=3", "n_steps"),
    ])
    def test_validation_names_key(self, override, msg):
        with pytest.raises(ConfigError, match=msg):
            RunConfig.parse("", [override]).validate()

    def test_worker_count(self, monkeypatch):
        monkeypatch.setenv("DARKSQUEEZE_THREADS", "2")
        assert worker_count(10) == 2
        assert worker_count(1) == 1
        monkeypatch.setenv("DARKSQUEEZE_THREADS", "x")
        with pytest.raises(ConfigError):
            worker_count(3)


class TestDerive:
    def test_benchmark_table(self, capsys):
        code, out, _ = run(capsys, "derive", CONF)
        assert code == EXIT_OK
        t = table(out)
        assert t["lambda1"] == "0.2500"
        assert t["lambda2"] == "0.2000"
        assert t["r"] == "1.0986"
        assert t["mu_max"] == "250.00"
        assert t["mu_min"] == "150.00"
        assert "2pi kHz" in out

    def test_no_drive(self, capsys):
        code, out, _ = run(capsys, "derive", CONF, "--set", "omega2_max_kHz=0")
        assert code == EXIT_OK and table(out)["r"] == "0.0000"

    def test_zero_detuning(self, capsys):
        code, _, err = run(capsys, "derive", CONF, "--set", "delta1_kHz=0")
        assert code == EXIT_CONFIG
        assert "delta1 must be nonzero" in err

    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "derive", "/nonexistent.conf")
        assert code == EXIT_CONFIG and "cannot read config" in err


class TestBudget:
    def test_benchmark(self, capsys, tmp_path):
        out_path = tmp_path / "budget.csv"
        code, out, _ = run(capsys, "budget", CONF, "-o", str(out_path))
        assert code == EXIT_OK
        row = next(csv.DictReader(out_path.open()))
        assert float(row["P_b"]) == pytest.approx(4.64e-3, rel=0.02)
        assert float(row["total_error"]) == pytest.approx(3.28e-2, rel=0.02)
        assert float(row["kappa_e"]) == pytest.approx(0.116, rel=0.02)
        assert float(row["gamma_e"]) == pytest.approx(0.048, rel=0.02)

    def test_doubled_T(self, capsys, tmp_path):
        vals = []
        for T in (31.830988618379067, 2 * 31.830988618379067):
            p = tmp_path / f"b{T}.csv"
            assert run(capsys, "budget", CONF, "--set", f"t_total_us={T}", "-o", str(p))[0] == EXIT_OK
            vals.append(float(next(csv.DictReader(p.open()))["P_b"]))
        assert vals[1] == pytest.approx(vals[0] / 4, rel=0.05)

    def test_zero_delta_a(self, capsys):
        code, _, err = run(capsys, "budget", CONF, "--set", "delta_a_kHz=0")
        assert code == EXIT_CONFIG
        assert "delta_a must be positive for budget" in err


class TestEvolve:
    def test_benchmark_run(self, capsys, tmp_path):
        path = tmp_path / "ts.csv"
        code, out, _ = run(capsys, "evolve", CONF, "-o", str(path))
        assert code == EXIT_OK
        summary = dict(kv.split("=") for kv in out.split())
        assert float(summary["final_fidelity"]) >= 0.995
        lines = path.read_text().splitlines()
        assert lines[0] == TimeSeries.CSV_HEADER
        assert len(lines) == 1 + 1 + 400 // 10
        rows = list(csv.DictReader(io.StringIO(path.read_text())))
        assert list(rows[0]) == TimeSeries.CSV_HEADER.split(",")
        # full precision: repr round-trips, so at least 12 significant digits survive
        t = rows[7]["t_us"]
        assert float(t) == pytest.approx(7 * 10 * 31.830988618379067 / 400, rel=1e-14)

    def test_no_drive(self, capsys, tmp_path):
        path = tmp_path / "ts.csv"
        code, _, _ = run(capsys, "evolve", CONF, "--set", "omega2_max_kHz=0", "--set", "n_steps=20",
                         "--set", "record_every=5", "--set", "b_dim=6", "-o", str(path))
        assert code == EXIT_OK
        for row in csv.DictReader(path.open()):
            assert f"{float(row['fidelity']):.6f}" == "1.000000"
            assert abs(float(row["n_a"])) < 1e-12 and abs(float(row["n_b"])) < 1e-12

    def test_truncation_breach(self, capsys):
        code, _, err = run(capsys, "evolve", CONF, "--set", "truncation_tol=1e-12", "--set", "b_dim=5",
                           "--set", "cavity_dim=3", "--set", "n_steps=40")
        assert code == EXIT_NUMERIC
        assert "truncation" in err

    def test_above_threshold_is_config_error(self, capsys):
        code, _, _ = run(capsys, "evolve", CONF, "--set", "omega2_max_kHz=6000")
        assert code == EXIT_CONFIG


class TestSweep:
    def test_T_sweep_order_and_leakage(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("DARKSQUEEZE_THREADS", "2")
        grid = [k / (G * ANG) for k in (5, 10, 20)]
        path = tmp_path / "sweep.csv"
        code, _, _ = run(capsys, "sweep", CONF, "--param", "t_total_us", "--values",
                         ",".join(repr(v) for v in grid), "--set", "shape=linear", "--set", "cavity_dim=6",
                         "--set", "b_dim=40", "--set", "truncation_tol=1e-3", "-o", str(path))
        assert code == EXIT_OK
        rows = list(csv.DictReader(path.open()))
        assert list(rows[0]) == ["t_total_us", *SWEEP_FIELDS]
        assert [float(r["t_total_us"]) for r in rows] == grid
        leak = [float(r["leakage"]) for r in rows]
        assert leak[0] > leak[1] > leak[2]

    def test_failing_point_flagged(self, capsys, tmp_path):
        path = tmp_path / "sweep.csv"
        code, _, _ = run(capsys, "sweep", CONF, "--param", "omega2_max_kHz", "--values", "0,6000",
                         "--set", "n_steps=20", "--set", "record_every=10", "--set", "b_dim=6", "-o", str(path))
        assert code == EXIT_OK
        rows = list(csv.DictReader(path.open()))
        assert rows[0]["valid"] == "true" and rows[1]["valid"] == "false"
        assert rows[1]["error"]

    def test_empty_grid(self, capsys):
        code, _, err = run(capsys, "sweep", CONF, "--param", "t_total_us", "--values", "")
        assert code == EXIT_CONFIG and "empty" in err

    def test_unknown_parameter(self):
        with pytest.raises(ConfigError):
            SweepSpec("nope", (1.0,))

    def test_nonfinite_grid(self):
        with pytest.raises(ConfigError):
            SweepSpec("t_total_us", (float("inf"),))


class TestOracle:
    def test_negative_controls(self, capsys, tmp_path):
        path = tmp_path / "oracle.jsonl"
        code, out, _ = run(capsys, "oracle", CONF, "--negative-controls", "--set", "cavity_dim=12",
                           "--set", "b_dim=30", "-o", str(path))
        assert code == EXIT_OK
        assert "FAIL (expected)" in out
        recs = [json.loads(line) for line in path.read_text().splitlines()]
        bog = [r for r in recs if r["name"].startswith("neg_bogoliubov")]
        assert bog and bog[0]["expect_fail"] and bog[0]["value"] > 1e-2

    def test_transformed_dispatch(self, capsys):
        code, out, _ = run(capsys, "oracle", CONF, "--set", "level=transformed", "--set", "cavity_dim=12",
                           "--set", "b_dim=30")
        assert code == EXIT_OK
        assert "gap_numeric_vs_analytic" in out

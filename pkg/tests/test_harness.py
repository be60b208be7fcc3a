import os
import textwrap

import numpy as np
import pytest

from runkm.cli import main
from runkm.harness import (TRACE_COLUMNS, ConfigError, fmt, load_config, parse_config, read_trace,
                           run_experiment, summarize_traces)

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

QUAD = """
[experiment]
scenario = drifting_quadratic
horizon = {T}
seeds = 0

[grid]
sigma = {sigma}
e_y = {e_y}

[scenario]
dim = 3
K = 2.0
k = 0.5
"""


def write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


@pytest.fixture
def quad_config(tmp_path):
    return write(tmp_path, QUAD.format(T=40, sigma="0.0, 0.05", e_y="0.0, 0.1"))


class TestConfig:
    def test_parse(self, quad_config):
        cfg = load_config(quad_config)
        assert cfg.scenario == "drifting_quadratic" and cfg.horizon == 40
        assert cfg.sigmas == [0.0, 0.05] and cfg.e_ys == [0.0, 0.1]
        assert len(cfg.cells()) == 4

    def test_bad_value_names_line_and_field(self, tmp_path):
        path = write(tmp_path, QUAD.format(T="ten", sigma="0", e_y="0"))
        with pytest.raises(ConfigError, match=r"line 4: \[experiment\] horizon"):
            load_config(path)

    def test_unknown_key(self, tmp_path):
        path = write(tmp_path, QUAD.format(T=5, sigma="0", e_y="0") + "colour = red\n")
        with pytest.raises(ConfigError, match=r"\[scenario\] colour"):
            load_config(path)

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError, match="unknown scenario"):
            parse_config("[experiment]\nscenario = nope\n")

    def test_network_levels(self):
        with pytest.raises(ConfigError, match="preset"):
            parse_config("[experiment]\nscenario = network\n[grid]\nsigma = 0.5\ne_y = low\n")
        with pytest.raises(ConfigError, match="low"):
            parse_config("[experiment]\nscenario = network\n[grid]\nsigma = 0.7\ne_y = 0.1\n")

    def test_horizon_positive(self):
        with pytest.raises(ConfigError, match="horizon"):
            parse_config("[experiment]\nscenario = network\nhorizon = 0\n")

    def test_shipped_configs_parse(self):
        for name in os.listdir(CONFIGS):
            load_config(os.path.join(CONFIGS, name))


class TestTraces:
    def test_three_step_file(self, tmp_path):
        path = write(tmp_path, QUAD.format(T=3, sigma="0.01", e_y="0.1"))
        res = run_experiment(load_config(path), out_dir=str(tmp_path / "out"))
        lines = open(res[0].path, newline="").read().split("\n")
        assert lines[-1] == "" and len(lines) == 5
        assert lines[0] == ",".join(TRACE_COLUMNS)
        assert "\r" not in "".join(lines)

    def test_static_exact_tracking_non_increasing(self, tmp_path):
        path = write(tmp_path, QUAD.format(T=60, sigma="0", e_y="0"))
        res = run_experiment(load_config(path), out_dir=str(tmp_path / "out"))
        d = read_trace(res[0].path)
        assert np.all(np.diff(d["tracking_error"]) <= 0)

    def test_column_consistency(self, tmp_path, quad_config):
        res = run_experiment(load_config(quad_config), out_dir=str(tmp_path / "out"))
        for r in res:
            d = read_trace(r.path)
            deltas = np.diff(np.concatenate([[0.0], d["thm1_cum_lhs"]]))
            recon = d["alpha_t"] * (1 - d["alpha_t"]) * d["residual_T"] ** 2
            assert np.allclose(deltas, recon, rtol=1e-9, atol=1e-12)

    def test_one_cell_static_slack(self, tmp_path):
        path = write(tmp_path, QUAD.format(T=30, sigma="0", e_y="0"))
        r = run_experiment(load_config(path))[0]
        d0sq = r.run.initial_distance ** 2
        assert r.summary.thm1_slack == pytest.approx(d0sq - r.ledger.residual.cum_lhs[-1])
        assert r.summary.thm1_slack > 0

    def test_number_format(self):
        assert fmt(1.0) == "1.00000000000"
        assert fmt(123456.7890123456) == "123456.789012"
        assert fmt(np.nan) == "nan"
        assert "e" not in fmt(1.5e-20)


class TestDeterminism:
    def test_repeat_and_parallel_identical(self, tmp_path, quad_config):
        cfg = load_config(quad_config)
        run_experiment(cfg, out_dir=str(tmp_path / "a"))
        run_experiment(cfg, out_dir=str(tmp_path / "b"))
        run_experiment(cfg, out_dir=str(tmp_path / "c"), parallel=2)
        names = sorted(os.listdir(tmp_path / "a"))
        assert names == sorted(os.listdir(tmp_path / "c")) and len(names) == 5
        for n in names:
            a = (tmp_path / "a" / n).read_bytes()
            assert a == (tmp_path / "b" / n).read_bytes() == (tmp_path / "c" / n).read_bytes()


class TestCli:
    def test_check_shipped(self, capsys):
        for name in sorted(os.listdir(CONFIGS)):
            assert main(["check", "--config", os.path.join(CONFIGS, name)]) == 0

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["run", "--bogus"])
        assert err.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_bad_config_exit_2(self, tmp_path, capsys):
        path = write(tmp_path, QUAD.format(T="x", sigma="0", e_y="0"))
        assert main(["check", "--config", path]) == 2

    def test_step_too_large(self, tmp_path, capsys):
        path = write(tmp_path, QUAD.format(T=5, sigma="0", e_y="0").replace("seeds = 0", "seeds = 0\nnu = 1.0"))
        assert main(["run", "--config", path, "--out", str(tmp_path / "out")]) == 1
        assert "sigma0_ey0" in capsys.readouterr().err
        assert main(["check", "--config", path]) == 1

    def test_run_ok_and_summarize(self, tmp_path, quad_config, capsys):
        out = str(tmp_path / "out")
        assert main(["run", "--config", quad_config, "--out", out, "--seed", "3"]) == 0
        capsys.readouterr()
        assert main(["summarize", out]) == 0
        rows = capsys.readouterr().out.strip().split("\n")
        assert len(rows) == 1 + 4
        assert all("seed3" in r for r in rows[1:])

    def test_summarize_flags_violation(self, tmp_path, quad_config, capsys):
        out = tmp_path / "out"
        main(["run", "--config", quad_config, "--out", str(out)])
        trace = sorted(p for p in os.listdir(out) if p.startswith("trace_"))[0]
        text = (out / trace).read_text().split("\n")
        cols = text[1].split(",")
        cols[TRACE_COLUMNS.index("thm1_cum_rhs")] = "0.0"
        cols[TRACE_COLUMNS.index("thm1_cum_lhs")] = "5.0"
        text[1] = ",".join(cols)
        (out / trace).write_text("\n".join(text))
        assert main(["summarize", str(out)]) == 1

    def test_summarize_rows(self, tmp_path):
        rows = summarize_traces(str(tmp_path)) if os.path.isdir(tmp_path) else []
        assert rows == []

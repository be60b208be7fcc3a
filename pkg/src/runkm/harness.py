"""
Configuration-driven experiment grids.

A config file (INI syntax) names a scenario, a horizon, a grid of drift
levels ``sigma`` and gradient-error levels ``e_y``, and a list of seeds. Each
(cell, seed) pair is one tracking run; its trace is written as CSV and its
bound ledger is evaluated. Example::

    [experiment]
    scenario = drifting_quadratic
    horizon = 500
    seeds = 0, 1, 2
    out = results/quadratic

    [grid]
    sigma = 0.0, 0.01
    e_y = 0.0, 0.1

    [scenario]
    dim = 5
    K = 2.0
    k = 0.5

Grid values mean, per scenario:

* ``drifting_quadratic`` / ``forward_backward``: ``sigma`` is the per-step
  move of the quadratic's center and ``e_y`` the norm bound of an additive
  gradient perturbation.
* ``network``: ``sigma`` selects a calibrated variance preset and ``e_y``
  is ``low`` or ``high``, mapped to the bandit evaluation counts
  ``n_evals_low`` / ``n_evals_high``.
"""

import configparser
import csv
import io
import logging
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .network import PRESETS, NetworkScenario, preset
from .problems import L1Norm, NoisyGradient, make_drifting_quadratic
from .rng import step_rng
from .sets import Ball, Box
from .tracker import bound_ledger, run_inexact_km

log = logging.getLogger(__name__)

SCENARIOS = ("drifting_quadratic", "forward_backward", "network")
TRACE_COLUMNS = ("t", "residual_F", "residual_T", "tracking_error", "sigma_t", "e_T_t",
                 "alpha_t", "thm1_cum_lhs", "thm1_cum_rhs", "thm2_bound")
SUMMARY_FILE = "summary.csv"

_SCENARIO_KEYS = {
    "drifting_quadratic": {"dim": int, "K": float, "k": float, "constraint": str,
                           "radius": float, "init_scale": float},
    "forward_backward": {"dim": int, "K": float, "k": float, "l1_weight": float,
                         "radius": float, "init_scale": float},
    "network": {"delta": float, "n_evals_low": int, "n_evals_high": int},
}
_SCENARIO_DEFAULTS = {
    "drifting_quadratic": {"dim": 5, "K": 2.0, "k": 0.5, "constraint": "none",
                           "radius": 1.0, "init_scale": 1.0},
    "forward_backward": {"dim": 5, "K": 2.0, "k": 0.5, "l1_weight": 0.1,
                         "radius": 2.0, "init_scale": 1.0},
    "network": {"delta": 0.05, "n_evals_low": 64, "n_evals_high": 4},
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the line and field."""


@dataclass
class ExperimentConfig:
    scenario: str
    horizon: int
    seeds: list
    sigmas: list
    e_ys: list
    nu: float = None
    out: str = "results"
    params: dict = field(default_factory=dict)
    fixed_point_tol: float = 1e-11
    fixed_point_max_iter: int = 1_000_000
    exact_magnitude: bool = False
    source: str = None

    def cells(self):
        """Grid cells ``(index, sigma, e_y)`` in row-major order."""
        out = []
        for sigma in self.sigmas:
            for e_y in self.e_ys:
                out.append((len(out), sigma, e_y))
        return out


@dataclass
class RunSummary:
    cell: str
    sigma: str
    e_y: str
    seed: int
    horizon: int
    mean_sq_residual_F: float = np.nan
    mean_sq_residual_T: float = np.nan
    thm1_slack: float = np.nan
    thm2_min_slack: float = np.nan
    tracking_ball: float = np.nan
    terminal_tracking_error: float = np.nan
    ledger_ok: bool = False
    violation: str = ""
    error: str = ""
    wall_time: float = np.nan


SUMMARY_COLUMNS = tuple(f.name for f in fields(RunSummary) if f.name != "wall_time")


@dataclass
class CellResult:
    summary: RunSummary
    run: object = None
    ledger: object = None
    path: str = None


# ---------------------------------------------------------------------------
# config parsing

def _line_of(text, section, key=None):
    sec = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            sec = m.group(1).strip()
            if key is None and sec == section:
                return i
            continue
        if sec == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s, re.I):
            return i
    return None


def _fail(path, text, section, key, msg):
    line = _line_of(text, section, key) if text is not None else None
    where = f"{path or '<config>'}" + (f": line {line}" if line else "")
    name = f"[{section}] {key}" if key else f"[{section}]"
    raise ConfigError(f"{where}: {name}: {msg}")


def _convert(path, text, section, key, raw, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "yes", "1")
        return kind(raw.strip())
    except ValueError:
        _fail(path, text, section, key, f"expected {kind.__name__}, got {raw!r}")


def _list(path, text, section, key, raw, kind):
    items = [s for s in re.split(r"[,\s]+", raw.strip()) if s]
    if not items:
        _fail(path, text, section, key, "empty list")
    return [_convert(path, text, section, key, s, kind) for s in items]


def parse_config(text, path=None):
    """Parse config text into an :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.Error as err:
        raise ConfigError(f"{path or '<config>'}: {err}") from err
    known = {"experiment", "grid", "scenario", "oracle"}
    for sec in cp.sections():
        if sec not in known:
            _fail(path, text, sec, None, f"unknown section (expected one of {sorted(known)})")
    if not cp.has_section("experiment"):
        raise ConfigError(f"{path or '<config>'}: missing [experiment] section")
    exp = cp["experiment"]
    allowed = {"scenario", "horizon", "seeds", "nu", "out"}
    for key in exp:
        if key not in allowed:
            _fail(path, text, "experiment", key, "unknown key")
    scenario = exp.get("scenario")
    if scenario is None:
        _fail(path, text, "experiment", None, "missing key 'scenario'")
    scenario = scenario.strip()
    if scenario not in SCENARIOS:
        _fail(path, text, "experiment", "scenario", f"unknown scenario {scenario!r}; "
              f"expected one of {list(SCENARIOS)}")
    horizon = _convert(path, text, "experiment", "horizon", exp.get("horizon", "100"), int)
    if horizon < 1:
        _fail(path, text, "experiment", "horizon", "must be >= 1")
    seeds = _list(path, text, "experiment", "seeds", exp.get("seeds", "0"), int)
    if any(s < 0 for s in seeds):
        _fail(path, text, "experiment", "seeds", "seeds must be non-negative")
    nu = None
    if "nu" in exp:
        nu = _convert(path, text, "experiment", "nu", exp["nu"], float)
        if nu <= 0:
            _fail(path, text, "experiment", "nu", "must be positive")
    out = exp.get("out", "results").strip()

    grid = cp["grid"] if cp.has_section("grid") else {}
    for key in grid:
        if key not in ("sigma", "e_y"):
            _fail(path, text, "grid", key, "unknown key")
    sigmas = _list(path, text, "grid", "sigma", grid.get("sigma", "0"), float)
    if scenario == "network":
        e_ys = _list(path, text, "grid", "e_y", grid.get("e_y", "low"), str)
        for s in sigmas:
            if s not in PRESETS:
                _fail(path, text, "grid", "sigma",
                      f"no network preset for sigma={s:g}; available: {sorted(PRESETS)}")
        for e in e_ys:
            if e not in ("low", "high"):
                _fail(path, text, "grid", "e_y", f"network error levels are 'low' or 'high', got {e!r}")
    else:
        e_ys = _list(path, text, "grid", "e_y", grid.get("e_y", "0"), float)
        if any(v < 0 for v in sigmas + e_ys):
            _fail(path, text, "grid", "sigma" if any(v < 0 for v in sigmas) else "e_y",
                  "levels must be non-negative")

    params = dict(_SCENARIO_DEFAULTS[scenario])
    if cp.has_section("scenario"):
        for key, raw in cp["scenario"].items():
            kinds = _SCENARIO_KEYS[scenario]
            if key not in kinds:
                _fail(path, text, "scenario", key, f"unknown key for scenario {scenario!r}")
            params[key] = _convert(path, text, "scenario", key, raw, kinds[key])
    _validate_params(path, text, scenario, params)

    cfg = ExperimentConfig(scenario, horizon, seeds, sigmas, e_ys, nu, out, params, source=path)
    if cp.has_section("oracle"):
        orc = cp["oracle"]
        kinds = {"fixed_point_tol": float, "fixed_point_max_iter": int, "exact_magnitude": bool}
        for key, raw in orc.items():
            if key not in kinds:
                _fail(path, text, "oracle", key, "unknown key")
            setattr(cfg, key, _convert(path, text, "oracle", key, raw, kinds[key]))
        if cfg.fixed_point_tol <= 0:
            _fail(path, text, "oracle", "fixed_point_tol", "must be positive")
    return cfg


def _validate_params(path, text, scenario, p):
    if scenario == "network":
        if p["delta"] <= 0 or p["delta"] >= 1:
            _fail(path, text, "scenario", "delta", "must lie in (0, 1)")
        for key in ("n_evals_low", "n_evals_high"):
            if p[key] < 2:
                _fail(path, text, "scenario", key, "need at least 2 evaluations")
        return
    if p["dim"] < 1:
        _fail(path, text, "scenario", "dim", "must be >= 1")
    if not 0 < p["k"] <= p["K"]:
        _fail(path, text, "scenario", "k", "need 0 < k <= K")
    if p["radius"] <= 0:
        _fail(path, text, "scenario", "radius", "must be positive")
    if scenario == "drifting_quadratic" and p["constraint"] not in ("none", "box", "ball"):
        _fail(path, text, "scenario", "constraint", "expected none, box or ball")


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config(text, path)


# ---------------------------------------------------------------------------
# building and running cells

def _fmt_level(v):
    return v if isinstance(v, str) else f"{v:g}"


def cell_name(sigma, e_y):
    return f"sigma{_fmt_level(sigma)}_ey{_fmt_level(e_y)}"


def _quadratic_setup(cfg, sigma, e_y, seed, horizon):
    p = cfg.params
    m = p["dim"]
    rng = step_rng(seed, 0)
    direction = rng.standard_normal(m)
    direction /= np.linalg.norm(direction)
    center0 = rng.standard_normal(m)
    x1 = center0 + p["init_scale"] * rng.standard_normal(m)
    if cfg.scenario == "forward_backward":
        X = Box(-p["radius"] * np.ones(m), p["radius"] * np.ones(m))
        g = L1Norm(p["l1_weight"])
    else:
        X = {"none": None, "box": Box(-p["radius"] * np.ones(m), p["radius"] * np.ones(m)),
             "ball": Ball(np.zeros(m), p["radius"])}[p["constraint"]]
        g = None
    prob = make_drifting_quadratic(m, sigma * direction, p["K"], p["k"], horizon,
                                   seed=int(rng.integers(2 ** 32)), center0=center0,
                                   constraint=X, g=g)
    nu = cfg.nu if cfg.nu is not None else 1.0 / p["K"]
    oracle = NoisyGradient(e_y, seed=int(step_rng(seed, 1).integers(2 ** 63)),
                           exact_magnitude=cfg.exact_magnitude) if e_y > 0 else None
    return prob.operators(nu, oracle), x1, prob.fixed_points


def _network_setup(cfg, sigma, e_y, seed, horizon):
    p = cfg.params
    n = p["n_evals_low"] if e_y == "low" else p["n_evals_high"]
    sc = NetworkScenario(preset(sigma, seed=seed, n_evals=n, delta=p["delta"]), horizon, nu=cfg.nu)
    P = sc.fixed_points
    return sc.operators(), P[0], P


def build_cell(cfg, sigma, e_y, seed, horizon=None):
    """``(operator sequence, x_1, fixed points or None)`` for one grid cell."""
    horizon = cfg.horizon if horizon is None else horizon
    if cfg.scenario == "network":
        return _network_setup(cfg, sigma, e_y, seed, horizon)
    return _quadratic_setup(cfg, sigma, e_y, seed, horizon)


def _summarize(name, sigma, e_y, seed, run, ledger):
    R, K = ledger.residual, ledger.tracking
    viol = ledger.violations()
    return RunSummary(
        cell=name, sigma=_fmt_level(sigma), e_y=_fmt_level(e_y), seed=seed, horizon=run.horizon,
        mean_sq_residual_F=R.mean_sq_residual_F, mean_sq_residual_T=R.mean_sq_residual_T,
        thm1_slack=R.slack, thm2_min_slack=K.min_slack,
        tracking_ball=K.ball if K.ball is not None else np.nan,
        terminal_tracking_error=float(run.tracking_error[-1]),
        ledger_ok=ledger.satisfied,
        violation=";".join(f"{b}@t={t}" for b, t in viol))


def run_cell(cfg, index, sigma, e_y, seed, out_dir=None):
    """One (cell, seed) run; exceptions are recorded in the summary, not raised."""
    name = cell_name(sigma, e_y)
    t0 = time.perf_counter()
    res = CellResult(RunSummary(name, _fmt_level(sigma), _fmt_level(e_y), seed, cfg.horizon))
    try:
        seq, x1, P = build_cell(cfg, sigma, e_y, seed)
        run = run_inexact_km(seq, x1, fixed_points=P, fixed_point_tol=cfg.fixed_point_tol,
                             fixed_point_max_iter=cfg.fixed_point_max_iter)
        ledger = bound_ledger(run)
        res = CellResult(_summarize(name, sigma, e_y, seed, run, ledger), run, ledger)
        if out_dir is not None:
            res.path = os.path.join(out_dir, f"trace_{name}_seed{seed}.csv")
            write_csv(run, ledger, res.path)
    except Exception as err:   # collected per cell so the grid keeps going
        step = getattr(err, "step", None)
        res.summary.error = f"{type(err).__name__}: {err}" + (f" (t={step})" if step else "")
    res.summary.wall_time = time.perf_counter() - t0
    return res


def _run_job(args):
    cfg, index, sigma, e_y, seed, out_dir, keep = args
    res = run_cell(cfg, index, sigma, e_y, seed, out_dir)
    if not keep:
        res.run = res.ledger = None
    return res


def run_experiment(cfg, out_dir=None, seeds=None, parallel=1, keep_runs=True):
    """
    Run every (cell, seed) pair of the grid.

    Results come back in grid order (cells row-major, then seeds) whatever
    the degree of parallelism. With ``out_dir`` a trace CSV per run and a
    ``summary.csv`` are written.
    """
    seeds = cfg.seeds if seeds is None else list(seeds)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    jobs = [(cfg, i, s, e, seed, out_dir, keep_runs)
            for i, s, e in cfg.cells() for seed in seeds]
    if parallel and parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            results = list(ex.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    for r in results:
        s = r.summary
        log.info("cell %s seed %d: %.3fs%s", s.cell, s.seed, s.wall_time,
                 f" error: {s.error}" if s.error else "")
    if out_dir is not None:
        write_summary([r.summary for r in results], os.path.join(out_dir, SUMMARY_FILE))
    return results


def check_experiment(cfg):
    """Build the first step of every cell without running; returns a list of problems."""
    problems = []
    for _, sigma, e_y in cfg.cells():
        for seed in cfg.seeds[:1]:
            try:
                seq, x1, _ = build_cell(cfg, sigma, e_y, seed, horizon=1)
                seq.validate()
            except Exception as err:
                problems.append(f"cell {cell_name(sigma, e_y)}: {type(err).__name__}: {err}")
    return problems


# ---------------------------------------------------------------------------
# CSV output

def fmt(v):
    """Decimal notation with 12 significant digits."""
    v = float(v)
    if not np.isfinite(v):
        return "nan" if np.isnan(v) else ("inf" if v > 0 else "-inf")
    return np.format_float_positional(v, precision=12, unique=False, fractional=False, trim="k")


def trace_rows(run, ledger):
    """Rows of the trace table; row ``t`` describes ``x_t`` and step ``t``."""
    R, K = ledger.residual, ledger.tracking
    bound = np.concatenate([[run.initial_distance], K.bound[:-1]])
    for i in range(run.horizon):
        yield (i + 1, run.residual_F[i], run.residual_T[i], run.tracking_error[i],
               run.sigma[i], run.e_T[i], run.alpha[i], R.cum_lhs[i], R.cum_rhs[i], bound[i])


def write_csv(run, ledger, path):
    """Write the per-step trace with the columns of :data:`TRACE_COLUMNS`."""
    buf = io.StringIO()
    buf.write(",".join(TRACE_COLUMNS) + "\n")
    for row in trace_rows(run, ledger):
        buf.write(",".join([str(row[0])] + [fmt(v) for v in row[1:]]) + "\n")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(buf.getvalue())
    except OSError as err:
        raise OSError(f"cannot write trace {path}: {err}") from err
    return path


def _summary_cell(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return str(v)


def write_summary(summaries, path):
    """Summary table; wall time is left out so the file is reproducible."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for s in summaries:
        d = asdict(s)
        w.writerow([_summary_cell(d[c]) for c in SUMMARY_COLUMNS])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())
    return path


def read_trace(path):
    """Trace CSV as a dict of column arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    return {c: data[:, i] for i, c in enumerate(header)}


def summarize_traces(directory, rtol=1e-7):
    """
    Recompute one summary row per trace file in ``directory``.

    Returns a list of dicts with the trace name, mean squared residuals, the
    final cumulative slack, the smallest tracking slack, and whether both are
    non-negative up to ``rtol``.
    """
    rows = []
    names = sorted(f for f in os.listdir(directory) if f.startswith("trace_") and f.endswith(".csv"))
    for name in names:
        d = read_trace(os.path.join(directory, name))
        slack1 = d["thm1_cum_rhs"] - d["thm1_cum_lhs"]
        slack2 = d["thm2_bound"] - d["tracking_error"]
        ok1 = bool(np.all(slack1 >= -rtol * np.maximum(1.0, d["thm1_cum_rhs"])))
        ok2 = bool(np.all(slack2 >= -rtol * np.maximum(1.0, d["thm2_bound"])))
        rows.append({"run": name[len("trace_"):-len(".csv")], "horizon": len(d["t"]),
                     "mean_sq_residual_F": float(np.mean(d["residual_F"] ** 2)),
                     "mean_sq_residual_T": float(np.mean(d["residual_T"] ** 2)),
                     "thm1_slack": float(slack1[-1]), "thm2_min_slack": float(np.min(slack2)),
                     "ledger_ok": ok1 and ok2})
    return rows

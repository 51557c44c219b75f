"""Run configuration, scenario registry, persistence and the ``simulate`` CLI.

Configuration is a JSON object.  Values are resolved in the order
defaults < config file < ``NEMATIC_FSI_*`` environment variables < command
line flags.  Nested keys use a double underscore in environment names, e.g.
``NEMATIC_FSI_PICARD__TOL=1e-9``; values are parsed as JSON when possible.
"""

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import epsilon_sweep, identity_suite, modes_convergence_sweep
from .coupled_stepper import CoupledSimulation, CoupledState, PicardConfig, check_kinematics
from .director import (
    DirectorGrid, DirectorOperator, GLParams, director_step, max_norm_monitor, project_ball,
)
from .energy_ledger import (
    CSV_COLUMNS, EnergyLedger, check_inequality, compute_ledger, gl_penalty_bound_check,
)
from .errors import (
    BoundViolation, CheckpointError, ConfigError, NematicFSIError, OutputError,
)
from .shell import ShellState, exact_mode_oracle, integrate_shell

SCHEMA_VERSION = 1
CHECKPOINT_VERSION = 1
ENV_PREFIX = "NEMATIC_FSI_"
SCENARIOS = (
    "rest", "shell_mode_k1", "director_relax", "coupled_default",
    "eps_sweep", "modes_sweep", "identity_suite",
)
# horizon used when t_end is not given
SCENARIO_T_END = {
    "rest": 0.1, "shell_mode_k1": 1.0, "director_relax": 0.5, "coupled_default": 0.5,
    "eps_sweep": 0.1, "modes_sweep": 0.1, "identity_suite": 0.0,
}
MAX_PRINCIPLE_TOL = 1e-10
KINEMATICS_TOL = 1e-10

log = logging.getLogger("nematic_fsi")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class PicardSettings:
    tol: float = 1e-8
    max_iter: int = 12
    window_factor: int = 10
    max_halvings: int = 4


@dataclass
class Tolerances:
    energy_rel: float = 1e-3
    energy_abs: float = 1e-10


@dataclass
class RunConfig:
    scenario: str = "coupled_default"
    geometry: str = "channel"
    nx: int = 64
    ns: int = 33
    quad_nx: int = 64
    quad_ns: int = 33
    n_shell: int = 16
    n_fluid: int = 16
    dt: float = 1e-3
    t_end: float = None
    epsilon: float = 0.1
    mollifier_k: int = None
    alpha_margin: float = 0.5
    eta0_amplitude: float = 0.1
    d0_dip: float = 0.0
    picard: PicardSettings = field(default_factory=PicardSettings)
    tolerances: Tolerances = field(default_factory=Tolerances)
    sweep_eps: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    sweep_modes: list = field(default_factory=lambda: [4, 8, 16])
    checkpoint_every: int = 0
    out_dir: str = "out"
    seed: int = 0

    @property
    def horizon(self):
        return SCENARIO_T_END[self.scenario] if self.t_end is None else self.t_end

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))

    def to_dict(self):
        return dataclasses.asdict(self)


_NESTED = {"picard": PicardSettings, "tolerances": Tolerances}
_OPTIONAL = {"t_end", "mollifier_k"}
# keys that do not change the trajectory and are left out of the hash
_UNHASHED = {"t_end", "out_dir", "checkpoint_every"}


def _check_type(path, value, default, optional):
    if value is None and optional:
        return None
    kind = type(default) if default is not None else None
    if path.endswith("mollifier_k"):
        kind = int
    if path.endswith("t_end"):
        kind = float
    if kind is bool or isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a non-empty list, got {value!r}")
        return list(value)
    return value


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{prefix}{key}: unknown key")
    kwargs = {}
    template = cls()
    for name in names:
        if name not in data:
            continue
        path = prefix + name
        if name in _NESTED and cls is RunConfig:
            kwargs[name] = _build(_NESTED[name], data[name], path + ".")
        else:
            kwargs[name] = _check_type(path, data[name], getattr(template, name), name in _OPTIONAL)
    return cls(**kwargs)


def validate_config(cfg):
    def need(cond, path, msg):
        if not cond:
            raise ConfigError(f"{path}: {msg}")

    need(cfg.scenario in SCENARIOS, "scenario", f"unknown scenario {cfg.scenario!r}; expected one of {', '.join(SCENARIOS)}")
    need(cfg.geometry in ("channel", "annulus"), "geometry", "must be 'channel' or 'annulus'")
    need(cfg.nx >= 4, "nx", "must be >= 4")
    need(cfg.ns >= 5, "ns", "must be >= 5")
    need(cfg.quad_nx >= 4 and cfg.quad_ns >= 2, "quad_nx", "fluid quadrature needs quad_nx >= 4 and quad_ns >= 2")
    need(cfg.n_shell >= 1, "n_shell", "must be >= 1")
    need(cfg.n_fluid >= 1, "n_fluid", "must be >= 1")
    need(cfg.dt > 0, "dt", "must be positive")
    need(cfg.t_end is None or cfg.t_end > 0, "t_end", "must be positive")
    need(cfg.epsilon > 0, "epsilon", "must be positive")
    need(cfg.mollifier_k is None or cfg.mollifier_k >= 1, "mollifier_k", "must be >= 1")
    need(cfg.alpha_margin > 0, "alpha_margin", "must be positive")
    need(cfg.eta0_amplitude >= 0, "eta0_amplitude", "must be non-negative")
    sup = cfg.eta0_amplitude / np.sqrt(np.pi)
    need(sup < cfg.alpha_margin, "eta0_amplitude",
         f"initial displacement sup {sup:.4g} must stay below alpha_margin {cfg.alpha_margin}")
    need(0.0 <= cfg.d0_dip < 1.0, "d0_dip", "must lie in [0, 1)")
    need(cfg.picard.tol > 0, "picard.tol", "must be positive")
    need(cfg.picard.max_iter >= 1, "picard.max_iter", "must be >= 1")
    need(cfg.picard.window_factor >= 1, "picard.window_factor", "must be >= 1")
    need(cfg.picard.max_halvings >= 0, "picard.max_halvings", "must be >= 0")
    need(cfg.tolerances.energy_rel >= 0, "tolerances.energy_rel", "must be non-negative")
    need(cfg.tolerances.energy_abs >= 0, "tolerances.energy_abs", "must be non-negative")
    need(all(isinstance(e, (int, float)) and e > 0 for e in cfg.sweep_eps), "sweep_eps", "entries must be positive numbers")
    need(all(isinstance(n, int) and n >= 4 for n in cfg.sweep_modes), "sweep_modes", "entries must be integers >= 4")
    need(cfg.checkpoint_every >= 0, "checkpoint_every", "must be >= 0")
    need(cfg.seed >= 0, "seed", "must be >= 0")
    if cfg.scenario in ("coupled_default", "modes_sweep", "eps_sweep"):
        need(cfg.n_shell >= 4 and cfg.n_fluid >= 4, "n_shell", "coupled scenarios need at least 4 modes")
    if cfg.geometry != "channel" and cfg.scenario not in ("identity_suite",):
        raise ConfigError("geometry: time-dependent scenarios run in the channel geometry only")
    return cfg


def config_from_dict(data):
    return validate_config(_build(RunConfig, data, ""))


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)


def dump_config(cfg):
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2)


def config_hash(cfg):
    data = {k: v for k, v in cfg.to_dict().items() if k not in _UNHASHED}
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


def _parse_env_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def env_overrides(environ=None):
    """Nested dict of overrides from NEMATIC_FSI_* variables."""
    environ = os.environ if environ is None else environ
    out = {}
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = name[len(ENV_PREFIX):].lower().split("__")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_env_value(raw)
    return out


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(path=None, overrides=None, environ=None):
    data = {}
    if path is not None:
        load_config(path)  # validates the file on its own
        data = json.loads(Path(path).read_text())
    data = _merge(data, env_overrides(environ))
    data = _merge(data, overrides or {})
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# Atomic output
# ---------------------------------------------------------------------------

def _atomic_write(path, payload, binary=False):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb" if binary else "w", **({} if binary else {"newline": ""})) as fh:
                fh.write(payload)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _fmt(v):
    return repr(float(v))


def ledger_csv(ledger):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in ledger.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_ledger_csv(path):
    """Header tuple and float array (n_rows, n_columns) of a ledger CSV."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror}") from exc
    header = tuple(rows[0])
    if header != CSV_COLUMNS:
        raise OutputError(f"{path}: unexpected header {header}")
    return header, np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def report_json(report):
    return json.dumps({"schema_version": SCHEMA_VERSION, **_jsonable(report)}, sort_keys=True, indent=2) + "\n"


def write_outputs(ledger, report, out_dir, name="ledger"):
    """Atomically write <name>.csv and report.json; returns the paths."""
    out = Path(out_dir)
    paths = {}
    if ledger is not None:
        paths["csv"] = _atomic_write(out / f"{name}.csv", ledger_csv(ledger))
    if report is not None:
        paths["report"] = _atomic_write(out / "report.json", report_json(report))
    return paths


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, state, ledger, cfg):
    meta = {
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash(cfg),
        "scenario": cfg.scenario,
        "t": state.t,
        "step": state.step,
        "radius": state.radius,
        "ledger": ledger.to_dict() if ledger is not None else None,
    }
    buf = io.BytesIO()
    np.savez(buf, alpha=state.alpha, eta=state.eta, d=state.d,
             meta=np.frombuffer(json.dumps(_jsonable(meta)).encode(), dtype=np.uint8))
    return _atomic_write(path, buf.getvalue(), binary=True)


def load_checkpoint(path, cfg):
    """Restore (state, ledger); refuses version or configuration mismatches."""
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            arrays = {k: data[k].copy() for k in ("alpha", "eta", "d")}
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}")
    if meta.get("config_hash") != config_hash(cfg):
        raise CheckpointError(f"{path}: configuration hash mismatch; refusing to resume")
    state = CoupledState(float(meta["t"]), int(meta["step"]), arrays["alpha"], arrays["eta"], arrays["d"],
                         float(meta["radius"]))
    ledger = EnergyLedger.from_dict(meta["ledger"]) if meta.get("ledger") else None
    return state, ledger


def checkpoint_roundtrip(state, path, cfg, ledger=None):
    save_checkpoint(path, state, ledger, cfg)
    return load_checkpoint(path, cfg)[0]


# ---------------------------------------------------------------------------
# Scenario data
# ---------------------------------------------------------------------------

def default_director(grid, seed, dip=0.0):
    """d0 = rho (cos theta, sin theta) with seed-dependent phases.

    rho = 1 - dip * 2 s (1 - s) (1 + cos(x + phase)) ranges over [1 - dip, 1].
    """
    rng = np.random.default_rng(seed)
    phase, phase2 = 0.4 + (rng.uniform(0, 2 * np.pi) if seed else 0.0), rng.uniform(0, 2 * np.pi)
    X, S = np.meshgrid(grid.x, grid.s, indexing="ij")
    th = 0.3 * np.cos(X) * np.cos(np.pi * S) + 0.2 * np.sin(2 * X + phase)
    rho = 1.0 - dip * 2.0 * S * (1 - S) * (1 + np.cos(X + phase2))
    return rho * np.stack([np.cos(th), np.sin(th)])


def build_coupled(cfg, n_fluid=None, n_shell=None, epsilon=None, zero=False):
    """Simulation and initial state of the default coupled data set."""
    n_fluid = cfg.n_fluid if n_fluid is None else n_fluid
    n_shell = cfg.n_shell if n_shell is None else n_shell
    eps = cfg.epsilon if epsilon is None else epsilon
    picard = PicardConfig(window_steps=cfg.picard.window_factor, tol=cfg.picard.tol,
                          max_iter=cfg.picard.max_iter, cutoff_k=cfg.mollifier_k,
                          max_halvings=cfg.picard.max_halvings)
    sim = CoupledSimulation(cfg.nx, cfg.ns, n_fluid, cfg.dt, eps, quad=(cfg.quad_nx, cfg.quad_ns), picard=picard,
                            alpha_margin=cfg.alpha_margin, n_shell=n_shell)
    eta0 = np.zeros(n_shell)
    alpha0 = np.zeros(len(sim.basis))
    if zero:
        d0 = np.zeros((2,) + sim.dgrid.shape)
        d0[0] = 1.0
    else:
        rng = np.random.default_rng(cfg.seed)
        eta0[0] = cfg.eta0_amplitude
        alpha0[sim.B[3]] = 0.3
        alpha0[sim.basis.interior_globals[:4]] = 0.1 * rng.normal(size=4)
        d0 = default_director(sim.dgrid, cfg.seed, cfg.d0_dip)
    return sim, sim.initial_state(eta0, alpha0, d0, radius=1.0)


class _CoupledRunner:
    def __init__(self, cfg, zero=False):
        self.cfg = cfg
        self.sim, self.initial = build_coupled(cfg, zero=zero)
        self.tol = cfg.tolerances

    def start_ledger(self, state):
        return self.sim.start_ledger(state)

    def run(self, state, ledger, total, on_window):
        reports = []

        def hook(st, led, reps):
            check_inequality(led, self.tol.energy_rel, self.tol.energy_abs)
            on_window(st, led)

        st = state
        if st.step < total:
            st, ledger, reports = self.sim.run(st, total * self.cfg.dt, ledger, on_window=hook)
        return st, ledger, self.summary(ledger, reports)

    def summary(self, ledger, reports):
        ok_k, mismatch = check_kinematics(ledger, KINEMATICS_TOL)
        areas = [d.get("area", 0.0) for d in ledger.diagnostics]
        passes = [r.passes for r in reports]
        contraction = [c for r in reports for c in r.contraction]
        _, pen, bound = gl_penalty_bound_check(ledger, self.sim.params.epsilon, raise_on_fail=False)
        return {
            "interface_mismatch": mismatch, "kinematics_ok": ok_k,
            "area_drift": float(np.ptp(areas)) if areas else 0.0,
            "picard_passes_max": max(passes, default=0),
            "picard_passes_mean": float(np.mean(passes)) if passes else 0.0,
            "contraction_max": max(contraction, default=0.0),
            "windows": len(reports),
            "krylov_iterations": int(sum(r.krylov_iterations for r in reports)),
            "gl_penalty": pen, "gl_envelope": bound,
        }


class _DirectorRunner:
    """Fixed flat channel, no flow: Ginzburg-Landau relaxation of the director."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.grid = DirectorGrid(cfg.nx, cfg.ns)
        self.op = DirectorOperator(self.grid, np.zeros(1))
        self.params = GLParams(cfg.epsilon)
        d0, _ = project_ball(default_director(self.grid, cfg.seed, cfg.d0_dip), 1.0, self.op)
        self.initial = CoupledState(0.0, 0, np.zeros(0), np.zeros(0), d0, 1.0)

    def record(self, ledger, state):
        e, r, defect = compute_ledger(np.zeros(0), np.zeros(0), np.zeros(0), d=state.d, op=self.op,
                                      epsilon=self.cfg.epsilon)
        ledger.append(state.t, e, r, max_norm_monitor(state.d), defect)

    def start_ledger(self, state):
        ledger = EnergyLedger()
        self.record(ledger, state)
        return ledger

    def run(self, state, ledger, total, on_window):
        dt = self.cfg.dt
        d = state.d
        iters = 0
        step = state.step
        while step < total:
            d, info = director_step(d, dt, self.params, self.op, self.op, None, state.radius)
            iters += info.krylov_iterations
            step += 1
            state = CoupledState(step * dt, step, state.alpha, state.eta, d, state.radius)
            self.record(ledger, state)
            check_inequality(ledger, self.cfg.tolerances.energy_rel, self.cfg.tolerances.energy_abs)
            if step % self.cfg.picard.window_factor == 0 or step == total:
                on_window(state, ledger)
        _, pen, bound = gl_penalty_bound_check(ledger, self.cfg.epsilon, raise_on_fail=False)
        return state, ledger, {"krylov_iterations": iters, "gl_penalty": pen, "gl_envelope": bound}


class _ShellRunner:
    """Decoupled shell with only the first mode excited: a damped oscillator."""

    def __init__(self, cfg):
        self.cfg = cfg
        eta = np.zeros(cfg.n_shell)
        eta[0] = 1.0
        self.k = ShellState(eta, np.zeros(cfg.n_shell)).k
        self.initial = CoupledState(0.0, 0, np.zeros(cfg.n_shell), eta, np.zeros((2, 0, 0)), 1.0)

    def record(self, ledger, state):
        e, r, _ = compute_ledger(self.k, state.eta, state.alpha)
        ledger.append(state.t, e, r, 0.0, diag={"eta1": float(state.eta[0])})

    def start_ledger(self, state):
        ledger = EnergyLedger()
        self.record(ledger, state)
        return ledger

    def run(self, state, ledger, total, on_window):
        dt = self.cfg.dt
        shell = ShellState(state.eta, state.alpha, self.k)
        step = state.step
        while step < total:
            shell = integrate_shell(shell, dt, 1)[-1]
            step += 1
            state = CoupledState(step * dt, step, shell.eta_t, shell.eta, state.d, state.radius)
            self.record(ledger, state)
            if step % self.cfg.picard.window_factor == 0 or step == total:
                on_window(state, ledger)
        t = np.array([row[0] for row in ledger.rows])
        eta1 = np.array([dg["eta1"] for dg in ledger.diagnostics])
        exact, _ = exact_mode_oracle(1, t, 1.0, 0.0)
        rel = np.abs(eta1 - exact) / np.abs(exact)
        return state, ledger, {
            "eta1_final": float(eta1[-1]), "eta1_exact": float(exact[-1]),
            "rel_error_final": float(rel[-1]), "rel_error_max": float(rel.max()),
        }


def _make_runner(cfg):
    if cfg.scenario == "rest":
        return _CoupledRunner(cfg, zero=True)
    if cfg.scenario == "coupled_default":
        return _CoupledRunner(cfg)
    if cfg.scenario == "director_relax":
        return _DirectorRunner(cfg)
    if cfg.scenario == "shell_mode_k1":
        return _ShellRunner(cfg)
    return None


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    ledger: EnergyLedger = None
    report: dict = None
    state: CoupledState = None
    paths: dict = field(default_factory=dict)


def _setup_log(out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out_dir / "run.log", mode="a")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def _check_max_principle(ledger, radius):
    worst = float(max((row[-1] for row in ledger.rows), default=0.0))
    if worst > radius + MAX_PRINCIPLE_TOL:
        raise BoundViolation(f"max |d| = {worst:.15g} exceeds {radius} + {MAX_PRINCIPLE_TOL:g}")
    return worst


def run_scenario(cfg, resume=None):
    """Execute one scenario; invariant and solver failures propagate as NematicFSIError."""
    out = Path(cfg.out_dir)
    try:
        handler = _setup_log(out)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror}") from exc
    try:
        log.info("scenario %s, config hash %s", cfg.scenario, config_hash(cfg)[:12])
        _atomic_write(out / "config.json", dump_config(cfg) + "\n")
        runner = _make_runner(cfg)
        if runner is None:
            return _run_analysis(cfg, out)
        ckpt = out / "checkpoint.npz"
        if resume is not None:
            state, ledger = load_checkpoint(resume, cfg)
            log.info("resumed from %s at step %d", resume, state.step)
        else:
            state = runner.initial
            ledger = runner.start_ledger(state)
        every = cfg.checkpoint_every

        def on_window(st, led):
            if every and st.step % every == 0:
                save_checkpoint(ckpt, st, led, cfg)
                log.info("checkpoint at step %d", st.step)

        state, ledger, summary = runner.run(state, ledger, cfg.steps, on_window)
        ok, slack = check_inequality(ledger, cfg.tolerances.energy_rel, cfg.tolerances.energy_abs)
        report = {
            "scenario": cfg.scenario, "steps": state.step, "t": state.t,
            "energy_initial": float(ledger.total_energy()[0]),
            "energy_final": float(ledger.total_energy()[-1]),
            "energy_defect": ledger.energy_defect(),
            "slack_min": float(slack.min()) if slack.size else 0.0,
            "max_abs_d": _check_max_principle(ledger, state.radius) if state.d.size else 0.0,
            **summary,
        }
        paths = write_outputs(ledger, report, out)
        paths["checkpoint"] = save_checkpoint(ckpt, state, ledger, cfg)
        log.info("finished at t = %.6g (%d steps)", state.t, state.step)
        return RunResult(0, out, ledger, report, state, paths)
    except NematicFSIError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        _atomic_write(out / "error.json", report_json({
            "error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code,
        }))
        raise
    finally:
        log.removeHandler(handler)
        handler.close()


def _run_analysis(cfg, out):
    if cfg.scenario == "identity_suite":
        rep = identity_suite().to_dict()
        rep["analytic_ok"] = bool(np.max(rep["analytic_max"]) < 1e-12)
        paths = write_outputs(None, rep, out)
        return RunResult(0, out, report=rep, paths=paths)
    t_end = cfg.horizon
    paths = {}

    if cfg.scenario == "eps_sweep":
        def build(eps):
            return build_coupled(cfg, epsilon=eps)

        rep = epsilon_sweep(cfg.sweep_eps, build, t_end, on_run=lambda v, led: paths.update(
            write_outputs(led, None, out, name=f"ledger_eps_{v:g}")))
    else:
        def build(N):
            return build_coupled(cfg, n_fluid=N, n_shell=N)

        rep = modes_convergence_sweep(cfg.sweep_modes, build, t_end, on_run=lambda v, led: paths.update(
            write_outputs(led, None, out, name=f"ledger_N{v}")))
    report = rep.to_dict()
    paths.update(write_outputs(None, report, out))
    return RunResult(0, out, report=report, paths=paths)


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="simulate", description="Nematic liquid crystal / elastic shell channel solver.")
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--modes", type=int, help="number of fluid and shell modes")
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", help="checkpoint file to continue from")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    over = {k: v for k, v in vars(args).items() if k not in ("config", "resume", "modes") and v is not None}
    if args.modes is not None:
        over["n_fluid"] = over["n_shell"] = args.modes
    try:
        cfg = resolve_config(args.config, over)
        result = run_scenario(cfg, resume=args.resume)
    except NematicFSIError as exc:
        print(f"simulate: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps(_jsonable({"scenario": cfg.scenario, "out_dir": str(result.out_dir),
                                "files": {k: str(v) for k, v in result.paths.items()}})))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())

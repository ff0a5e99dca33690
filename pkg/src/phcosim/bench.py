"""Two-oscillator benchmark, sweep harness and trajectory file formats.

A Duffing oscillator (mass ``m1``, grounding spring ``k1``, hardening
cubic spring ``k_nl``) and a linear oscillator (``m2``, ``k2``) interact
through a series spring-damper element ``(k12, c12)``.  The element lives
inside subsystem B as an extra elongation state ``s``, so each subsystem
exposes exactly one mechanical power port and the interconnection is the
standard force/velocity pairing ``e_A = e_B``, ``f_A + f_B = 0``, i.e.
the block swap in wave variables.  Signs are fixed so that the coupled
discrete trajectories converge to the target system

    m1 q1'' = -k1 q1 - k_nl q1^3 - k12 (q1 - q2) - c12 (q1' - q2')
    m2 q2'' = -k2 q2 + k12 (q1 - q2) + c12 (q1' - q2')

with ``s`` tracking ``q1 - q2``.

The module also houses the budget sweep with its per-budget certificates,
the RMS error study against the monolithic reference, the key-value
configuration format (shipped profile ``table1``), and the CSV trajectory
and plot-data emission used by the command line.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from ._backend import get_kernels
from .certify import CERT_TOL, CertificateReport, certify_trajectory
from .coupling import (
    FIXED_POINT_MAX_ITER,
    FIXED_POINT_TOL,
    MONOLITHIC_TOL,
    InnerLoopConfig,
    InnerLoopTrace,
    MacroStepRecord,
    macro_step,
    monolithic_step,
)
from .models import SolverFailure, SubsystemModel, free_port_sample
from .scattering import CouplingStructure, PortSample, ScatteringConfig

__all__ = [
    "BenchmarkConfig",
    "Trajectory",
    "TrajectoryData",
    "SweepEntry",
    "SweepReport",
    "TRAJECTORY_COLUMNS",
    "parse_config_text",
    "config_to_text",
    "load_config",
    "list_profiles",
    "build_benchmark",
    "initial_states",
    "initial_outgoing_wave",
    "run_budget",
    "run_monolithic",
    "rms_state_error",
    "certify_run",
    "sweep",
    "trajectory_columns",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "read_trajectory_meta",
    "write_sweep_outputs",
]

TRAJECTORY_COLUMNS = (
    "t", "q1", "v1", "q2", "v2", "s",
    "H_A", "H_B", "H_total",
    "a_A", "a_B", "b_A", "b_B",
    "r_A", "r_B", "aug_residual", "inner_steps_used",
)

_PROFILE_DIR = "data"


@dataclass(frozen=True)
class BenchmarkConfig:
    """Benchmark parameters; defaults are the published set.

    Units: masses kg, stiffnesses N/m (``k_nl`` N/m^3), dampings N s/m,
    positions m, velocities m/s, times s; ``gamma`` is the scattering
    reference impedance in N s/m.
    """

    m1: float = 8.0
    m2: float = 4.0
    k1: float = 100.0
    k2: float = 50.0
    c1: float = 0.0
    c2: float = 0.0
    k12: float = 120.0
    c12: float = 0.05
    k_nl: float = 8000.0
    q1_0: float = 0.4
    q2_0: float = 0.0
    v1_0: float = 0.0
    v2_0: float = 0.0
    dt: float = 0.01
    T: float = 10.0
    gamma: float = 0.4
    budgets: tuple = (0, 3, 8, 20, 35, 50)
    eps: float = 0.0
    seed: int = 1234

    def __post_init__(self):
        for name in ("m1", "m2", "k1", "k2", "k12", "dt", "T", "gamma"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("c1", "c2", "c12", "k_nl", "eps"):
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if len(self.budgets) == 0:
            raise ValueError("budgets must not be empty")
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        if any(b < 0 for b in self.budgets):
            raise ValueError(f"budgets must be non-negative, got {self.budgets}")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * max(self.T, 1.0):
            raise ValueError(f"horizon T={self.T} is not a multiple of dt={self.dt}")

    def n_steps(self) -> int:
        return round(self.T / self.dt)

    def config_hash(self) -> str:
        return hashlib.sha256(config_to_text(self).encode()).hexdigest()[:16]


def config_to_text(cfg: BenchmarkConfig) -> str:
    """Canonical key-value serialization (also the hashing input)."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "budgets":
            lines.append(f"budgets = {', '.join(str(b) for b in value)}")
        elif f.name == "seed":
            lines.append(f"seed = {int(value)}")
        else:
            lines.append(f"{f.name} = {float(value)!r}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str, base: Optional[BenchmarkConfig] = None) -> BenchmarkConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Unspecified keys keep their values from ``base`` (default profile).
    """
    known = {f.name for f in fields(BenchmarkConfig)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key == "budgets":
            toks = [t for t in value.replace(",", " ").split() if t]
            updates[key] = tuple(int(t) for t in toks)
        elif key == "seed":
            updates[key] = int(value)
        else:
            updates[key] = float(value)
    base = BenchmarkConfig() if base is None else base
    return replace(base, **updates)


def list_profiles() -> tuple:
    """Names of the configuration profiles shipped with the package."""
    root = resources.files(__package__) / _PROFILE_DIR
    return tuple(sorted(p.name[: -len(".cfg")] for p in root.iterdir() if p.name.endswith(".cfg")))


def load_config(name_or_path: str) -> BenchmarkConfig:
    """Load a config from a file path or from a shipped profile name."""
    path = Path(name_or_path)
    if path.exists():
        return parse_config_text(path.read_text())
    candidate = resources.files(__package__) / _PROFILE_DIR / f"{name_or_path}.cfg"
    if candidate.is_file():
        return parse_config_text(candidate.read_text())
    raise FileNotFoundError(f"config not found: {name_or_path} (no such file, no such profile)")


def build_benchmark(cfg: BenchmarkConfig):
    """Construct the two subsystems, the swap coupling and the wave config.

    Subsystem A (states ``q1, p1``) takes the port effort (coupling force)
    as input and reads out its velocity.  Subsystem B (states ``q2, p2, s``)
    takes the port flow as input; the series element makes its port map
    proper with feedthrough ``c12``, and its output is the element force
    ``e_B = c12 v2_bar - k12 s_bar + c12 u``.
    """
    m1, k1, knl, c1 = cfg.m1, cfg.k1, cfg.k_nl, cfg.c1
    m2, k2, c2, k12, c12 = cfg.m2, cfg.k2, cfg.c2, cfg.k12, cfg.c12

    def ham_a(x):
        q, p = x
        return p * p / (2.0 * m1) + 0.5 * k1 * q * q + 0.25 * knl * q ** 4

    def grad_a(x):
        q, p = x
        return np.array([k1 * q + knl * q ** 3, p / m1])

    def hess_a(x):
        return np.array([[k1 + 3.0 * knl * x[0] * x[0], 0.0], [0.0, 1.0 / m1]])

    J_a = np.array([[0.0, 1.0], [-1.0, 0.0]])
    R_a = np.diag([0.0, c1])
    G_a = np.array([[0.0], [1.0]])
    sub_a = SubsystemModel(
        label="duffing-oscillator",
        state_dim=2,
        port_dim=1,
        hamiltonian=ham_a,
        grad_hamiltonian=grad_a,
        structure_J=lambda x: J_a,
        dissipation_R=lambda x: R_a,
        port_G=lambda x: G_a,
        port_input="effort",
        hess_hamiltonian=hess_a,
        native=("duffing_effort", m1, k1, knl, c1),
    )

    def ham_b(x):
        q, p, s = x
        return p * p / (2.0 * m2) + 0.5 * k2 * q * q + 0.5 * k12 * s * s

    def grad_b(x):
        return np.array([k2 * x[0], x[1] / m2, k12 * x[2]])

    def hess_b(x):
        return np.diag([k2, 1.0 / m2, k12])

    J_b = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
    R_b = np.diag([0.0, c2 + c12, 0.0])
    G_b_in = np.array([[0.0], [-c12], [-1.0]])
    G_b_out = np.array([[0.0], [c12], [-1.0]])
    D_b = np.array([[c12]])
    sub_b = SubsystemModel(
        label="linear-oscillator",
        state_dim=3,
        port_dim=1,
        hamiltonian=ham_b,
        grad_hamiltonian=grad_b,
        structure_J=lambda x: J_b,
        dissipation_R=lambda x: R_b,
        port_G=lambda x: G_b_in,
        port_G_out=lambda x: G_b_out,
        feedthrough=lambda x: D_b,
        port_input="flow",
        hess_hamiltonian=hess_b,
        native=("coupled_flow", m2, k2, c2, k12, c12),
    )

    coupling = CouplingStructure.swap(1)
    scat = ScatteringConfig(gamma=cfg.gamma, dt=cfg.dt)
    return sub_a, sub_b, coupling, scat


def initial_states(cfg: BenchmarkConfig):
    """Initial states ``(q1, p1)`` and ``(q2, p2, s)`` with s = q1 - q2."""
    x_a = np.array([cfg.q1_0, cfg.m1 * cfg.v1_0])
    x_b = np.array([cfg.q2_0, cfg.m2 * cfg.v2_0, cfg.q1_0 - cfg.q2_0])
    return x_a, x_b


def initial_outgoing_wave(models, states, scat: ScatteringConfig) -> np.ndarray:
    """Warm-start outgoing waves from the free-port readout.

    Per subsystem ``b_0 = -sqrt(dt * gamma / 2) * f(x_0)`` with the flow
    taken at zero port effort, i.e. the wave a free (unloaded) port would
    radiate from the initial state.
    """
    parts = []
    for model, x in zip(models, states):
        f0 = free_port_sample(model, x).f
        parts.append(0.0 - scat.wave_scale * scat.gamma * f0)
    return np.concatenate(parts)


@dataclass
class Trajectory:
    """A recorded coupled (or monolithic) run on the benchmark grid."""

    config: BenchmarkConfig
    provenance: str
    budget: Optional[int]
    variant: str
    eps: float
    times: np.ndarray
    initial: tuple
    b_init: np.ndarray
    records: list
    total_energy: np.ndarray
    config_hash: str
    aug_residuals: Optional[np.ndarray] = None

    def n_steps(self) -> int:
        return len(self.records)


_KIND_IDS = {"duffing_effort": 0, "coupled_flow": 1}


def _native_descriptor(model: SubsystemModel):
    if model.native is None or model.native[0] not in _KIND_IDS:
        return None
    return _KIND_IDS[model.native[0]], np.asarray(model.native[1:], dtype=float)


def _usable_kernels(models):
    kern = get_kernels()
    if kern is None:
        return None
    descs = [_native_descriptor(m) for m in models]
    if any(d is None for d in descs) or any(m.port_dim != 1 for m in models):
        return None
    return kern, descs


def _record_from_parts(models, x_before, x_after, b_prev, a, b, e, f, iters, resid, trace, monolithic):
    e_before = tuple(m.energy(x) for m, x in zip(models, x_before))
    e_after = tuple(m.energy(x) for m, x in zip(models, x_after))
    supplies = tuple(0.5 * (a[i] * a[i] - b[i] * b[i]) for i in range(len(models)))
    residuals = tuple((ea - eb) - s for ea, eb, s in zip(e_after, e_before, supplies))
    ports = tuple(PortSample(e=np.array([e[i]]), f=np.array([f[i]])) for i in range(len(models)))
    return MacroStepRecord(
        states_before=tuple(x_before),
        states_after=tuple(x_after),
        energies_before=e_before,
        energies_after=e_after,
        b_prev=np.asarray(b_prev, dtype=float).copy(),
        incident=np.asarray(a, dtype=float).copy(),
        outgoing=np.asarray(b, dtype=float).copy(),
        ports=ports,
        supplies=supplies,
        passivity_residuals=residuals,
        trace=trace,
        monolithic=monolithic,
        solver_iterations=tuple(int(i) for i in iters),
        solver_residuals=tuple(float(r) for r in resid),
    )


def _records_from_native(models, b0, out, monolithic: bool):
    xa, xb = out["xa"], out["xb"]
    n = out["a"].shape[0]
    records = []
    b_prev = np.asarray(b0, dtype=float)
    for k in range(n):
        if monolithic:
            trace = None
        else:
            used = int(out["used"][k])
            iterates = [out["iterates"][k, j].copy() for j in range(used + 1)]
            shadows = [out["shadows"][k, j].copy() for j in range(used)]
            final = shadows[-1] if shadows else b_prev.copy()
            trace = InnerLoopTrace(
                iterates=iterates,
                shadows=shadows,
                final_shadow=final,
                steps_used=used,
                step_residuals=[float(r) for r in out["inner_resid"][k, :used]],
            )
        records.append(
            _record_from_parts(
                models,
                (xa[k].copy(), xb[k].copy()),
                (xa[k + 1].copy(), xb[k + 1].copy()),
                b_prev,
                out["a"][k],
                out["b"][k],
                out["e"][k],
                out["f"][k],
                out["newton_iters"][k],
                out["newton_resid"][k],
                trace,
                monolithic,
            )
        )
        b_prev = out["b"][k]
    return records


def _assemble_trajectory(cfg, provenance, budget, variant, eps, x0, b0, records) -> Trajectory:
    n = len(records)
    times = np.arange(n + 1) * cfg.dt
    energy = np.empty(n + 1)
    a_model, b_model, _, _ = build_benchmark(cfg)
    energy[0] = a_model.energy(x0[0]) + b_model.energy(x0[1])
    for k, rec in enumerate(records):
        energy[k + 1] = sum(rec.energies_after)
    return Trajectory(
        config=cfg,
        provenance=provenance,
        budget=budget,
        variant=variant,
        eps=eps,
        times=times,
        initial=tuple(np.asarray(x, dtype=float) for x in x0),
        b_init=np.asarray(b0, dtype=float),
        records=records,
        total_energy=energy,
        config_hash=cfg.config_hash(),
    )


def run_budget(cfg: BenchmarkConfig, budget: int, variant: str = "reduced", eps: Optional[float] = None) -> Trajectory:
    """Coupled run with a fixed inner-iteration budget per macro step."""
    eps_val = cfg.eps if eps is None else float(eps)
    inner = InnerLoopConfig(budget=budget, eps=eps_val, variant=variant)
    models_a, models_b, coupling, scat = build_benchmark(cfg)
    models = (models_a, models_b)
    x0 = initial_states(cfg)
    b0 = initial_outgoing_wave(models, x0, scat)
    n = cfg.n_steps()
    native = _usable_kernels(models) if variant == "reduced" else None
    if native is not None:
        kern, ((ka, pa), (kb, pb)) = native
        out = kern.run_reduced_trajectory(
            ka, pa, kb, pb, x0[0], x0[1], b0, cfg.dt, cfg.gamma, n, budget, eps_val
        )
        records = _records_from_native(models, b0, out, monolithic=False)
    else:
        records = []
        states, b_prev = x0, b0
        for k in range(n):
            try:
                rec = macro_step(models, states, b_prev, scat, coupling, inner)
            except SolverFailure as exc:
                raise SolverFailure(f"macro step {k + 1}: {exc}", exc.residual, exc.iterations) from exc
            records.append(rec)
            states, b_prev = rec.states_after, rec.outgoing
    return _assemble_trajectory(cfg, f"budget={budget}", budget, variant, eps_val, x0, b0, records)


def run_monolithic(cfg: BenchmarkConfig) -> Trajectory:
    """Reference run with the interface condition solved at every step."""
    models_a, models_b, coupling, scat = build_benchmark(cfg)
    models = (models_a, models_b)
    x0 = initial_states(cfg)
    b0 = initial_outgoing_wave(models, x0, scat)
    n = cfg.n_steps()
    native = _usable_kernels(models)
    if native is not None:
        kern, ((ka, pa), (kb, pb)) = native
        out = kern.run_monolithic_trajectory(
            ka, pa, kb, pb, x0[0], x0[1], b0, cfg.dt, cfg.gamma, n, MONOLITHIC_TOL
        )
        records = _records_from_native(models, b0, out, monolithic=True)
    else:
        records = []
        states, b_prev = x0, b0
        for k in range(n):
            try:
                rec = monolithic_step(models, states, b_prev, scat, coupling)
            except SolverFailure as exc:
                raise SolverFailure(f"macro step {k + 1}: {exc}", exc.residual, exc.iterations) from exc
            records.append(rec)
            states, b_prev = rec.states_after, rec.outgoing
    return _assemble_trajectory(cfg, "monolithic", None, "reduced", 0.0, x0, b0, records)


def trajectory_columns(traj: Trajectory) -> dict:
    """Column lists of the trajectory table; ``None`` marks an empty cell.

    Row 0 carries the initial condition and the warm-start outgoing waves;
    row ``n >= 1`` carries the step ending at ``t_n``.
    """
    cfg = traj.config
    cols = {name: [] for name in TRAJECTORY_COLUMNS}
    x_a0, x_b0 = traj.initial
    cols["t"].append(0.0)
    cols["q1"].append(float(x_a0[0]))
    cols["v1"].append(float(x_a0[1]) / cfg.m1)
    cols["q2"].append(float(x_b0[0]))
    cols["v2"].append(float(x_b0[1]) / cfg.m2)
    cols["s"].append(float(x_b0[2]))
    a_model, b_model, _, _ = build_benchmark(cfg)
    ha0 = a_model.energy(x_a0)
    hb0 = b_model.energy(x_b0)
    cols["H_A"].append(ha0)
    cols["H_B"].append(hb0)
    cols["H_total"].append(ha0 + hb0)
    cols["a_A"].append(None)
    cols["a_B"].append(None)
    cols["b_A"].append(float(traj.b_init[0]))
    cols["b_B"].append(float(traj.b_init[1]))
    cols["r_A"].append(None)
    cols["r_B"].append(None)
    cols["aug_residual"].append(None)
    cols["inner_steps_used"].append(None)
    aug = traj.aug_residuals
    for k, rec in enumerate(traj.records):
        x_a, x_b = rec.states_after
        cols["t"].append(float(traj.times[k + 1]))
        cols["q1"].append(float(x_a[0]))
        cols["v1"].append(float(x_a[1]) / cfg.m1)
        cols["q2"].append(float(x_b[0]))
        cols["v2"].append(float(x_b[1]) / cfg.m2)
        cols["s"].append(float(x_b[2]))
        cols["H_A"].append(float(rec.energies_after[0]))
        cols["H_B"].append(float(rec.energies_after[1]))
        cols["H_total"].append(float(sum(rec.energies_after)))
        cols["a_A"].append(float(rec.incident[0]))
        cols["a_B"].append(float(rec.incident[1]))
        cols["b_A"].append(float(rec.outgoing[0]))
        cols["b_B"].append(float(rec.outgoing[1]))
        cols["r_A"].append(float(rec.passivity_residuals[0]))
        cols["r_B"].append(float(rec.passivity_residuals[1]))
        cols["aug_residual"].append(float(aug[k]) if aug is not None else None)
        cols["inner_steps_used"].append(rec.trace.steps_used if rec.trace is not None else None)
    return cols


def _state_history(obj):
    """Time grid and the (q1, v1, q2, v2) state table of a run."""
    if isinstance(obj, Trajectory):
        cols = trajectory_columns(obj)
        t = np.asarray(cols["t"], dtype=float)
        Y = np.column_stack([np.asarray(cols[k], dtype=float) for k in ("q1", "v1", "q2", "v2")])
        return t, Y
    if isinstance(obj, TrajectoryData):
        t = obj.columns["t"]
        Y = np.column_stack([obj.columns[k] for k in ("q1", "v1", "q2", "v2")])
        return t, Y
    raise TypeError(f"expected Trajectory or TrajectoryData, got {type(obj).__name__}")


def rms_state_error(traj, ref):
    """RMS error against a reference on the same grid.

    Returns ``(summary, series)``: the per-time Euclidean error over
    ``(q1, v1, q2, v2)`` and its root mean square over the grid.  The
    internal elongation is deliberately not part of the metric.
    """
    t1, y1 = _state_history(traj)
    t2, y2 = _state_history(ref)
    if t1.shape != t2.shape or not np.array_equal(t1, t2):
        raise ValueError("time grids differ; trajectories are not comparable")
    series = np.linalg.norm(y1 - y2, axis=1)
    return float(np.sqrt(np.mean(series ** 2))), series


class NativeEvaluator:
    """Compiled-kernel evaluation backend for certificate recomputation."""

    def __init__(self, kern, models, records, scat, coupling):
        self.kern = kern
        self.models = models
        self.records = records
        self.scat = scat
        self.coupling = coupling
        self.descs = [_native_descriptor(m) for m in models]

    def map_block(self, step, i, vectors):
        kind, par = self.descs[i]
        x = self.records[step].states_before[i]
        a_vals = np.array([float(v[0]) for v in vectors])
        b_vals = self.kern.frozen_map_batch(kind, par, x, a_vals, self.scat.dt, self.scat.gamma)
        return [np.array([b]) for b in b_vals]

    def fixed_point(self, step, u0):
        (ka, pa), (kb, pb) = self.descs
        rec = self.records[step]
        return self.kern.dr_fixed_point_single(
            ka, pa, kb, pb,
            rec.states_before[0], rec.states_before[1],
            np.asarray(u0, dtype=float), self.scat.dt, self.scat.gamma,
            FIXED_POINT_TOL, FIXED_POINT_MAX_ITER,
        )

    def reduced_trace(self, step, budget, eps):
        (ka, pa), (kb, pb) = self.descs
        rec = self.records[step]
        its, shads, resid = self.kern.inner_loop_single(
            ka, pa, kb, pb,
            rec.states_before[0], rec.states_before[1],
            np.asarray(rec.b_prev, dtype=float), self.scat.dt, self.scat.gamma,
            int(budget), float(eps),
        )
        iterates = [its[j].copy() for j in range(its.shape[0])]
        shadows = [shads[j].copy() for j in range(shads.shape[0])]
        final = shadows[-1] if shadows else np.asarray(rec.b_prev, dtype=float).copy()
        return InnerLoopTrace(
            iterates=iterates,
            shadows=shadows,
            final_shadow=final,
            steps_used=len(shadows),
            step_residuals=[float(r) for r in resid],
        )


def certify_run(
    traj: Trajectory,
    seed: Optional[int] = None,
    per_step_count: int = 32,
    tol: float = CERT_TOL,
) -> CertificateReport:
    """Run all certificates on a recorded trajectory; attaches residuals.

    The augmented-storage residuals are stored on the trajectory so that
    a subsequent CSV write carries the full table.
    """
    cfg = traj.config
    model_a, model_b, coupling, scat = build_benchmark(cfg)
    models = (model_a, model_b)
    seed_val = cfg.seed if seed is None else int(seed)
    native = _usable_kernels(models)
    evaluator = None
    if native is not None:
        kern, _ = native
        evaluator = NativeEvaluator(kern, models, traj.records, scat, coupling)
    report = certify_trajectory(
        models,
        traj.records,
        scat,
        coupling,
        seed=seed_val,
        per_step_count=per_step_count,
        tol=tol,
        inner_budget=traj.budget,
        inner_eps=traj.eps,
        evaluator=evaluator,
    )
    traj.aug_residuals = report.aug_residuals
    return report


@dataclass
class SweepEntry:
    """Result of one budget within a sweep."""

    budget: int
    trajectory: Optional[Trajectory]
    report: Optional[CertificateReport]
    rms: float
    rms_series: Optional[np.ndarray]
    error: Optional[str] = None


@dataclass
class SweepReport:
    """Monolithic reference plus one entry per inner-iteration budget."""

    config: BenchmarkConfig
    variant: str
    eps: float
    seed: int
    monolithic: Trajectory
    monolithic_report: Optional[CertificateReport]
    entries: list

    @property
    def failures(self) -> list:
        return [e for e in self.entries if e.error is not None]

    @property
    def all_certified(self) -> bool:
        if self.failures:
            return False
        reports = [e.report for e in self.entries if e.report is not None]
        if self.monolithic_report is not None:
            reports.append(self.monolithic_report)
        return all(r.passed for r in reports)


def sweep(
    cfg: BenchmarkConfig,
    variant: str = "reduced",
    seed: Optional[int] = None,
    eps: Optional[float] = None,
    certify: bool = True,
) -> SweepReport:
    """Monolithic reference plus one certified run per budget.

    A failing budget is recorded with its error and does not abort the
    remaining budgets.
    """
    seed_val = cfg.seed if seed is None else int(seed)
    eps_val = cfg.eps if eps is None else float(eps)
    mono = run_monolithic(cfg)
    mono_report = certify_run(mono, seed=seed_val) if certify else None
    entries = []
    for budget in cfg.budgets:
        try:
            traj = run_budget(cfg, budget, variant=variant, eps=eps_val)
            rms, series = rms_state_error(traj, mono)
            report = certify_run(traj, seed=seed_val) if certify else None
            entries.append(SweepEntry(budget, traj, report, rms, series))
        except SolverFailure as exc:
            entries.append(SweepEntry(budget, None, None, float("nan"), None, error=str(exc)))
    return SweepReport(
        config=cfg,
        variant=variant,
        eps=eps_val,
        seed=seed_val,
        monolithic=mono,
        monolithic_report=mono_report,
        entries=entries,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_trajectory_csv(traj: Trajectory, path, meta: bool = True) -> Path:
    """Write the trajectory table (and its metadata sidecar).

    Floats are written in shortest round-trip form, so reading the file
    back reproduces every value bit-exactly.
    """
    path = Path(path)
    cols = trajectory_columns(traj)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in zip(*(cols[name] for name in TRAJECTORY_COLUMNS)):
            writer.writerow([_fmt(v) for v in row])
    if meta:
        write_trajectory_meta(traj, meta_path(path))
    return path


def meta_path(csv_path) -> Path:
    return Path(str(csv_path) + ".meta")


def write_trajectory_meta(traj: Trajectory, path) -> Path:
    """Sidecar with the config and run identity; enables recertification."""
    path = Path(path)
    lines = ["# trajectory metadata; enables certificate recomputation"]
    lines.extend(config_to_text(traj.config).splitlines())
    lines.append(f"run = {'monolithic' if traj.budget is None else 'budget'}")
    if traj.budget is not None:
        lines.append(f"run_budget = {traj.budget}")
    lines.append(f"run_variant = {traj.variant}")
    lines.append(f"run_eps = {float(traj.eps)!r}")
    lines.append(f"config_hash = {traj.config_hash}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_trajectory_meta(path):
    """Parse a metadata sidecar; returns ``(config, run_info)``."""
    known = {f.name for f in fields(BenchmarkConfig)}
    cfg_lines = []
    run = {"kind": None, "budget": None, "variant": "reduced", "eps": 0.0, "config_hash": None}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line or "=" not in line:
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key in known:
            cfg_lines.append(line)
        elif key == "run":
            run["kind"] = value
        elif key == "run_budget":
            run["budget"] = int(value)
        elif key == "run_variant":
            run["variant"] = value
        elif key == "run_eps":
            run["eps"] = float(value)
        elif key == "config_hash":
            run["config_hash"] = value
        else:
            raise ValueError(f"unknown metadata key {key!r}")
    cfg = parse_config_text("\n".join(cfg_lines))
    if run["kind"] not in ("budget", "monolithic"):
        raise ValueError("metadata does not identify the run kind")
    return cfg, run


@dataclass
class TrajectoryData:
    """Columnar view of a trajectory file; empty cells read as NaN."""

    columns: dict
    meta: Optional[tuple] = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def n_rows(self) -> int:
        return self.columns["t"].shape[0]


def read_trajectory_csv(path) -> TrajectoryData:
    """Read a trajectory table back into per-column float arrays."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        header = tuple(next(reader))
        if header != TRAJECTORY_COLUMNS:
            raise ValueError(f"unexpected trajectory header in {path}")
        rows = [row for row in reader if row]
    columns = {}
    for j, name in enumerate(TRAJECTORY_COLUMNS):
        columns[name] = np.array(
            [float(row[j]) if row[j] != "" else float("nan") for row in rows]
        )
    meta = None
    mpath = meta_path(path)
    if mpath.exists():
        meta = read_trajectory_meta(mpath)
    return TrajectoryData(columns=columns, meta=meta)


def write_sweep_outputs(report: SweepReport, out_dir) -> list:
    """Write all sweep artifacts; returns the created paths.

    Produces one trajectory CSV (plus metadata) per run, the summary
    table ``sweep_summary.csv`` and the long-format ``plot_data.csv``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    written.append(write_trajectory_csv(report.monolithic, out_dir / "trajectory_monolithic.csv"))
    written.append(meta_path(written[-1]))
    for entry in report.entries:
        if entry.trajectory is None:
            continue
        p = out_dir / f"trajectory_budget_{entry.budget}.csv"
        written.append(write_trajectory_csv(entry.trajectory, p))
        written.append(meta_path(p))

    summary = out_dir / "sweep_summary.csv"
    with summary.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["budget", "rms", "min_fne_margin", "max_pos_passivity", "max_pos_aug"])
        for entry in report.entries:
            if entry.error is not None or entry.report is None:
                continue
            writer.writerow(
                [
                    str(entry.budget),
                    _fmt(entry.rms),
                    _fmt(entry.report.margins_min),
                    _fmt(entry.report.max_positive_passivity),
                    _fmt(entry.report.max_positive_aug),
                ]
            )
    written.append(summary)

    plot = out_dir / "plot_data.csv"
    with plot.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["series", "budget", "t", "value"])

        def emit(series, budget_label, times, values):
            for t, v in zip(times, values):
                if v is None:
                    continue
                writer.writerow([series, budget_label, _fmt(float(t)), _fmt(float(v))])

        mono_cols = trajectory_columns(report.monolithic)
        emit("q1", "monolithic", mono_cols["t"], mono_cols["q1"])
        emit("q2", "monolithic", mono_cols["t"], mono_cols["q2"])
        emit("aug_residual", "monolithic", mono_cols["t"], mono_cols["aug_residual"])
        for entry in report.entries:
            if entry.trajectory is None:
                continue
            cols = trajectory_columns(entry.trajectory)
            label = str(entry.budget)
            emit("q1", label, cols["t"], cols["q1"])
            emit("q2", label, cols["t"], cols["q2"])
            emit("aug_residual", label, cols["t"], cols["aug_residual"])
            r_max = [
                None if ra is None else max(ra, rb)
                for ra, rb in zip(cols["r_A"], cols["r_B"])
            ]
            emit("passivity_residual_max", label, cols["t"], r_max)
            if entry.rms_series is not None:
                emit("state_error", label, cols["t"], entry.rms_series)
    written.append(plot)
    return written

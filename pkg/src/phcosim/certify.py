"""Numerical certificates for coupled runs.

Three families of a-posteriori checks, all evaluated from realized data
rather than from model assumptions:

* per-step, per-subsystem passivity residuals
      r_i = [H_i(x+) - H_i(x)] - (1/2)(||a_i||^2 - ||b_i+||^2)
  which must not be positive beyond rounding;

* firm nonexpansiveness (FNE) margins of the frozen wave maps,
      margin(alpha, beta) = <S(alpha) - S(beta), alpha - beta>
                            - ||S(alpha) - S(beta)||^2,
  sampled at realized inner iterates and at seeded random perturbations;

* the augmented-storage residual combining the total energy gain with
  the Fejer decrease of the inner iterates towards the step's interface
  fixed point; its positive part must vanish for every budget.

A sufficient spectral test (``gamma_rule_check``) and a two-sided
finite-difference estimator of the frozen incremental impedance are
provided to explain FNE margins for near-linear subsystems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .coupling import InnerLoopConfig, MacroStepRecord, dr_fixed_point, run_inner_loop, stacked_port_map
from .models import SubsystemModel, step_with_wave
from .scattering import (
    CouplingStructure,
    LiftedWaveState,
    PortSample,
    ScatteringConfig,
    WavePair,
    port_to_wave,
    wave_power,
)

__all__ = [
    "CERT_TOL",
    "TestPairSet",
    "GammaRuleResult",
    "CertificateReport",
    "fne_margin",
    "make_test_pairs",
    "passivity_residual",
    "augmented_storage_residual",
    "gamma_rule_check",
    "estimate_discrete_impedance",
    "certify_trajectory",
]

CERT_TOL = 1e-12
DEFAULT_PAIRS_PER_STEP = 32
PERTURBATION_SCALE = 0.1


def fne_margin(S: Callable[[np.ndarray], np.ndarray], alpha: np.ndarray, beta: np.ndarray) -> float:
    """FNE margin of one wave-map block at a test pair; >= 0 when firmly nonexpansive."""
    da = np.asarray(alpha, dtype=float) - np.asarray(beta, dtype=float)
    ds = np.asarray(S(alpha), dtype=float) - np.asarray(S(beta), dtype=float)
    return float(ds @ da) - float(ds @ ds)


def passivity_residual(energy_before: float, energy_after: float, wave: WavePair) -> float:
    """Energy gained beyond the wave supply; certified runs keep this <= tol."""
    return (energy_after - energy_before) - wave_power(wave)


def _incident_of(iterate) -> np.ndarray:
    if isinstance(iterate, LiftedWaveState):
        return iterate.a
    return np.asarray(iterate, dtype=float)


@dataclass(frozen=True)
class TestPairSet:
    """Reproducible FNE test pairs, grouped by macro step and subsystem.

    ``by_step[n][i]`` is the list of ``(alpha, beta)`` pairs for subsystem
    ``i`` at step ``n``: the realized consecutive incident iterates plus
    ``per_step_count`` seeded Gaussian pairs around the realized incident
    wave, with scale ``0.1 (1 + ||a^n||)``.
    """

    by_step: tuple
    seed: int
    per_step_count: int


def make_test_pairs(
    records: Sequence[MacroStepRecord],
    coupling: CouplingStructure,
    seed: int,
    per_step_count: int = DEFAULT_PAIRS_PER_STEP,
) -> TestPairSet:
    """Build the FNE test-pair family for a recorded trajectory."""
    rng = np.random.default_rng(seed)
    slices = coupling.block_slices()
    by_step = []
    for rec in records:
        step_pairs = [[] for _ in slices]
        if rec.trace is not None:
            its = rec.trace.iterates
            for k in range(len(its) - 1):
                cur = _incident_of(its[k])
                nxt = _incident_of(its[k + 1])
                for i, sl in enumerate(slices):
                    step_pairs[i].append((cur[sl].copy(), nxt[sl].copy()))
        a = rec.incident
        scale = PERTURBATION_SCALE * (1.0 + float(np.linalg.norm(a)))
        for _ in range(per_step_count):
            d1 = rng.normal(0.0, scale, a.shape[0])
            d2 = rng.normal(0.0, scale, a.shape[0])
            alpha = a + d1
            beta = a + d2
            for i, sl in enumerate(slices):
                step_pairs[i].append((alpha[sl].copy(), beta[sl].copy()))
        by_step.append(tuple(tuple(p) for p in step_pairs))
    return TestPairSet(by_step=tuple(by_step), seed=seed, per_step_count=per_step_count)


def augmented_storage_residual(
    record: MacroStepRecord,
    u_dagger: np.ndarray,
    coupling: CouplingStructure,
    trace=None,
) -> float:
    """Residual of the one-step augmented energy inequality.

    Combines the total energy gain, the Fejer decrease of the reduced
    iterates toward ``u_dagger``, and the realized wave supply; a value
    above rounding level falsifies the early-termination energy bound.
    """
    trace = record.trace if trace is None else trace
    if trace is not None and trace.iterates and isinstance(trace.iterates[0], LiftedWaveState):
        raise ValueError("augmented storage certificate needs a reduced-variant trace")
    if trace is None or len(trace.iterates) == 0:
        u_first = u_last = coupling.apply(record.b_prev)
    else:
        u_first = np.asarray(trace.iterates[0], dtype=float)
        u_last = np.asarray(trace.iterates[-1], dtype=float)
    u_dagger = np.asarray(u_dagger, dtype=float)
    gain = sum(record.energies_after) - sum(record.energies_before)
    fejer = 0.5 * float(np.sum((u_last - u_dagger) ** 2)) - 0.5 * float(
        np.sum((u_first - u_dagger) ** 2)
    )
    supply = 0.5 * (
        float(record.incident @ record.incident) - float(record.outgoing @ record.outgoing)
    )
    return gain + fejer - supply


@dataclass(frozen=True)
class GammaRuleResult:
    """Outcome of the spectral sufficient condition for FNE wave maps."""

    passed: bool
    gamma: float
    impedance_eigenvalues: np.ndarray
    wave_eigenvalues: np.ndarray
    asymmetry: float


def gamma_rule_check(Z: np.ndarray, gamma: float) -> GammaRuleResult:
    """Check ``Z >= gamma I`` for a symmetric incremental impedance.

    When the rule passes, the linearized wave map has spectrum
    ``(lam - gamma) / (lam + gamma)`` inside ``[0, 1)``, which implies
    firm nonexpansiveness of the frozen map in the linear case.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[0] != Z.shape[1]:
        raise ValueError(f"impedance must be square, got {Z.shape}")
    asym = float(np.max(np.abs(Z - Z.T))) if Z.size else 0.0
    Zs = 0.5 * (Z + Z.T)
    lam = np.linalg.eigvalsh(Zs)
    wave = (lam - gamma) / (lam + gamma)
    return GammaRuleResult(
        passed=bool(np.min(lam) >= gamma),
        gamma=gamma,
        impedance_eigenvalues=lam,
        wave_eigenvalues=wave,
        asymmetry=asym,
    )


def estimate_discrete_impedance(
    model: SubsystemModel,
    x_frozen: np.ndarray,
    scat: ScatteringConfig,
    base_port: PortSample,
    rel_step: float = 1e-6,
) -> np.ndarray:
    """Estimate the incremental impedance de/df of the frozen step map.

    Central finite differences along the incident-wave directions around
    the operating point; the resulting matrix is symmetrized.  For a pure
    feedthrough resistor ``e = c f`` this returns ``c`` exactly up to the
    differencing error.
    """
    m = model.port_dim
    a0 = port_to_wave(base_port, scat).a
    h = rel_step * (1.0 + float(np.linalg.norm(a0)))
    dE = np.empty((m, m))
    dF = np.empty((m, m))
    for j in range(m):
        ap = a0.copy()
        am = a0.copy()
        ap[j] += h
        am[j] -= h
        rp = step_with_wave(model, x_frozen, ap, scat)
        rm = step_with_wave(model, x_frozen, am, scat)
        dE[:, j] = (rp.port.e - rm.port.e) / (2.0 * h)
        dF[:, j] = (rp.port.f - rm.port.f) / (2.0 * h)
    Z = dE @ np.linalg.inv(dF)
    return 0.5 * (Z + Z.T)


class PythonEvaluator:
    """Frozen-map evaluation backend used by :func:`certify_trajectory`.

    Rebuilds each step's frozen maps from the recorded departure states;
    a compiled backend may substitute batched equivalents.
    """

    def __init__(self, models, records, scat, coupling):
        self.models = models
        self.records = records
        self.scat = scat
        self.coupling = coupling

    def _stacked(self, step: int):
        rec = self.records[step]
        return stacked_port_map(self.models, rec.states_before, self.scat, self.coupling)

    def map_block(self, step: int, i: int, vectors):
        """Apply subsystem i's frozen map at the given step to each vector."""
        model = self.models[i]
        x = self.records[step].states_before[i]
        return [step_with_wave(model, x, np.asarray(v, float), self.scat).wave.b for v in vectors]

    def fixed_point(self, step: int, u0: np.ndarray) -> np.ndarray:
        return dr_fixed_point(self._stacked(step), u0, self.coupling)

    def reduced_trace(self, step: int, budget: int, eps: float):
        rec = self.records[step]
        cfg = InnerLoopConfig(budget=budget, eps=eps, variant="reduced")
        return run_inner_loop(self._stacked(step), rec.b_prev, self.coupling, cfg)


@dataclass
class CertificateReport:
    """Aggregated certificate outcome for one trajectory."""

    tol: float
    n_steps: int
    margins_min: float
    margins_argmin: tuple
    margin_count: int
    margin_violations: int
    passivity: np.ndarray
    max_positive_passivity: float
    aug_residuals: np.ndarray
    max_positive_aug: float
    pair_seed: int

    @property
    def passed(self) -> bool:
        return (
            self.margins_min >= -self.tol
            and self.max_positive_passivity <= self.tol
            and self.max_positive_aug <= self.tol
        )

    def summary_lines(self) -> list:
        ok = "PASS" if self.passed else "FAIL"
        return [
            f"passivity residual: max positive part {self.max_positive_passivity:.3e} "
            f"(tol {self.tol:.1e})",
            f"fne margins: min {self.margins_min:.3e} at (step, subsystem)="
            f"{self.margins_argmin} over {self.margin_count} pairs",
            f"augmented storage: max positive residual {self.max_positive_aug:.3e}",
            f"certificates: {ok}",
        ]


def certify_trajectory(
    models: Sequence[SubsystemModel],
    records: Sequence[MacroStepRecord],
    scat: ScatteringConfig,
    coupling: CouplingStructure,
    seed: int,
    per_step_count: int = DEFAULT_PAIRS_PER_STEP,
    tol: float = CERT_TOL,
    inner_budget: Optional[int] = None,
    inner_eps: float = 0.0,
    evaluator=None,
    pairs: Optional[TestPairSet] = None,
) -> CertificateReport:
    """Evaluate all certificates along a recorded trajectory.

    For lifted-variant or monolithic records the augmented-storage check
    re-runs a matched reduced inner loop (``inner_budget`` iterations)
    from the recorded warm start, since the Fejer term is defined for the
    reduced iterates.  Margins and passivity residuals need no re-run.
    """
    if evaluator is None:
        evaluator = PythonEvaluator(models, records, scat, coupling)
    if pairs is None:
        pairs = make_test_pairs(records, coupling, seed, per_step_count)

    n_steps = len(records)
    n_sub = len(coupling.port_dims)
    margins_min = np.inf
    margins_argmin = (-1, -1)
    margin_count = 0
    margin_violations = 0
    passivity = np.empty((n_steps, n_sub))
    aug = np.empty(n_steps)

    for n, rec in enumerate(records):
        for i in range(n_sub):
            passivity[n, i] = rec.passivity_residuals[i]
        step_pairs = pairs.by_step[n]
        for i in range(n_sub):
            plist = step_pairs[i]
            if not plist:
                continue
            alphas = [p[0] for p in plist]
            betas = [p[1] for p in plist]
            s_alpha = evaluator.map_block(n, i, alphas)
            s_beta = evaluator.map_block(n, i, betas)
            for (al, be, sa, sb) in zip(alphas, betas, s_alpha, s_beta):
                da = al - be
                ds = sa - sb
                marg = float(ds @ da) - float(ds @ ds)
                margin_count += 1
                if marg < margins_min:
                    margins_min = marg
                    margins_argmin = (n, i)
                if marg < -tol:
                    margin_violations += 1

        trace = rec.trace
        needs_rerun = trace is not None and trace.iterates and isinstance(
            trace.iterates[0], LiftedWaveState
        )
        if needs_rerun:
            budget = inner_budget if inner_budget is not None else trace.steps_used
            trace = evaluator.reduced_trace(n, budget, inner_eps)
        if trace is None or len(trace.iterates) < 2:
            # no inner movement: the Fejer term vanishes for any anchor
            anchor = coupling.apply(rec.b_prev)
            aug[n] = augmented_storage_residual(rec, anchor, coupling, trace=trace)
        else:
            u_init = np.asarray(trace.iterates[-1], dtype=float)
            u_dagger = evaluator.fixed_point(n, u_init)
            aug[n] = augmented_storage_residual(rec, u_dagger, coupling, trace=trace)

    if margin_count == 0:
        margins_min = 0.0
    return CertificateReport(
        tol=tol,
        n_steps=n_steps,
        margins_min=float(margins_min),
        margins_argmin=margins_argmin,
        margin_count=margin_count,
        margin_violations=margin_violations,
        passivity=passivity,
        max_positive_passivity=float(np.max(np.maximum(passivity, 0.0))) if n_steps else 0.0,
        aug_residuals=aug,
        max_positive_aug=float(np.max(np.maximum(aug, 0.0))) if n_steps else 0.0,
        pair_seed=pairs.seed,
    )

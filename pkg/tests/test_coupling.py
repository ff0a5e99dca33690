"""Inner coupling iteration: Douglas-Rachford updates, budgeted loop,
macro steps and the monolithic reference."""

import numpy as np
import pytest
from conftest import make_linear_model

from phcosim.bench import build_benchmark, initial_outgoing_wave, initial_states
from phcosim.coupling import (
    InnerLoopConfig,
    MacroStepRecord,
    dr_fixed_point,
    lifted_dr_step,
    macro_step,
    monolithic_interface_solve,
    monolithic_step,
    reduced_dr_step,
    run_inner_loop,
    stacked_port_map,
)
from phcosim.models import SolverFailure, step_with_wave
from phcosim.scattering import CouplingStructure, LiftedWaveState, ScatteringConfig


def identity_map(u):
    return u.copy()


@pytest.fixture()
def frozen_benchmark(benchmark):
    """Stacked frozen wave map and warm-start waves at the initial state."""
    models = benchmark["models"]
    states = benchmark["x0"]
    scat = benchmark["scat"]
    coupling = benchmark["coupling"]
    S = stacked_port_map(models, states, scat, coupling)
    b0 = initial_outgoing_wave(models, states, scat)
    return S, b0, coupling


# ---------------------------------------------------------------------------
# single Douglas-Rachford updates


def test_reduced_step_identity_consistent_point_is_fixed(swap1):
    u = np.array([0.7, 0.7])
    u_next, b_hat = reduced_dr_step(identity_map, u, swap1)
    assert np.allclose(b_hat, u, atol=1e-15)
    assert np.allclose(u_next, u, atol=1e-15)


def test_reduced_step_identity_frozen_example(swap1):
    # resolvent (2I - P)^-1 = [[2, 1], [1, 2]] / 3 for the two-port swap
    u = np.array([1.0, 0.0])
    u_next, b_hat = reduced_dr_step(identity_map, u, swap1)
    assert np.allclose(b_hat, [1.0, 0.0], atol=1e-15)
    assert np.allclose(u_next, [2.0 / 3.0, 1.0 / 3.0], atol=1e-14)


def test_lifted_step_consistent_pair_is_fixed(swap1):
    b = np.array([0.4, 0.4])
    zeta = LiftedWaveState.from_parts(swap1.apply(b), b)
    zeta_next, b_hat = lifted_dr_step(identity_map, zeta, swap1)
    assert np.allclose(b_hat, b, atol=1e-15)
    assert np.allclose(zeta_next.zeta, zeta.zeta, atol=1e-14)


def test_lifted_and_reduced_variants_correspond(frozen_benchmark):
    # the two formulations are distinct iterations that share the first
    # shadow (both evaluate S(P b_init)), the stationary waves, and the
    # whole shadow sequence once warm-started near the stationary point;
    # away from it the sequences legitimately diverge
    S, b0, coupling = frozen_benchmark
    tr_red = run_inner_loop(S, b0, coupling, InnerLoopConfig(budget=3))
    tr_lif = run_inner_loop(S, b0, coupling, InnerLoopConfig(budget=3, variant="lifted"))
    assert np.array_equal(tr_red.shadows[0], tr_lif.shadows[0])

    loop = InnerLoopConfig(budget=500, eps=1e-12)
    lim_red = run_inner_loop(S, b0, coupling, loop).final_shadow
    lim_lif = run_inner_loop(S, b0, coupling, InnerLoopConfig(budget=500, eps=1e-12, variant="lifted")).final_shadow
    scale = 1.0 + np.linalg.norm(lim_red)
    assert np.linalg.norm(lim_red - lim_lif) <= 1e-9 * scale

    rng = np.random.default_rng(808)
    b_near = lim_red + 1e-12 * scale * rng.normal(size=lim_red.shape)
    tr_red = run_inner_loop(S, b_near, coupling, InnerLoopConfig(budget=6))
    tr_lif = run_inner_loop(S, b_near, coupling, InnerLoopConfig(budget=6, variant="lifted"))
    for k in range(6):
        assert np.linalg.norm(tr_red.shadows[k] - tr_lif.shadows[k]) <= 1e-10 * scale


# ---------------------------------------------------------------------------
# budgeted inner loop


def test_zero_budget_reproduces_explicit_interface(frozen_benchmark):
    S, b0, coupling = frozen_benchmark
    for variant in ("reduced", "lifted"):
        trace = run_inner_loop(S, b0, coupling, InnerLoopConfig(budget=0, variant=variant))
        assert trace.steps_used == 0
        assert trace.shadows == []
        assert trace.step_residuals == []
        assert np.array_equal(trace.final_shadow, b0)
        assert len(trace.iterates) == 1
    trace = run_inner_loop(S, b0, coupling, InnerLoopConfig(budget=0))
    assert np.array_equal(trace.iterates[0], coupling.apply(b0))


def test_early_termination_reaches_interface_solution(frozen_benchmark):
    S, b0, coupling = frozen_benchmark
    trace = run_inner_loop(S, b0, coupling, InnerLoopConfig(budget=500, eps=1e-12))
    assert trace.steps_used < 500
    assert trace.step_residuals[-1] <= 1e-12
    b_star = monolithic_interface_solve(S, b0, coupling)
    scale = 1.0 + np.linalg.norm(b_star)
    assert np.linalg.norm(trace.final_shadow - b_star) <= 1e-10 * scale


def test_iterates_are_fejer_monotone(frozen_benchmark):
    # distance to the stationary point never increases along the iteration
    S, b0, coupling = frozen_benchmark
    u_dagger = dr_fixed_point(S, coupling.apply(b0), coupling)
    trace = run_inner_loop(S, b0, coupling, InnerLoopConfig(budget=30))
    dists = [np.linalg.norm(u - u_dagger) for u in trace.iterates]
    for k in range(len(dists) - 1):
        assert dists[k + 1] - dists[k] <= 1e-12


def test_inner_loop_is_deterministic(frozen_benchmark):
    S, b0, coupling = frozen_benchmark
    t1 = run_inner_loop(S, b0, coupling, InnerLoopConfig(budget=12))
    t2 = run_inner_loop(S, b0, coupling, InnerLoopConfig(budget=12))
    for a, b in zip(t1.iterates, t2.iterates):
        assert np.array_equal(a, b)
    for a, b in zip(t1.shadows, t2.shadows):
        assert np.array_equal(a, b)


def test_inner_loop_config_validation():
    with pytest.raises(ValueError):
        InnerLoopConfig(budget=-1)
    with pytest.raises(ValueError):
        InnerLoopConfig(budget=3, eps=-1e-3)
    with pytest.raises(ValueError):
        InnerLoopConfig(budget=3, eps=float("nan"))
    with pytest.raises(ValueError):
        InnerLoopConfig(budget=3, variant="jacobi")
    InnerLoopConfig(budget=0)  # explicit interface is a valid budget


# ---------------------------------------------------------------------------
# stationary points and the monolithic interface solve


def test_fixed_point_identity_map_projects_onto_consistent_waves(swap1):
    # for S = id any consistent stack solves the interface; the iteration
    # contracts the antisymmetric part and keeps the symmetric one
    u = dr_fixed_point(identity_map, np.array([0.2, 0.8]), swap1)
    assert np.allclose(u, [0.5, 0.5], atol=1e-12)


def test_monolithic_solve_identity_map_selects_consistent_part(swap1):
    # Newton sees the singular I - P and falls back to the fixed point
    b = monolithic_interface_solve(identity_map, np.array([1.0, 0.0]), swap1)
    assert np.allclose(b, [0.5, 0.5], atol=1e-12)
    assert np.linalg.norm(b - swap1.apply(b)) <= 1e-12


def test_fixed_point_unique_across_starts(frozen_benchmark):
    S, b0, coupling = frozen_benchmark
    rng = np.random.default_rng(707)
    base = dr_fixed_point(S, coupling.apply(b0), coupling)
    for _ in range(8):
        u = dr_fixed_point(S, rng.normal(scale=5.0, size=2), coupling)
        assert np.linalg.norm(u - base) <= 1e-9 * (1.0 + np.linalg.norm(base))


def test_linear_interface_solution_matches_dense_solve(scat_default, swap1):
    # two linear subsystems: each frozen map is affine, b = s0 + M u
    # blockwise, so the interface condition is one small linear system
    models = (make_linear_model(m=4.0, k=50.0, c=0.1), make_linear_model(m=2.0, k=30.0, c=0.0))
    states = (np.array([0.3, -0.1]), np.array([-0.2, 0.5]))
    S = stacked_port_map(models, states, scat_default, swap1)
    s0 = S(np.zeros(2))
    M = np.column_stack([S(e) - s0 for e in np.eye(2)])
    b_dense = np.linalg.solve(np.eye(2) - M @ swap1.P, s0)
    b_star = monolithic_interface_solve(S, np.zeros(2), swap1)
    assert np.linalg.norm(b_star - b_dense) <= 1e-11 * (1.0 + np.linalg.norm(b_dense))


def test_newton_and_iterative_interface_solutions_agree(frozen_benchmark):
    S, b0, coupling = frozen_benchmark
    b_newton = monolithic_interface_solve(S, b0, coupling)
    u_dagger = dr_fixed_point(S, coupling.apply(b0), coupling)
    b_dr = S(u_dagger)
    assert np.linalg.norm(b_newton - b_dr) <= 1e-11 * (1.0 + np.linalg.norm(b_newton))


# ---------------------------------------------------------------------------
# macro steps


def test_macro_step_at_rest_stays_at_rest(benchmark):
    models = benchmark["models"]
    states = (np.zeros(2), np.zeros(3))
    rec = macro_step(
        models, states, np.zeros(2), benchmark["scat"], benchmark["coupling"], InnerLoopConfig(budget=5)
    )
    assert isinstance(rec, MacroStepRecord)
    for x in rec.states_after:
        assert np.all(x == 0.0)
    assert np.all(rec.outgoing == 0.0)
    assert rec.passivity_residuals == (0.0, 0.0)


def test_zero_budget_macro_step_equals_hand_composition(benchmark):
    models = benchmark["models"]
    states = initial_states(benchmark["cfg"])
    scat = benchmark["scat"]
    coupling = benchmark["coupling"]
    b_prev = initial_outgoing_wave(models, states, scat)
    rec = macro_step(models, states, b_prev, scat, coupling, InnerLoopConfig(budget=0))
    # explicit interface: route the stale waves, step each block once
    a = coupling.apply(b_prev)
    res_a = step_with_wave(models[0], states[0], a[:1], scat)
    res_b = step_with_wave(models[1], states[1], a[1:], scat)
    assert np.array_equal(rec.incident, a)
    assert np.array_equal(rec.states_after[0], res_a.state)
    assert np.array_equal(rec.states_after[1], res_b.state)
    assert np.array_equal(rec.outgoing, np.concatenate([res_a.wave.b, res_b.wave.b]))


def test_macro_step_is_deterministic(benchmark):
    models = benchmark["models"]
    states = initial_states(benchmark["cfg"])
    scat = benchmark["scat"]
    coupling = benchmark["coupling"]
    b_prev = initial_outgoing_wave(models, states, scat)
    r1 = macro_step(models, states, b_prev, scat, coupling, InnerLoopConfig(budget=7))
    r2 = macro_step(models, states, b_prev, scat, coupling, InnerLoopConfig(budget=7))
    assert np.array_equal(r1.outgoing, r2.outgoing)
    assert np.array_equal(r1.states_after[0], r2.states_after[0])
    assert np.array_equal(r1.states_after[1], r2.states_after[1])


def test_monolithic_step_at_rest_stays_at_rest(benchmark):
    models = benchmark["models"]
    rec = monolithic_step(
        models, (np.zeros(2), np.zeros(3)), np.zeros(2), benchmark["scat"], benchmark["coupling"]
    )
    for x in rec.states_after:
        assert np.all(x == 0.0)
    assert np.all(rec.outgoing == 0.0)
    assert rec.monolithic


def test_monolithic_step_conserves_energy_without_dissipation(table1):
    # with every damper removed the interface routing is lossless and the
    # discrete gradient is exact, so total storage is a step invariant
    import dataclasses

    cfg = dataclasses.replace(table1, c12=0.0, T=0.5)
    models_a, models_b, coupling, scat = build_benchmark(cfg)
    models = (models_a, models_b)
    states = initial_states(cfg)
    b = initial_outgoing_wave(models, states, scat)
    h0 = sum(m.energy(x) for m, x in zip(models, states))
    for _ in range(20):
        rec = monolithic_step(models, states, b, scat, coupling)
        h1 = sum(rec.energies_after)
        assert abs(h1 - sum(rec.energies_before)) <= 1e-12 * (1.0 + h0)
        states = rec.states_after
        b = rec.outgoing


def test_monolithic_step_never_creates_energy(benchmark):
    models = benchmark["models"]
    states = initial_states(benchmark["cfg"])
    scat = benchmark["scat"]
    coupling = benchmark["coupling"]
    b = initial_outgoing_wave(models, states, scat)
    h0 = sum(m.energy(x) for m, x in zip(models, states))
    for _ in range(20):
        rec = monolithic_step(models, states, b, scat, coupling)
        gain = sum(rec.energies_after) - sum(rec.energies_before)
        assert gain <= 1e-12 * (1.0 + h0)
        states = rec.states_after
        b = rec.outgoing

"""Implicit one-step wave solver: energy balances, linear-solve oracles,
port sampling and the frozen one-step map."""

import numpy as np
import pytest
from conftest import make_linear_model

from phcosim.models import (
    SolverFailure,
    StepResult,
    SubsystemModel,
    free_port_sample,
    frozen_port_map,
    step_with_wave,
)
from phcosim.scattering import ScatteringConfig


def wave_energy(a, b):
    return 0.5 * (float(a @ a) - float(b @ b))


# ---------------------------------------------------------------------------
# equilibrium and shape validation


def test_equilibrium_is_exact_fixed_point(benchmark):
    # at x = 0 with no incident wave every residual term vanishes
    # identically, so the solver must return bitwise zeros in zero iterations
    for model in benchmark["models"]:
        res = step_with_wave(model, np.zeros(model.state_dim), np.zeros(model.port_dim), benchmark["scat"])
        assert isinstance(res, StepResult)
        assert np.all(res.state == 0.0)
        assert np.all(res.wave.b == 0.0)
        assert np.all(res.port.e == 0.0)
        assert np.all(res.port.f == 0.0)
        assert res.iterations == 0
        assert res.residual == 0.0


def test_step_rejects_wrong_shapes(benchmark, scat_default):
    model_a, _ = benchmark["models"]
    with pytest.raises(ValueError):
        step_with_wave(model_a, np.zeros(3), np.zeros(1), scat_default)
    with pytest.raises(ValueError):
        step_with_wave(model_a, np.zeros(2), np.zeros(2), scat_default)


def test_model_validation():
    with pytest.raises(ValueError):
        SubsystemModel(
            label="bad",
            state_dim=0,
            port_dim=1,
            hamiltonian=lambda x: 0.0,
            grad_hamiltonian=lambda x: x,
            structure_J=lambda x: np.zeros((0, 0)),
            dissipation_R=lambda x: np.zeros((0, 0)),
            port_G=lambda x: np.zeros((0, 1)),
        )
    with pytest.raises(ValueError):
        SubsystemModel(
            label="bad",
            state_dim=1,
            port_dim=1,
            hamiltonian=lambda x: 0.0,
            grad_hamiltonian=lambda x: x,
            structure_J=lambda x: np.zeros((1, 1)),
            dissipation_R=lambda x: np.zeros((1, 1)),
            port_G=lambda x: np.ones((1, 1)),
            port_input="voltage",
        )


# ---------------------------------------------------------------------------
# discrete energy balance
#
# The exact-secant property of the discrete gradient turns the continuous
# power balance into an algebraic identity of the computed step:
#
#   H(x') - H(x) = (wave energy in) - dt * (dissipated power)
#
# with wave energy 0.5 (|a|^2 - |b|^2).  Lossless models must meet it with
# equality; damped models must never gain more than the port supplies.


def test_lossless_linear_energy_balance():
    model = make_linear_model(c=0.0)
    scat = ScatteringConfig(gamma=0.4, dt=0.01)
    rng = np.random.default_rng(101)
    for _ in range(200):
        x = rng.normal(size=2)
        a = rng.normal(size=1)
        res = step_with_wave(model, x, a, scat)
        gain = model.energy(res.state) - model.energy(x)
        supplied = wave_energy(a, res.wave.b)
        scale = 1.0 + abs(gain) + abs(supplied) + model.energy(x)
        assert abs(gain - supplied) <= 1e-12 * scale


def test_lossless_nonlinear_energy_balance(benchmark):
    # the first benchmark subsystem is undamped, so the quartic storage
    # must track the wave supply exactly across a multi-step run
    model_a, _ = benchmark["models"]
    scat = benchmark["scat"]
    rng = np.random.default_rng(202)
    x = benchmark["x0"][0].copy()
    for _ in range(50):
        a = rng.normal(size=1)
        res = step_with_wave(model_a, x, a, scat)
        gain = model_a.energy(res.state) - model_a.energy(x)
        supplied = wave_energy(a, res.wave.b)
        scale = 1.0 + abs(gain) + abs(supplied) + model_a.energy(x)
        assert abs(gain - supplied) <= 1e-12 * scale
        x = res.state


def test_damped_step_never_gains_energy():
    model = make_linear_model(c=0.9)
    scat = ScatteringConfig(gamma=0.4, dt=0.01)
    rng = np.random.default_rng(303)
    for _ in range(200):
        x = rng.normal(size=2)
        a = rng.normal(size=1)
        res = step_with_wave(model, x, a, scat)
        deficit = model.energy(res.state) - model.energy(x) - wave_energy(a, res.wave.b)
        scale = 1.0 + model.energy(x) + float(a @ a)
        assert deficit <= 1e-13 * scale
    # with the momentum in motion the damper must actually burn energy
    res = step_with_wave(model, np.array([0.2, 1.5]), np.array([0.7]), scat)
    deficit = model.energy(res.state) - model.energy(np.array([0.2, 1.5])) - wave_energy(
        np.array([0.7]), res.wave.b
    )
    assert deficit < -1e-8


def test_feedthrough_step_never_gains_energy(benchmark):
    # second benchmark subsystem: flow input, distinct in/out maps and a
    # direct feedthrough; the balance closes through c12 (f + v)^2 >= 0
    _, model_b = benchmark["models"]
    scat = benchmark["scat"]
    rng = np.random.default_rng(404)
    for _ in range(200):
        x = rng.normal(size=3)
        a = rng.normal(size=1)
        res = step_with_wave(model_b, x, a, scat)
        deficit = model_b.energy(res.state) - model_b.energy(x) - wave_energy(a, res.wave.b)
        scale = 1.0 + model_b.energy(x) + float(a @ a)
        assert deficit <= 1e-12 * scale


# ---------------------------------------------------------------------------
# dense linear-solve oracles
#
# For quadratic storage the implicit step is one linear system in
# (x', e, f).  Assembling and solving that system directly, without the
# Newton machinery, gives an independent answer the solver must reproduce.


def _direct_effort_step(K, J, R, G, scat, x, a):
    # rows: state update, readout f = G^T K (x + x')/2, wave constraint
    n = K.shape[0]
    m = G.shape[1]
    A_lin = (J - R) @ K
    M = np.zeros((n + 2 * m, n + 2 * m))
    rhs = np.zeros(n + 2 * m)
    M[:n, :n] = np.eye(n) - 0.5 * scat.dt * A_lin
    M[:n, n : n + m] = -scat.dt * G
    M[n : n + m, :n] = -0.5 * G.T @ K
    M[n : n + m, n + m :] = np.eye(m)
    M[n + m :, n : n + m] = scat.wave_scale * np.eye(m)
    M[n + m :, n + m :] = scat.wave_scale * scat.gamma * np.eye(m)
    rhs[:n] = x + 0.5 * scat.dt * A_lin @ x
    rhs[n : n + m] = 0.5 * G.T @ K @ x
    rhs[n + m :] = a
    return np.linalg.solve(M, rhs)


def _direct_flow_step(K, J, R, G_in, G_out, D, scat, x, a):
    # flow input: e = G_out^T K (x + x')/2 + D f drives the readout row
    n = K.shape[0]
    m = G_in.shape[1]
    A_lin = (J - R) @ K
    M = np.zeros((n + 2 * m, n + 2 * m))
    rhs = np.zeros(n + 2 * m)
    M[:n, :n] = np.eye(n) - 0.5 * scat.dt * A_lin
    M[:n, n + m :] = -scat.dt * G_in
    M[n : n + m, :n] = -0.5 * G_out.T @ K
    M[n : n + m, n : n + m] = np.eye(m)
    M[n : n + m, n + m :] = -D
    M[n + m :, n : n + m] = scat.wave_scale * np.eye(m)
    M[n + m :, n + m :] = scat.wave_scale * scat.gamma * np.eye(m)
    rhs[:n] = x + 0.5 * scat.dt * A_lin @ x
    rhs[n : n + m] = 0.5 * G_out.T @ K @ x
    rhs[n + m :] = a
    return np.linalg.solve(M, rhs)


def test_linear_effort_step_matches_direct_solve():
    m_mass, k, c = 4.0, 50.0, 0.3
    model = make_linear_model(m=m_mass, k=k, c=c)
    scat = ScatteringConfig(gamma=0.4, dt=0.01)
    K = np.diag([k, 1.0 / m_mass])
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    R = np.diag([0.0, c])
    G = np.array([[0.0], [1.0]])
    rng = np.random.default_rng(505)
    for _ in range(1000):
        x = rng.normal(size=2)
        a = rng.normal(size=1)
        z = _direct_effort_step(K, J, R, G, scat, x, a)
        res = step_with_wave(model, x, a, scat)
        got = np.concatenate([res.state, res.port.e, res.port.f])
        assert np.linalg.norm(got - z) <= 1e-11 * (1.0 + np.linalg.norm(z))


def test_benchmark_flow_step_matches_direct_solve(benchmark):
    _, model_b = benchmark["models"]
    cfg = benchmark["cfg"]
    scat = benchmark["scat"]
    K = np.diag([cfg.k2, 1.0 / cfg.m2, cfg.k12])
    J = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
    R = np.diag([0.0, cfg.c2 + cfg.c12, 0.0])
    G_in = np.array([[0.0], [-cfg.c12], [-1.0]])
    G_out = np.array([[0.0], [cfg.c12], [-1.0]])
    D = np.array([[cfg.c12]])
    rng = np.random.default_rng(606)
    for _ in range(1000):
        x = rng.normal(size=3)
        a = rng.normal(size=1)
        z = _direct_flow_step(K, J, R, G_in, G_out, D, scat, x, a)
        res = step_with_wave(model_b, x, a, scat)
        got = np.concatenate([res.state, res.port.e, res.port.f])
        assert np.linalg.norm(got - z) <= 1e-11 * (1.0 + np.linalg.norm(z))


# ---------------------------------------------------------------------------
# consistency order
#
# Feeding a = 0 every step terminates the port resistively (e = -gamma f),
# so the exact dynamics is x' = (J - R - gamma G G^T) grad H.  The implicit
# midpoint-type step should self-converge at second order against a fine
# reference of itself.


def test_terminated_duffing_step_is_second_order(benchmark):
    model_a, _ = benchmark["models"]
    cfg = benchmark["cfg"]
    x0 = benchmark["x0"][0]
    window = 0.16

    def run(dt):
        scat = ScatteringConfig(gamma=cfg.gamma, dt=dt)
        x = x0.copy()
        for _ in range(round(window / dt)):
            x = step_with_wave(model_a, x, np.zeros(1), scat).state
        return x

    ref = run(cfg.dt / 64.0)
    err_coarse = np.linalg.norm(run(cfg.dt) - ref)
    err_fine = np.linalg.norm(run(cfg.dt / 2.0) - ref)
    assert err_fine < err_coarse
    assert 3.5 <= err_coarse / err_fine <= 4.5


# ---------------------------------------------------------------------------
# free-port sampling (warm-start seeds)


def test_free_port_sample_effort_model(benchmark):
    model_a, _ = benchmark["models"]
    sample = free_port_sample(model_a, benchmark["x0"][0])
    # at rest the velocity readout is zero and the effort is forced to zero
    assert np.all(sample.e == 0.0)
    assert np.all(sample.f == 0.0)


def test_free_port_sample_flow_model_inverts_feedthrough(benchmark):
    _, model_b = benchmark["models"]
    cfg = benchmark["cfg"]
    sample = free_port_sample(model_b, benchmark["x0"][1])
    # e = 0 forces the flow to cancel the spring pull through the
    # feedthrough: f = k12 (q1 - q2) / c12
    f_expected = cfg.k12 * (cfg.q1_0 - cfg.q2_0) / cfg.c12
    assert sample.f[0] == pytest.approx(f_expected, rel=1e-12)
    assert abs(sample.e[0]) <= 1e-11 * abs(f_expected)


def test_free_port_sample_singular_feedthrough_degrades_to_zero_flow():
    base = make_linear_model()
    model = SubsystemModel(
        label="flow-readout",
        state_dim=2,
        port_dim=1,
        hamiltonian=base.hamiltonian,
        grad_hamiltonian=base.grad_hamiltonian,
        structure_J=base.structure_J,
        dissipation_R=base.dissipation_R,
        port_G=base.port_G,
        port_input="flow",
        hess_hamiltonian=base.hess_hamiltonian,
    )
    x = np.array([0.1, 2.0])
    sample = free_port_sample(model, x)
    # D = 0: minimal-norm solution of 0 * f = -y is f = 0, e keeps the readout
    assert np.all(sample.f == 0.0)
    assert sample.e[0] == pytest.approx(2.0 / 4.0, rel=1e-14)


# ---------------------------------------------------------------------------
# frozen one-step map


def test_frozen_map_is_pure(benchmark, scat_default):
    model_a, _ = benchmark["models"]
    x = np.array([0.4, 0.3])
    fm = frozen_port_map(model_a, x, scat_default)
    a = np.array([0.25])
    b1 = fm(a)
    b2 = fm(a)
    assert np.array_equal(b1, b2)
    # the departure state is captured by value
    x[0] = -5.0
    assert np.array_equal(fm(a), b1)


def test_frozen_map_full_result(benchmark, scat_default):
    model_a, _ = benchmark["models"]
    fm = frozen_port_map(model_a, np.array([0.4, 0.3]), scat_default, full=True)
    res = fm(np.array([0.25]))
    assert isinstance(res, StepResult)
    plain = frozen_port_map(model_a, np.array([0.4, 0.3]), scat_default)
    assert np.array_equal(plain(np.array([0.25])), res.wave.b)


def test_frozen_map_of_linear_model_is_affine_contraction():
    # discrete impedance of the frozen step: eliminate x' from the dense
    # system, f = f0 + Y e with Y = (dt/2) G^T K W G, W = (I - dt/2 (J-R)K)^-1;
    # the wave map then has slope (Z - gamma) / (Z + gamma) with Z = 1/Y
    m_mass, k = 4.0, 50.0
    model = make_linear_model(m=m_mass, k=k, c=0.0)
    gamma, dt = 0.4, 0.01
    scat = ScatteringConfig(gamma=gamma, dt=dt)
    fm = frozen_port_map(model, np.array([0.3, -0.2]), scat)
    b0 = fm(np.array([0.0]))
    b1 = fm(np.array([1.0]))
    bh = fm(np.array([0.5]))
    # affine in the incident wave: the midpoint lies on the chord
    assert abs(bh[0] - 0.5 * (b0[0] + b1[0])) <= 1e-12 * (1.0 + abs(b1[0]))
    slope = b1[0] - b0[0]
    K = np.diag([k, 1.0 / m_mass])
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    G = np.array([[0.0], [1.0]])
    W = np.linalg.inv(np.eye(2) - 0.5 * dt * J @ K)
    Y = (0.5 * dt * G.T @ K @ W @ G).item()
    Z = 1.0 / Y
    assert slope == pytest.approx((Z - gamma) / (Z + gamma), abs=1e-12)
    assert 0.0 < slope < 1.0


# ---------------------------------------------------------------------------
# failure reporting


def test_solver_failure_carries_diagnostics():
    model = make_linear_model()
    scat = ScatteringConfig(gamma=0.4, dt=0.01)
    with pytest.raises(SolverFailure) as excinfo:
        step_with_wave(model, np.array([1.0, 0.0]), np.zeros(1), scat, max_iter=0)
    assert excinfo.value.iterations == 0
    assert excinfo.value.residual > 1e-3
    assert "linear-oscillator" in str(excinfo.value)

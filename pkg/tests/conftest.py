"""Shared fixtures: benchmark configs, models and small helper systems."""

import numpy as np
import pytest

from phcosim.bench import BenchmarkConfig, build_benchmark, initial_states
from phcosim.models import SubsystemModel
from phcosim.scattering import CouplingStructure, ScatteringConfig


@pytest.fixture(scope="session")
def table1():
    """The published benchmark parameter set (the config defaults)."""
    return BenchmarkConfig()


@pytest.fixture(scope="session")
def short_cfg():
    # same physics, short horizon; cheap enough for per-test runs
    return BenchmarkConfig(T=0.5)


@pytest.fixture()
def benchmark(table1):
    a, b, coupling, scat = build_benchmark(table1)
    return {
        "models": (a, b),
        "coupling": coupling,
        "scat": scat,
        "x0": initial_states(table1),
        "cfg": table1,
    }


def make_linear_model(m=4.0, k=50.0, c=0.0, label="linear-oscillator"):
    """One mass on a grounding spring, effort-driven port on the momentum."""
    K = np.diag([k, 1.0 / m])

    def ham(x):
        return 0.5 * float(x @ (K @ x))

    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    R = np.diag([0.0, c])
    G = np.array([[0.0], [1.0]])
    return SubsystemModel(
        label=label,
        state_dim=2,
        port_dim=1,
        hamiltonian=ham,
        grad_hamiltonian=lambda x: K @ x,
        structure_J=lambda x: J,
        dissipation_R=lambda x: R,
        port_G=lambda x: G,
        hess_hamiltonian=lambda x: K,
    )


def make_damper_model(c=0.7, label="port-damper"):
    """Pure resistive port e = c f: one dummy state, all feedthrough."""
    return SubsystemModel(
        label=label,
        state_dim=1,
        port_dim=1,
        hamiltonian=lambda x: 0.0,
        grad_hamiltonian=lambda x: np.zeros(1),
        structure_J=lambda x: np.zeros((1, 1)),
        dissipation_R=lambda x: np.zeros((1, 1)),
        port_G=lambda x: np.zeros((1, 1)),
        feedthrough=lambda x: np.array([[c]]),
        port_input="flow",
        hess_hamiltonian=lambda x: np.zeros((1, 1)),
    )


@pytest.fixture()
def swap1():
    return CouplingStructure.swap(1)


@pytest.fixture()
def scat_default(table1):
    return ScatteringConfig(gamma=table1.gamma, dt=table1.dt)

"""Port-Hamiltonian subsystems and the implicit one-step wave solver.

A subsystem carries a state ``x``, a storage function ``H`` bounded below,
and matrix-valued maps ``J`` (skew), ``R`` (symmetric PSD) and port maps.
Its dynamics in input-state-output form are

    x' = (J(x) - R(x)) grad H(x) + G_in(x) u
    y  = G_out(x)^T grad H(x) + D(x) u

where ``u`` is the port input and ``y`` the conjugate output; the flag
``port_input`` says whether ``u`` is the effort or the flow.  The default
configuration (``G_out = G_in``, ``D = 0``, effort input) is the classical
form with output ``f = G^T grad H``.

Time stepping replaces ``grad H`` with an averaged discrete gradient,
which satisfies the exact chain rule

    H(x') - H(x) = dg(x, x') . (x' - x)

so a step driven through the scattering transform inherits a discrete
energy balance: the energy gain never exceeds the supplied wave energy.

The one-step map solves, for a given incident wave ``a``,

    x' = x + dt [ (J - R) dg + G_in u ]
    y  = G_out^T dg + D u
    a  = sqrt(dt / (2 gamma)) (e + gamma f)

jointly for ``(x', e, f)`` with a damped Newton method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .scattering import PortSample, ScatteringConfig, WavePair

__all__ = [
    "SubsystemModel",
    "StepResult",
    "SolverFailure",
    "discrete_gradient",
    "step_with_wave",
    "frozen_port_map",
    "free_port_sample",
]

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
NEWTON_POLISH_STEPS = 4
BACKTRACK_FLOOR = 2.0**-20
DG_THRESHOLD = 1e-10


class SolverFailure(RuntimeError):
    """Raised when the implicit step solver fails to reach its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SubsystemModel:
    """Callable bundle describing one port-Hamiltonian subsystem.

    Parameters
    ----------
    state_dim, port_dim : int
        Dimensions of the state and of the power port.
    hamiltonian, grad_hamiltonian : callable
        ``H(x) -> float`` bounded below and its gradient.
    structure_J, dissipation_R : callable
        State-dependent ``n x n`` matrices; ``J`` skew-symmetric, ``R``
        symmetric positive semidefinite.
    port_G : callable
        Input map ``G_in(x) -> (n, m)``.
    port_G_out : callable, optional
        Output map; defaults to ``port_G``.
    feedthrough : callable, optional
        ``D(x) -> (m, m)``; defaults to zero.  Needed by port-terminating
        resistive elements.
    port_input : {"effort", "flow"}
        Which port variable drives the dynamics; the other is the readout.
    hess_hamiltonian : callable, optional
        Hessian of ``H``; enables the analytic Newton Jacobian.  Without it
        the solver falls back to finite differences.
    native : tuple, optional
        Opaque descriptor consumed by the compiled backend.
    """

    label: str
    state_dim: int
    port_dim: int
    hamiltonian: Callable[[np.ndarray], float]
    grad_hamiltonian: Callable[[np.ndarray], np.ndarray]
    structure_J: Callable[[np.ndarray], np.ndarray]
    dissipation_R: Callable[[np.ndarray], np.ndarray]
    port_G: Callable[[np.ndarray], np.ndarray]
    port_G_out: Optional[Callable[[np.ndarray], np.ndarray]] = None
    feedthrough: Optional[Callable[[np.ndarray], np.ndarray]] = None
    port_input: str = "effort"
    hess_hamiltonian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    native: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError(f"state_dim must be a positive integer, got {self.state_dim}")
        if self.port_dim < 1:
            raise ValueError(f"port_dim must be a positive integer, got {self.port_dim}")
        if self.port_input not in ("effort", "flow"):
            raise ValueError(f"port_input must be 'effort' or 'flow', got {self.port_input!r}")

    def energy(self, x: np.ndarray) -> float:
        return float(self.hamiltonian(np.asarray(x, dtype=float)))

    def output_map(self, x: np.ndarray) -> np.ndarray:
        g = self.port_G_out if self.port_G_out is not None else self.port_G
        return np.asarray(g(x), dtype=float)

    def feedthrough_matrix(self, x: np.ndarray) -> np.ndarray:
        if self.feedthrough is None:
            return np.zeros((self.port_dim, self.port_dim))
        return np.asarray(self.feedthrough(x), dtype=float)


@dataclass(frozen=True)
class StepResult:
    """Outcome of one implicit wave-driven step."""

    state: np.ndarray
    wave: WavePair
    port: PortSample
    iterations: int
    residual: float


# 4-point Gauss-Legendre rule on [0, 1]; exact for integrands of degree 7,
# i.e. for gradients of storage functions of polynomial degree up to 8
DG_NODES = (
    0.06943184420297371,
    0.33000947820757187,
    0.6699905217924281,
    0.9305681557970263,
)
DG_WEIGHTS = (
    0.17392742256872692,
    0.3260725774312731,
    0.3260725774312731,
    0.17392742256872692,
)


def _averaged_gradient(model: SubsystemModel, x, d):
    g = np.zeros_like(x)
    for tau, w in zip(DG_NODES, DG_WEIGHTS):
        g += w * np.asarray(model.grad_hamiltonian(x + tau * d), dtype=float)
    return g


def discrete_gradient(
    model: SubsystemModel, x: np.ndarray, x_next: np.ndarray, threshold: float = DG_THRESHOLD
) -> np.ndarray:
    """Averaged (mean-value) discrete gradient of the storage function.

    Gauss-Legendre average of ``grad H`` along the segment plus a rank-one
    correction that enforces the secant identity
    ``dg . (x_next - x) = H(x_next) - H(x)`` exactly; for polynomial ``H``
    the quadrature is already exact and the correction is pure roundoff.
    Below ``threshold`` step lengths the midpoint gradient is returned
    (the correction is then numerically meaningless).

    For convex ``H`` the averaged gradient is incrementally monotone in
    ``x_next``, which is what keeps the frozen wave maps of passive
    subsystems firmly nonexpansive; a midpoint-plus-correction gradient
    does not have that property for non-quadratic ``H``.
    """
    x = np.asarray(x, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    d = x_next - x
    nd2 = float(d @ d)
    if math.sqrt(nd2) < threshold:
        return np.asarray(model.grad_hamiltonian(0.5 * (x + x_next)), dtype=float)
    g = _averaged_gradient(model, x, d)
    c = (model.energy(x_next) - model.energy(x) - float(g @ d)) / nd2
    return g + c * d


def _dg_jacobian(model: SubsystemModel, x, x_next, threshold: float = DG_THRESHOLD):
    """Discrete gradient and its Jacobian with respect to ``x_next``."""
    x = np.asarray(x, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    d = x_next - x
    nd2 = float(d @ d)
    if math.sqrt(nd2) < threshold:
        xm = 0.5 * (x + x_next)
        g = np.asarray(model.grad_hamiltonian(xm), dtype=float)
        return g, 0.5 * np.asarray(model.hess_hamiltonian(xm), dtype=float)
    g = np.zeros_like(x)
    M = np.zeros((x.shape[0], x.shape[0]))
    for tau, w in zip(DG_NODES, DG_WEIGHTS):
        xi = x + tau * d
        g += w * np.asarray(model.grad_hamiltonian(xi), dtype=float)
        M += (w * tau) * np.asarray(model.hess_hamiltonian(xi), dtype=float)
    c = (model.energy(x_next) - model.energy(x) - float(g @ d)) / nd2
    g_next = np.asarray(model.grad_hamiltonian(x_next), dtype=float)
    dc = (g_next - M @ d - g) / nd2 - (2.0 * c / nd2) * d
    jac = M + np.outer(d, dc) + c * np.eye(x.shape[0])
    return g + c * d, jac


def _port_split(model: SubsystemModel, e, f):
    """Return (input, output) in the model's causality."""
    return (e, f) if model.port_input == "effort" else (f, e)


def _residual(model, x, a_in, scat, z):
    n = model.state_dim
    m = model.port_dim
    x_next = z[:n]
    e = z[n : n + m]
    f = z[n + m :]
    u, y = _port_split(model, e, f)
    xm = 0.5 * (x + x_next)
    dg = discrete_gradient(model, x, x_next)
    J = np.asarray(model.structure_J(xm), dtype=float)
    R = np.asarray(model.dissipation_R(xm), dtype=float)
    Gin = np.asarray(model.port_G(xm), dtype=float).reshape(n, m)
    Gout = model.output_map(xm).reshape(n, m)
    D = model.feedthrough_matrix(xm)
    r = np.empty(n + 2 * m)
    r[:n] = x_next - x - scat.dt * ((J - R) @ dg + Gin @ u)
    r[n : n + m] = y - Gout.T @ dg - D @ u
    r[n + m :] = a_in - scat.wave_scale * (e + scat.gamma * f)
    return r


def _analytic_jacobian(model, x, a_in, scat, z):
    n = model.state_dim
    m = model.port_dim
    x_next = z[:n]
    xm = 0.5 * (x + x_next)
    _, Mdg = _dg_jacobian(model, x, x_next)
    J = np.asarray(model.structure_J(xm), dtype=float)
    R = np.asarray(model.dissipation_R(xm), dtype=float)
    Gin = np.asarray(model.port_G(xm), dtype=float).reshape(n, m)
    Gout = model.output_map(xm).reshape(n, m)
    D = model.feedthrough_matrix(xm)
    c = scat.wave_scale
    jac = np.zeros((n + 2 * m, n + 2 * m))
    jac[:n, :n] = np.eye(n) - scat.dt * (J - R) @ Mdg
    jac[n : n + m, :n] = -Gout.T @ Mdg
    if model.port_input == "effort":
        jac[:n, n : n + m] = -scat.dt * Gin
        jac[n : n + m, n : n + m] = -D
        jac[n : n + m, n + m :] = np.eye(m)
    else:
        jac[:n, n + m :] = -scat.dt * Gin
        jac[n : n + m, n + m :] = -D
        jac[n : n + m, n : n + m] = np.eye(m)
    jac[n + m :, n : n + m] = -c * np.eye(m)
    jac[n + m :, n + m :] = -c * scat.gamma * np.eye(m)
    return jac


def _fd_jacobian(fun, z, r0):
    jac = np.empty((r0.shape[0], z.shape[0]))
    for j in range(z.shape[0]):
        h = 1e-7 * (1.0 + abs(z[j]))
        zp = z.copy()
        zm = z.copy()
        zp[j] += h
        zm[j] -= h
        jac[:, j] = (fun(zp) - fun(zm)) / (2.0 * h)
    return jac


def _noise_floor(model, x, z):
    """Attainable residual norm for the implicit step at iterate ``z``.

    The secant correction divides the energy difference by ``|delta|^2``,
    so its roundoff (eps times the Hamiltonian magnitude) enters the
    gradient amplified by ``1 / |delta|``.  A Newton iteration that
    stagnates at this scale has converged in the available arithmetic.
    Below the midpoint-branch threshold there is no such amplification."""
    delta = float(np.linalg.norm(z[: model.state_dim] - x))
    h_scale = 1.0 + abs(model.hamiltonian(x)) + abs(model.hamiltonian(z[: model.state_dim]))
    denom = min(delta, 1.0) if delta >= DG_THRESHOLD else 1.0
    return 64.0 * np.finfo(float).eps * h_scale / denom


def _initial_guess(model, x, a_in, scat):
    n = model.state_dim
    m = model.port_dim
    g0 = np.asarray(model.grad_hamiltonian(x), dtype=float)
    y_base = model.output_map(x).reshape(n, m).T @ g0
    D = model.feedthrough_matrix(x)
    rhs = a_in / scat.wave_scale
    gam = scat.gamma
    if model.port_input == "effort":
        # f = y_base + D e and rhs = e + gamma f
        e = np.linalg.solve(np.eye(m) + gam * D, rhs - gam * y_base)
        f = y_base + D @ e
    else:
        # e = y_base + D f and rhs = e + gamma f
        f = np.linalg.solve(D + gam * np.eye(m), rhs - y_base)
        e = y_base + D @ f
    z = np.empty(n + 2 * m)
    z[:n] = x
    z[n : n + m] = e
    z[n + m :] = f
    return z


def step_with_wave(
    model: SubsystemModel,
    x: np.ndarray,
    a_in: np.ndarray,
    scat: ScatteringConfig,
    newton_tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> StepResult:
    """Advance one subsystem over one macro step driven by an incident wave.

    Solves the implicit discrete-gradient step together with the port
    readout and the wave constraint by a damped Newton iteration.  The
    returned outgoing wave is ``b = c (e - gamma f)``.

    Raises
    ------
    SolverFailure
        If the residual cannot be reduced below ``newton_tol`` scaled by
        the initial residual within ``max_iter`` iterations.
    """
    x = np.asarray(x, dtype=float)
    a_in = np.asarray(a_in, dtype=float)
    if x.shape != (model.state_dim,):
        raise ValueError(f"state must have shape ({model.state_dim},), got {x.shape}")
    if a_in.shape != (model.port_dim,):
        raise ValueError(f"incident wave must have shape ({model.port_dim},), got {a_in.shape}")

    fun = lambda z: _residual(model, x, a_in, scat, z)
    z = _initial_guess(model, x, a_in, scat)
    r = fun(z)
    rnorm = float(np.linalg.norm(r))
    r0norm = rnorm
    tol = newton_tol * (1.0 + r0norm)
    analytic = model.hess_hamiltonian is not None
    iterations = 0
    while rnorm > tol and iterations < max_iter:
        jac = _analytic_jacobian(model, x, a_in, scat, z) if analytic else _fd_jacobian(fun, z, r)
        try:
            dz = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise SolverFailure(f"singular step Jacobian for {model.label}", rnorm, iterations) from exc
        alpha = 1.0
        while alpha >= BACKTRACK_FLOOR:
            z_try = z + alpha * dz
            r_try = fun(z_try)
            rnorm_try = float(np.linalg.norm(r_try))
            if rnorm_try < rnorm:
                z, r, rnorm = z_try, r_try, rnorm_try
                break
            alpha *= 0.5
        else:
            if rnorm <= _noise_floor(model, x, z):
                break
            raise SolverFailure(f"line search stalled for {model.label}", rnorm, iterations)
        iterations += 1
    if rnorm > tol and rnorm > _noise_floor(model, x, z):
        raise SolverFailure(f"no convergence for {model.label}", rnorm, iterations)

    # polish to the roundoff floor: the energy identities inherit the final
    # residual, so a converged-but-loose solution would leak into the
    # certificates.  Extra full steps are accepted only if they improve.
    floor = 1e-15 * (1.0 + r0norm)
    for _ in range(NEWTON_POLISH_STEPS):
        if rnorm <= floor:
            break
        jac = _analytic_jacobian(model, x, a_in, scat, z) if analytic else _fd_jacobian(fun, z, r)
        try:
            dz = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        z_try = z + dz
        r_try = fun(z_try)
        rnorm_try = float(np.linalg.norm(r_try))
        if rnorm_try >= rnorm:
            break
        z, r, rnorm = z_try, r_try, rnorm_try
        iterations += 1

    n, m = model.state_dim, model.port_dim
    e = z[n : n + m]
    f = z[n + m :]
    b = scat.wave_scale * (e - scat.gamma * f)
    return StepResult(
        state=z[:n],
        wave=WavePair(a=a_in.copy(), b=b),
        port=PortSample(e=e, f=f),
        iterations=iterations,
        residual=rnorm,
    )


def free_port_sample(model: SubsystemModel, x: np.ndarray) -> PortSample:
    """Instantaneous free-port readout at state ``x`` (effort forced to 0).

    Used to seed the warm-start outgoing waves before the first macro
    step; no implicit solve is involved.  For an effort-driven port the
    zero effort is the input itself; for a flow-driven port the flow is
    solved from the output relation ``e = G_out^T grad H + D f = 0``
    (minimal-norm solution, so a singular feedthrough degrades to the
    zero-flow sample instead of blowing up).
    """
    x = np.asarray(x, dtype=float)
    g0 = np.asarray(model.grad_hamiltonian(x), dtype=float)
    y = model.output_map(x).reshape(model.state_dim, model.port_dim).T @ g0
    zero = np.zeros(model.port_dim)
    if model.port_input == "effort":
        return PortSample(e=zero, f=y + model.feedthrough_matrix(x) @ zero)
    D = model.feedthrough_matrix(x)
    f, *_ = np.linalg.lstsq(D, -y, rcond=None)
    return PortSample(e=y + D @ f, f=f)


def frozen_port_map(
    model: SubsystemModel,
    x_frozen: np.ndarray,
    scat: ScatteringConfig,
    full: bool = False,
) -> Callable[[np.ndarray], np.ndarray]:
    """One-step wave map with the departure state frozen.

    Every call solves the implicit step from the same ``x_frozen`` and
    returns the outgoing wave (or the full :class:`StepResult` when
    ``full`` is set).  This is the map the inner coupling iteration sees.
    """
    x_frozen = np.array(x_frozen, dtype=float)

    def mapped(a_in: np.ndarray):
        res = step_with_wave(model, x_frozen, a_in, scat)
        return res if full else res.wave.b

    return mapped

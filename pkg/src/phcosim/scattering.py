"""Scattering (wave) variables and the lossless coupling structure.

A power port carries an effort/flow pair ``(e, f)`` whose inner product
``e . f`` is the instantaneous power entering the subsystem. For a macro
step of size ``dt`` and a positive characteristic impedance ``gamma`` the
discrete wave variables are

    a = sqrt(dt / (2 gamma)) * (e + gamma f)      (incident)
    b = sqrt(dt / (2 gamma)) * (e - gamma f)      (outgoing)

so that the supplied energy over one step is exact in wave coordinates:

    (1/2) (||a||^2 - ||b||^2) = dt * e . f

Two subsystems are interconnected by an orthogonal matrix ``P`` routing
outgoing waves into incident ones, ``a = P b``.  For the standard
interconnection (shared effort, opposing flows) ``P`` is the block swap,
and orthogonality of ``P`` makes the routing lossless.

All functions are pure and operate on 1-D float arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScatteringConfig",
    "PortSample",
    "WavePair",
    "CouplingStructure",
    "LiftedWaveState",
    "port_to_wave",
    "wave_to_port",
    "wave_power",
    "coupling_projection",
]


def _as_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-D array, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class ScatteringConfig:
    """Characteristic impedance and macro-step size of the wave transform."""

    gamma: float
    dt: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")

    @property
    def wave_scale(self) -> float:
        """The factor sqrt(dt / (2 gamma)) in front of both wave variables."""
        return math.sqrt(self.dt / (2.0 * self.gamma))


@dataclass(frozen=True)
class PortSample:
    """Effort/flow pair at a power port (SI units: e.g. force and velocity)."""

    e: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "e", _as_vector(self.e, "e"))
        object.__setattr__(self, "f", _as_vector(self.f, "f"))
        if self.e.shape != self.f.shape:
            raise ValueError(f"effort/flow shape mismatch: {self.e.shape} vs {self.f.shape}")

    @property
    def power(self) -> float:
        return float(self.e @ self.f)


@dataclass(frozen=True)
class WavePair:
    """Incident/outgoing wave pair at one port."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _as_vector(self.a, "a"))
        object.__setattr__(self, "b", _as_vector(self.b, "b"))
        if self.a.shape != self.b.shape:
            raise ValueError(f"wave shape mismatch: {self.a.shape} vs {self.b.shape}")


def port_to_wave(port: PortSample, scat: ScatteringConfig) -> WavePair:
    """Map an effort/flow sample to the discrete wave pair.

    Parameters
    ----------
    port : PortSample
        Effort/flow vectors of equal length.
    scat : ScatteringConfig
        Impedance gamma and step size dt.

    Returns
    -------
    WavePair
        ``a = c (e + gamma f)``, ``b = c (e - gamma f)`` with
        ``c = sqrt(dt / (2 gamma))``.
    """
    c = scat.wave_scale
    g = scat.gamma
    return WavePair(a=c * (port.e + g * port.f), b=c * (port.e - g * port.f))


def wave_to_port(wave: WavePair, scat: ScatteringConfig) -> PortSample:
    """Invert :func:`port_to_wave`; exact round trip up to rounding."""
    c = scat.wave_scale
    g = scat.gamma
    e = (wave.a + wave.b) / (2.0 * c)
    f = (wave.a - wave.b) / (2.0 * g * c)
    return PortSample(e=e, f=f)


def wave_power(wave: WavePair) -> float:
    """Energy supplied through the port over one macro step.

    Equals ``dt * e . f`` for the matching port sample; positive when the
    incident wave carries more energy than the outgoing one.
    """
    return 0.5 * (float(wave.a @ wave.a) - float(wave.b @ wave.b))


@dataclass(frozen=True)
class CouplingStructure:
    """Orthogonal routing of outgoing waves into incident waves, a = P b.

    ``port_dims`` holds the per-subsystem port dimensions; ``P`` acts on the
    stacked outgoing vector in the same block order.
    """

    P: np.ndarray
    port_dims: tuple[int, ...]

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "port_dims", tuple(int(m) for m in self.port_dims))
        if any(m < 1 for m in self.port_dims):
            raise ValueError(f"port dimensions must be positive, got {self.port_dims}")
        n = sum(self.port_dims)
        if P.shape != (n, n):
            raise ValueError(f"P must be {n}x{n} for port dims {self.port_dims}, got {P.shape}")
        if np.max(np.abs(P.T @ P - np.eye(n))) > 1e-12:
            raise ValueError("P must be orthogonal to 1e-12")

    @classmethod
    def swap(cls, m: int) -> "CouplingStructure":
        """Two-subsystem block swap: shared effort, opposing flows."""
        z = np.zeros((m, m))
        eye = np.eye(m)
        return cls(P=np.block([[z, eye], [eye, z]]), port_dims=(m, m))

    @property
    def total_dim(self) -> int:
        return int(self.P.shape[0])

    def apply(self, b: np.ndarray) -> np.ndarray:
        """Route outgoing waves: returns ``P b``."""
        b = _as_vector(b, "b")
        if b.shape[0] != self.total_dim:
            raise ValueError(f"expected stacked dimension {self.total_dim}, got {b.shape[0]}")
        return self.P @ b

    def block_slices(self) -> tuple[slice, ...]:
        """Slices extracting each subsystem's block from a stacked vector."""
        out = []
        start = 0
        for m in self.port_dims:
            out.append(slice(start, start + m))
            start += m
        return tuple(out)


@dataclass(frozen=True)
class LiftedWaveState:
    """Stacked (incident, outgoing) pair used by the lifted inner iteration."""

    zeta: np.ndarray
    m_total: int

    def __post_init__(self):
        z = _as_vector(self.zeta, "zeta")
        object.__setattr__(self, "zeta", z)
        if z.shape[0] != 2 * self.m_total:
            raise ValueError(f"zeta must have length {2 * self.m_total}, got {z.shape[0]}")

    @classmethod
    def from_parts(cls, a: np.ndarray, b: np.ndarray) -> "LiftedWaveState":
        a = _as_vector(a, "a")
        b = _as_vector(b, "b")
        if a.shape != b.shape:
            raise ValueError(f"block shape mismatch: {a.shape} vs {b.shape}")
        return cls(zeta=np.concatenate([a, b]), m_total=a.shape[0])

    @property
    def a(self) -> np.ndarray:
        return self.zeta[: self.m_total]

    @property
    def b(self) -> np.ndarray:
        return self.zeta[self.m_total :]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.zeta))


def coupling_projection(
    a_hat: np.ndarray, b_hat: np.ndarray, coupling: CouplingStructure
) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal projection onto the routing subspace {(a, b) : a = P b}.

    The subspace is linear, and the projection has the closed form

        b_bar = (b_hat + P^T a_hat) / 2,     a_bar = P b_bar.

    Returns the projected pair ``(a_bar, b_bar)``.
    """
    a_hat = _as_vector(a_hat, "a_hat")
    b_hat = _as_vector(b_hat, "b_hat")
    n = coupling.total_dim
    if a_hat.shape[0] != n or b_hat.shape[0] != n:
        raise ValueError(
            f"expected stacked dimension {n}, got {a_hat.shape[0]} and {b_hat.shape[0]}"
        )
    b_bar = 0.5 * (b_hat + coupling.P.T @ a_hat)
    return coupling.P @ b_bar, b_bar

"""Planar vertical two-link arm: rigid-body model, lumped uncertainty, RK4 stepping.

Angle convention: q1 is measured from the horizontal +x axis, q2 relative to
link 1, gravity acts along -y.  Closed forms follow the usual Lagrangian
derivation with point masses at the link centres plus rotational inertia.

The numerical cores are numba kernels working on a packed parameter vector
``[l1, l2, m1, m2, lc1, lc2, I1, I2, g]`` so the closed-loop rollouts in
:mod:`reachctl.closedloop` can call them without Python overhead.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from numba import njit

from .errors import ConfigError, NumericalBlowup

# plant composition modes
FULL = 0  # rigid body (C, G) + friction-like F_unc + disturbance tau_d
RIGID = 1  # rigid body only
NONE = 2  # pure inertia: qdd = M^-1 tau

MODES = {"full": FULL, "rigid": RIGID, "none": NONE}

BLOWUP_LIMIT = 1e6


@dataclass
class ArmParams:
    l1: float = 1.0
    l2: float = 0.8
    m1: float = 1.0
    m2: float = 1.0
    lc1: float = 0.5
    lc2: float = 0.4
    I1: float = 1.0 / 12.0
    I2: float = 0.8**2 / 12.0
    g: float = 9.81

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"arm parameter {f.name} must be finite and > 0, got {v}")
            setattr(self, f.name, v)
        if self.lc1 > self.l1 or self.lc2 > self.l2:
            raise ConfigError("centre-of-mass offsets must not exceed link lengths")

    @classmethod
    def uniform_rods(cls, l1=1.0, l2=0.8, m1=1.0, m2=1.0, g=9.81) -> "ArmParams":
        return cls(l1=l1, l2=l2, m1=m1, m2=m2, lc1=l1 / 2, lc2=l2 / 2,
                   I1=m1 * l1**2 / 12, I2=m2 * l2**2 / 12, g=g)

    def as_array(self) -> np.ndarray:
        return np.array([self.l1, self.l2, self.m1, self.m2, self.lc1, self.lc2,
                         self.I1, self.I2, self.g])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArmParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown arm keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class JointState:
    x1: np.ndarray
    x2: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x1 = np.asarray(self.x1, dtype=float).copy()
        self.x2 = np.asarray(self.x2, dtype=float).copy()
        if self.x1.ndim != 1 or self.x1.shape != self.x2.shape or self.x1.size < 1:
            raise ValueError("x1 and x2 must be 1-D vectors of equal length n >= 1")
        if not (np.all(np.isfinite(self.x1)) and np.all(np.isfinite(self.x2))
                and math.isfinite(self.t)):
            raise NumericalBlowup("non-finite joint state")

    @property
    def n(self) -> int:
        return self.x1.size


@dataclass
class PlantOutputs:
    M: np.ndarray
    C: np.ndarray
    G: np.ndarray
    F_unc: np.ndarray
    tau_d: np.ndarray


# ---------------------------------------------------------------- kernels

@njit(cache=True)
def _mass(q, p):
    l1, m1, m2, lc1, lc2, I1, I2 = p[0], p[2], p[3], p[4], p[5], p[6], p[7]
    c2 = math.cos(q[1])
    M = np.empty((2, 2))
    M[0, 0] = m1 * lc1**2 + I1 + m2 * (l1**2 + lc2**2 + 2.0 * l1 * lc2 * c2) + I2
    M[0, 1] = m2 * (lc2**2 + l1 * lc2 * c2) + I2
    M[1, 0] = M[0, 1]
    M[1, 1] = m2 * lc2**2 + I2
    return M


@njit(cache=True)
def _coriolis(q, qd, p):
    h = -p[3] * p[0] * p[5] * math.sin(q[1])
    C = np.empty((2, 2))
    C[0, 0] = h * qd[1]
    C[0, 1] = h * (qd[0] + qd[1])
    C[1, 0] = -h * qd[0]
    C[1, 1] = 0.0
    return C


@njit(cache=True)
def _gravity(q, p):
    l1, m1, m2, lc1, lc2, g = p[0], p[2], p[3], p[4], p[5], p[8]
    c12 = math.cos(q[0] + q[1])
    G = np.empty(2)
    G[0] = g * (m1 * lc1 + m2 * l1) * math.cos(q[0]) + m2 * g * lc2 * c12
    G[1] = m2 * g * lc2 * c12
    return G


@njit(cache=True)
def _friction(x1, x2):
    F = np.empty(2)
    F[0] = 0.5 * math.cos(0.7 * x2[1])
    F[1] = -1.1 * math.cos(1.8 * x1[1]) + 1.8 * math.cos(0.3 * x1[1])
    return F


@njit(cache=True)
def _disturbance(t, u):
    d = np.empty(2)
    d[0] = 3.0 * math.cos(2.0 * t)
    d[1] = -0.2 * u
    return d


@njit(cache=True)
def _solve2(M, b):
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    out = np.empty(2)
    out[0] = (M[1, 1] * b[0] - M[0, 1] * b[1]) / det
    out[1] = (M[0, 0] * b[1] - M[1, 0] * b[0]) / det
    return out


@njit(cache=True)
def _accel(x1, x2, tau, tau_d, p, mode):
    M = _mass(x1, p)
    if mode == NONE:
        return _solve2(M, tau)
    rhs = tau - _coriolis(x1, x2, p) @ x2 - _gravity(x1, p)
    acc = _solve2(M, rhs)
    if mode == FULL:
        acc = acc + _friction(x1, x2) + tau_d
    return acc


@njit(cache=True)
def _rk4(x1, x2, tau, t, dt, u, p, mode):
    # tau and tau_d are zero-order held across the step
    tau_d = _disturbance(t, u)
    k1x = x2
    k1v = _accel(x1, x2, tau, tau_d, p, mode)
    k2x = x2 + 0.5 * dt * k1v
    k2v = _accel(x1 + 0.5 * dt * k1x, k2x, tau, tau_d, p, mode)
    k3x = x2 + 0.5 * dt * k2v
    k3v = _accel(x1 + 0.5 * dt * k2x, k3x, tau, tau_d, p, mode)
    k4x = x2 + dt * k3v
    k4v = _accel(x1 + dt * k3x, k4x, tau, tau_d, p, mode)
    x1n = x1 + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    x2n = x2 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return x1n, x2n


@njit(cache=True)
def _blown_up(x1, x2):
    for i in range(x1.size):
        if not (abs(x1[i]) <= BLOWUP_LIMIT and abs(x2[i]) <= BLOWUP_LIMIT):
            return True
    return False


# Python-facing entry points. Kernels that other cached kernels call are
# never invoked from Python directly: a cached callee that is also a
# top-level entry shares one environment symbol, which can end up dangling.

@njit(cache=True)
def _mass_entry(q, p):
    return _mass(q, p)


@njit(cache=True)
def _coriolis_entry(q, qd, p):
    return _coriolis(q, qd, p)


@njit(cache=True)
def _gravity_entry(q, p):
    return _gravity(q, p)


@njit(cache=True)
def _uncertainty_entry(x1, x2, t, u):
    return _friction(x1, x2), _disturbance(t, u)


@njit(cache=True)
def _rk4_entry(x1, x2, tau, t, dt, u, p, mode):
    return _rk4(x1, x2, tau, t, dt, u, p, mode)


# ---------------------------------------------------------------- public API

def _vec(q) -> np.ndarray:
    return np.ascontiguousarray(q, dtype=float)


def mass_matrix(q, params: ArmParams) -> np.ndarray:
    return _mass_entry(_vec(q), params.as_array())


def coriolis_matrix(q, qdot, params: ArmParams) -> np.ndarray:
    """Christoffel-form Coriolis/centrifugal matrix (Mdot - 2C is skew)."""
    return _coriolis_entry(_vec(q), _vec(qdot), params.as_array())


def gravity_vector(q, params: ArmParams) -> np.ndarray:
    return _gravity_entry(_vec(q), params.as_array())


def uncertainty_terms(state: JointState, rng=None, u: float | None = None):
    """Friction-like acceleration F_unc and load disturbance tau_d.

    The random component of tau_d uses ``u`` when given, else one uniform
    draw from ``rng``.
    """
    if u is None:
        u = 0.0 if rng is None else float(rng.random())
    return _uncertainty_entry(state.x1, state.x2, float(state.t), float(u))


def plant_outputs(state: JointState, params: ArmParams, rng=None) -> PlantOutputs:
    p = params.as_array()
    F, d = uncertainty_terms(state, rng)
    return PlantOutputs(_mass_entry(state.x1, p), _coriolis_entry(state.x1, state.x2, p),
                        _gravity_entry(state.x1, p), F, d)


def step_dynamics(state: JointState, tau, dt: float, rng, params: ArmParams | None = None,
                  mode: str = "full") -> JointState:
    """Advance the arm by one fixed RK4 step of length ``dt`` under torque ``tau``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    params = params or ArmParams()
    tau = _vec(tau)
    if not np.all(np.isfinite(tau)):
        raise NumericalBlowup("non-finite torque")
    u = float(rng.random()) if (rng is not None and mode == "full") else 0.0
    x1, x2 = _rk4_entry(state.x1, state.x2, tau, state.t, dt, u, params.as_array(), MODES[mode])
    if _blown_up(x1, x2):
        raise NumericalBlowup(f"state magnitude exceeded {BLOWUP_LIMIT:g}")
    return JointState(x1, x2, state.t + dt)


def forward_kinematics(q, params: ArmParams) -> np.ndarray:
    """Tip position embedded in 3-D with z = 0."""
    q = _vec(q)
    a = q[0]
    b = q[0] + q[1]
    return np.array([params.l1 * math.cos(a) + params.l2 * math.cos(b),
                     params.l1 * math.sin(a) + params.l2 * math.sin(b), 0.0])


def elbow_position(q, params: ArmParams) -> np.ndarray:
    return np.array([params.l1 * math.cos(q[0]), params.l1 * math.sin(q[0]), 0.0])


def kinetic_energy(q, qdot, params: ArmParams) -> float:
    qdot = _vec(qdot)
    return 0.5 * float(qdot @ mass_matrix(q, params) @ qdot)


def potential_energy(q, params: ArmParams) -> float:
    p = params
    return p.g * (p.m1 * p.lc1 * math.sin(q[0])
                  + p.m2 * (p.l1 * math.sin(q[0]) + p.lc2 * math.sin(q[0] + q[1])))


def total_energy(state: JointState, params: ArmParams) -> float:
    return kinetic_energy(state.x1, state.x2, params) + potential_energy(state.x1, params)

"""Subsystem-based adaptive torque controller and a PID baseline.

Per control tick:

    e1 = x1 - x1d,  e2 = x2 - x2d
    Y1 = e1,        tau0 = -a0/2 * Y1,      Y2 = e2 - tau0
    rho' = rho + dt * (-c1*r1*rho + b1*c1/2 * |Y2|^2)     (clamped at 0)
    tau  = -1/2 * M (a1 + b1*rho') Y2 - M Y1

Only the inertia matrix of the plant is used.  Everything else in the
dynamics is treated as unknown and absorbed by the adaptive gain.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import ConfigError, DimensionMismatch

GAIN_NAMES = ("a0", "a1", "b1", "c1", "r1")


@dataclass
class ControllerConfig:
    a0: float = 668.0
    a1: float = 552.0
    b1: float = 1.8
    c1: float = 0.001
    r1: float = 0.69
    rho0: float = 0.0
    torque_limit: float | None = None
    mass_scale: float = 1.0

    def __post_init__(self):
        for name in GAIN_NAMES:
            v = float(getattr(self, name))
            if not v > 0:
                raise ConfigError(f"gain {name} must be > 0, got {v}")
            setattr(self, name, v)
        if not self.rho0 >= 0:
            raise ConfigError("rho0 must be >= 0")
        if self.torque_limit is not None and not self.torque_limit > 0:
            raise ConfigError("torque_limit must be positive or null")
        if not self.mass_scale > 0:
            raise ConfigError("mass_scale must be positive")

    @property
    def gains(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in GAIN_NAMES])

    def with_gains(self, gains) -> "ControllerConfig":
        d = asdict(self)
        d.update(zip(GAIN_NAMES, map(float, gains)))
        return ControllerConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown controller keys: {sorted(unknown)}")
        return cls(**d)


DEFAULT_GAINS = ControllerConfig()


@dataclass
class AdaptiveState:
    rho_hat: float = 0.0

    def __post_init__(self):
        if not self.rho_hat >= 0:
            raise ValueError("rho_hat must be >= 0")


class TrackingErrors(NamedTuple):
    e1: np.ndarray
    e2: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    tau0: np.ndarray


# ---------------------------------------------------------------- kernels

@njit(cache=True)
def _adaptive(rho, Y2, b1, c1, r1, dt):
    r = rho + dt * (-c1 * r1 * rho + 0.5 * b1 * c1 * np.dot(Y2, Y2))
    return r if r > 0.0 else 0.0


@njit(cache=True)
def _torque(M, Y1, Y2, rho, a1, b1):
    return -0.5 * (a1 + b1 * rho) * (M @ Y2) - M @ Y1


@njit(cache=True)
def _control(x1, x2, x1d, x2d, rho, M, gains, dt, limit):
    e1 = x1 - x1d
    e2 = x2 - x2d
    tau0 = -0.5 * gains[0] * e1
    Y2 = e2 - tau0
    rho_new = _adaptive(rho, Y2, gains[2], gains[3], gains[4], dt)
    tau = _torque(M, e1, Y2, rho_new, gains[1], gains[2])
    if limit > 0.0:
        tau = np.minimum(np.maximum(tau, -limit), limit)
    return tau, rho_new


# Python-facing entries; _torque and _control are also callees of the
# cached rollout kernel, so they are not called from Python directly.

@njit(cache=True)
def _torque_entry(M, Y1, Y2, rho, a1, b1):
    return _torque(M, Y1, Y2, rho, a1, b1)


@njit(cache=True)
def _control_entry(x1, x2, x1d, x2d, rho, M, gains, dt, limit):
    return _control(x1, x2, x1d, x2d, rho, M, gains, dt, limit)


# ---------------------------------------------------------------- public API

def _check(*vecs):
    arrs = [np.ascontiguousarray(v, dtype=float) for v in vecs]
    n = arrs[0].shape
    for a in arrs:
        if a.ndim != 1 or a.shape != n:
            raise DimensionMismatch(f"expected vectors of shape {n}, got {a.shape}")
    return arrs


def compute_errors(x1, x2, x1d, x2d):
    x1, x2, x1d, x2d = _check(x1, x2, x1d, x2d)
    return x1 - x1d, x2 - x2d


def transform(e1, e2, a0: float) -> TrackingErrors:
    e1, e2 = _check(e1, e2)
    tau0 = -0.5 * a0 * e1
    return TrackingErrors(e1, e2, e1.copy(), e2 - tau0, tau0)


def adaptive_update(rho_hat: float, Y2, cfg: ControllerConfig, dt: float) -> float:
    """One explicit-Euler step of the adaptive law, floored at zero."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return _adaptive(float(rho_hat), np.ascontiguousarray(Y2, dtype=float),
                     cfg.b1, cfg.c1, cfg.r1, dt)


def torque(M, Y1, Y2, rho_hat: float, cfg: ControllerConfig) -> np.ndarray:
    Y1, Y2 = _check(Y1, Y2)
    M = np.ascontiguousarray(M, dtype=float)
    if M.shape != (Y1.size, Y1.size):
        raise DimensionMismatch("inertia matrix does not match error dimension")
    return _torque_entry(M, Y1, Y2, float(rho_hat), cfg.a1, cfg.b1)


def _limit(cfg: ControllerConfig) -> float:
    return -1.0 if cfg.torque_limit is None else float(cfg.torque_limit)


def control_step(state, x1d, x2d, adaptive: AdaptiveState, cfg: ControllerConfig,
                 dt: float, M) -> tuple[np.ndarray, AdaptiveState]:
    """errors -> transform -> adaptive update -> torque, for one tick.

    ``M`` is the inertia matrix at ``state.x1`` (already scaled if a
    model-mismatch study wants it scaled).
    """
    x1, x2, x1d, x2d = _check(state.x1, state.x2, x1d, x2d)
    M = np.ascontiguousarray(M, dtype=float)
    if M.shape != (x1.size, x1.size):
        raise DimensionMismatch("inertia matrix does not match state dimension")
    tau, rho = _control_entry(x1, x2, x1d, x2d, float(adaptive.rho_hat), M, cfg.gains,
                        dt, _limit(cfg))
    return tau, AdaptiveState(rho)


# ---------------------------------------------------------------- PID baseline

@dataclass
class PidGains:
    kp: tuple = (5000.0, 2000.0)
    ki: tuple = (30000.0, 10000.0)
    kd: tuple = (200.0, 50.0)
    integral_limit: float = 0.5  # rad*s, anti-windup clamp on the integral

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def pid_step(state, x1d, x2d, gains: PidGains, dt: float, integral=None):
    """Per-joint PID on the position error, tau = -(Kp e1 + Ki int e1 + Kd e2).

    Returns ``(tau, integral')``.
    """
    e1, e2 = compute_errors(state.x1, state.x2, x1d, x2d)
    integral = np.zeros_like(e1) if integral is None else np.asarray(integral, dtype=float)
    integral = np.clip(integral + e1 * dt, -gains.integral_limit, gains.integral_limit)
    tau = -(np.asarray(gains.kp) * e1 + np.asarray(gains.ki) * integral
            + np.asarray(gains.kd) * e2)
    return tau, integral

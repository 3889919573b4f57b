"""Fused controller + plant rollouts at the 1 kHz control rate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .arm import MODES, ArmParams, JointState, _blown_up, _mass, _rk4, step_dynamics
from .controller import ControllerConfig, PidGains, _control, _limit, pid_step
from .errors import NumericalBlowup

CONTROL_DT = 1e-3


@njit(cache=True)
def _rollout(x1, x2, t, x1d, x2d, rho, p, mode, gains, limit, mass_scale, dt, uniforms,
             rec_q, rec_qd, rec_qref, rec_tau):
    """Run len(uniforms) ticks holding the commanded velocity x2d.

    The reference advances x1d += x2d*dt after every tick.  Returns the
    final (x1, x2, t, x1d, rho, status) with status 0 ok, 1 blow-up; the
    rec_* buffers receive per-tick samples taken after the plant step.
    """
    n_steps = uniforms.size
    x1 = x1.copy()
    x2 = x2.copy()
    x1d = x1d.copy()
    for k in range(n_steps):
        M = mass_scale * _mass(x1, p)
        tau, rho = _control(x1, x2, x1d, x2d, rho, M, gains, dt, limit)
        x1, x2 = _rk4(x1, x2, tau, t, dt, uniforms[k], p, mode)
        t += dt
        x1d = x1d + x2d * dt
        rec_q[k] = x1
        rec_qd[k] = x2
        rec_qref[k] = x1d
        rec_tau[k] = tau
        if _blown_up(x1, x2):
            return x1, x2, t, x1d, rho, 1
    return x1, x2, t, x1d, rho, 0


@dataclass
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qref: np.ndarray
    tau: np.ndarray


class ClosedLoop:
    """Arm + adaptive controller sharing one seeded disturbance stream."""

    def __init__(self, params: ArmParams, cfg: ControllerConfig, mode: str = "full",
                 dt: float = CONTROL_DT):
        self.params = params
        self.cfg = cfg
        self.mode = mode
        self.dt = dt
        self._p = params.as_array()
        self._mode = MODES[mode]
        self._gains = cfg.gains

    def run(self, state: JointState, x1d, x2d, rho: float, n_steps: int, rng):
        """Advance ``n_steps`` ticks.  Returns (state', x1d', rho', Trajectory)."""
        n = state.n
        uniforms = rng.random(n_steps) if self._mode == 0 else np.zeros(n_steps)
        bufs = [np.zeros((n_steps, n)) for _ in range(4)]
        x1, x2, t, x1d_new, rho, status = _rollout(
            state.x1, state.x2, state.t, np.ascontiguousarray(x1d, dtype=float),
            np.ascontiguousarray(x2d, dtype=float), float(rho), self._p, self._mode,
            self._gains, _limit(self.cfg), self.cfg.mass_scale, self.dt, uniforms, *bufs)
        if status:
            raise NumericalBlowup("closed-loop state diverged")
        times = state.t + self.dt * np.arange(1, n_steps + 1)
        return JointState(x1, x2, t), x1d_new, rho, Trajectory(times, *bufs)


def step_response(params: ArmParams, cfg: ControllerConfig, q0, amplitude, duration: float,
                  mode: str = "full", seed: int = 0, dt: float = CONTROL_DT) -> Trajectory:
    """Regulate from rest at ``q0`` to ``q0 + amplitude`` (per joint)."""
    q0 = np.asarray(q0, dtype=float)
    target = q0 + np.broadcast_to(np.asarray(amplitude, dtype=float), q0.shape)
    n_steps = int(round(duration / dt))
    loop = ClosedLoop(params, cfg, mode, dt)
    state = JointState(q0, np.zeros_like(q0), 0.0)
    _, _, _, traj = loop.run(state, target, np.zeros_like(q0), cfg.rho0, n_steps,
                             np.random.default_rng(seed))
    traj.q = np.vstack([q0, traj.q])
    traj.qd = np.vstack([np.zeros_like(q0), traj.qd])
    traj.qref = np.vstack([target, traj.qref])
    traj.tau = np.vstack([traj.tau[:1], traj.tau])
    traj.t = np.concatenate([[0.0], traj.t])
    return traj


def pid_step_response(params: ArmParams, gains: PidGains, q0, amplitude, duration: float,
                      mode: str = "full", seed: int = 0, dt: float = CONTROL_DT) -> Trajectory:
    """Same scenario as ``step_response`` under the PID baseline."""
    q0 = np.asarray(q0, dtype=float)
    target = q0 + np.broadcast_to(np.asarray(amplitude, dtype=float), q0.shape)
    n_steps = int(round(duration / dt))
    rng = np.random.default_rng(seed)
    state = JointState(q0, np.zeros_like(q0), 0.0)
    zero = np.zeros_like(q0)
    integral = None
    t, q, qd, tau = [0.0], [q0], [zero], []
    for _ in range(n_steps):
        u, integral = pid_step(state, target, zero, gains, dt, integral)
        state = step_dynamics(state, u, dt, rng, params, mode)
        t.append(state.t)
        q.append(state.x1)
        qd.append(state.x2)
        tau.append(u)
    tau = np.array(tau)
    return Trajectory(np.array(t), np.array(q), np.array(qd), np.tile(target, (n_steps + 1, 1)),
                      np.vstack([tau[:1], tau]))

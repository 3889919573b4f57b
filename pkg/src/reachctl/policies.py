"""Hand-written velocity policies for evaluation without a trained agent."""
from __future__ import annotations

import numpy as np

from .arm import ArmParams


def _unpack(obs, n):
    target, delta, tip, q = obs[0:3], obs[3:6], obs[6:9], obs[9:9 + n]
    return target, delta, tip, q, obs[9 + n:]


class ZeroPolicy:
    def __init__(self, n_joints: int = 2):
        self.n = n_joints

    def __call__(self, obs) -> np.ndarray:
        return np.zeros(self.n)


class ResolvedRatePolicy:
    """Damped least-squares tip servo with a short-range obstacle repulsion.

    Commands are rescaled (direction preserved) to fit the per-joint bounds.
    """

    def __init__(self, params: ArmParams, velocity_bounds, obstacles=(), gain: float = 2.0,
                 damping: float = 0.05, influence: float = 0.15, repulsion: float = 1.5):
        self.params = params
        self.bounds = np.asarray(velocity_bounds, dtype=float)
        self.obstacles = list(obstacles)
        self.gain = gain
        self.damping = damping
        self.influence = influence
        self.repulsion = repulsion

    def jacobian(self, q) -> np.ndarray:
        l1, l2 = self.params.l1, self.params.l2
        s1, c1 = np.sin(q[0]), np.cos(q[0])
        s12, c12 = np.sin(q[0] + q[1]), np.cos(q[0] + q[1])
        return np.array([[-l1 * s1 - l2 * s12, -l2 * s12], [l1 * c1 + l2 * c12, l2 * c12]])

    def __call__(self, obs) -> np.ndarray:
        _, delta, tip, q, _ = _unpack(np.asarray(obs, dtype=float), 2)
        v = self.gain * delta[:2]
        for ob in self.obstacles:
            away = tip[:2] - np.asarray(ob.center)
            d = np.linalg.norm(away) - ob.radius
            if d < self.influence:
                v += self.repulsion * (self.influence - max(d, 1e-3)) / self.influence \
                    * away / np.linalg.norm(away)
        J = self.jacobian(q)
        dq = J.T @ np.linalg.solve(J @ J.T + self.damping**2 * np.eye(2), v)
        ratio = np.max(np.abs(dq) / self.bounds)
        if ratio > 1.0:
            dq /= ratio
        return dq

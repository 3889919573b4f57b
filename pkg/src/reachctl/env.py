"""Reaching task: workspace sampling, observations, reward and the 33 Hz / 1 kHz bridge."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arm import ArmParams, JointState, forward_kinematics
from .closedloop import CONTROL_DT, ClosedLoop
from .controller import ControllerConfig
from .errors import ConfigError, EmptyWorkspace, NumericalBlowup

REASONS = ("reached", "boundary", "collision", "timeout", "running", "diverged")

JOINT_LIMITS = ((-math.pi / 4, 3 * math.pi / 4), (-5 * math.pi / 6, 5 * math.pi / 6))
VELOCITY_BOUNDS = (0.1, 0.4)


@dataclass
class Obstacle:
    center: tuple
    radius: float

    def __post_init__(self):
        self.center = tuple(float(c) for c in self.center)
        if len(self.center) != 2:
            raise ConfigError("obstacle centre must be (x, y)")
        if not self.radius > 0:
            raise ConfigError("obstacle radius must be > 0")


@dataclass
class TaskSpec:
    obstacles: list = field(default_factory=list)
    clearance: float = 0.05
    limits: tuple = JOINT_LIMITS
    threshold: float = 0.04
    reach_reward: float = 200.0
    boundary_penalty: float = 50.0
    collision_penalty: float = 100.0
    initial_state: tuple = (math.pi / 4, math.pi / 4)
    velocity_bounds: tuple = VELOCITY_BOUNDS
    max_steps: int = 1000
    policy_dt: float = 0.03
    control_dt: float = CONTROL_DT
    grid_resolution: float = 0.05
    mode: str = "full"

    def __post_init__(self):
        self.obstacles = [o if isinstance(o, Obstacle) else Obstacle(**o) for o in self.obstacles]
        self.limits = tuple((float(lo), float(hi)) for lo, hi in self.limits)
        if any(lo >= hi for lo, hi in self.limits):
            raise ConfigError("joint limits need lo < hi")
        if not self.threshold > 0:
            raise ConfigError("reach threshold must be > 0")
        if self.clearance < 0:
            raise ConfigError("clearance must be >= 0")
        self.initial_state = tuple(float(v) for v in self.initial_state)
        self.velocity_bounds = tuple(float(v) for v in self.velocity_bounds)
        if len(self.initial_state) != len(self.limits) or \
                len(self.velocity_bounds) != len(self.limits):
            raise ConfigError("initial_state, limits and velocity_bounds disagree on n")
        ratio = self.policy_dt / self.control_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("policy_dt must be an integer multiple of control_dt")

    @property
    def n_joints(self) -> int:
        return len(self.limits)

    @property
    def substeps(self) -> int:
        return int(round(self.policy_dt / self.control_dt))

    @property
    def obs_dim(self) -> int:
        return 9 + self.n_joints + len(self.obstacles)

    def to_dict(self) -> dict:
        return {
            "obstacles": [{"center": list(o.center), "radius": o.radius} for o in self.obstacles],
            "clearance": self.clearance,
            "limits": [list(l) for l in self.limits],
            "threshold": self.threshold,
            "rewards": {"reach": self.reach_reward, "boundary": self.boundary_penalty,
                        "collision": self.collision_penalty},
            "initial_state": list(self.initial_state),
            "velocity_bounds": list(self.velocity_bounds),
            "max_steps": self.max_steps,
            "policy_dt": self.policy_dt,
            "control_dt": self.control_dt,
            "grid_resolution": self.grid_resolution,
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        d = dict(d)
        rewards = d.pop("rewards", {})
        unknown_r = set(rewards) - {"reach", "boundary", "collision"}
        if unknown_r:
            raise ConfigError(f"unknown reward keys: {sorted(unknown_r)}")
        allowed = set(cls.__dataclass_fields__) - {"reach_reward", "boundary_penalty",
                                                   "collision_penalty"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown task keys: {sorted(unknown)}")
        if "reach" in rewards:
            d["reach_reward"] = rewards["reach"]
        if "boundary" in rewards:
            d["boundary_penalty"] = rewards["boundary"]
        if "collision" in rewards:
            d["collision_penalty"] = rewards["collision"]
        return cls(**d)


# Fig. 3-style scene: five tip obstacles, four targets.  Geometry is made up.
PRESET_OBSTACLES = [
    Obstacle((1.25, 0.85), 0.12),
    Obstacle((0.15, 1.45), 0.10),
    Obstacle((-0.65, 1.15), 0.12),
    Obstacle((1.45, -0.25), 0.10),
    Obstacle((0.85, 0.30), 0.10),
]
PRESET_TARGETS = {
    "a": (1.55, 0.55, 0.0),
    "b": (-0.95, 0.85, 0.0),
    "c": (1.65, -0.20, 0.0),
    "d": (0.35, 1.15, 0.0),
}


def obstacle_preset() -> TaskSpec:
    return TaskSpec(obstacles=list(PRESET_OBSTACLES))


@dataclass
class Observation:
    target: np.ndarray
    delta: np.ndarray
    tip: np.ndarray
    joints: np.ndarray
    obstacle_dist: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.target, self.delta, self.tip, self.joints,
                               self.obstacle_dist])


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    reason: str
    tip_error: float


def joint_grid(task: TaskSpec, resolution: float) -> np.ndarray:
    if not resolution > 0:
        raise ValueError("grid resolution must be > 0")
    axes = [np.linspace(lo, hi, max(2, int(math.floor((hi - lo) / resolution)) + 1))
            for lo, hi in task.limits]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(axes))


def tip_positions(Q, params: ArmParams) -> np.ndarray:
    Q = np.atleast_2d(Q)
    a = Q[:, 0]
    b = Q[:, 0] + Q[:, 1]
    return np.stack([params.l1 * np.cos(a) + params.l2 * np.cos(b),
                     params.l1 * np.sin(a) + params.l2 * np.sin(b), np.zeros_like(a)], -1)


def obstacle_distances(points, obstacles) -> np.ndarray:
    """Euclidean distance from each point to each obstacle centre, shape (N, m)."""
    pts = np.atleast_2d(points)[:, :2]
    if not obstacles:
        return np.zeros((pts.shape[0], 0))
    centers = np.array([o.center for o in obstacles])
    return np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=-1)


def build_workspace(params: ArmParams, task: TaskSpec, resolution: float | None = None):
    """Tip points of a joint-limit grid that keep radius + clearance from every obstacle."""
    Q = joint_grid(task, task.grid_resolution if resolution is None else resolution)
    P = tip_positions(Q, params)
    if task.obstacles:
        radii = np.array([o.radius for o in task.obstacles])
        keep = np.all(obstacle_distances(P, task.obstacles) >= radii + task.clearance, axis=1)
        P = P[keep]
    if P.shape[0] == 0:
        raise EmptyWorkspace("obstacles exclude every reachable tip point")
    return P


def reward(prev_error: float, error: float, events, task: TaskSpec) -> float:
    """Reach > boundary > collision > distance shaping (with -1 when the error grew)."""
    if "reached" in events:
        return task.reach_reward
    if "boundary" in events:
        return -task.boundary_penalty
    if "collision" in events:
        return -task.collision_penalty
    r = -math.log10(1.0 + error - task.threshold)
    if error > prev_error:
        r -= 1.0
    return r


class ReachEnv:
    """One rollout's worth of arm, controller and target state."""

    def __init__(self, params: ArmParams | None = None, task: TaskSpec | None = None,
                 controller: ControllerConfig | None = None, seed: int = 0,
                 record: bool = False):
        self.params = params or ArmParams()
        self.task = task or TaskSpec()
        self.controller = controller or ControllerConfig()
        self.loop = ClosedLoop(self.params, self.controller, self.task.mode, self.task.control_dt)
        self.rng = np.random.default_rng(seed)
        self.workspace = build_workspace(self.params, self.task)
        self.record = record
        self.trace: list = []
        self.target = None
        self.state = None

    @property
    def obs_dim(self) -> int:
        return self.task.obs_dim

    @property
    def act_dim(self) -> int:
        return self.task.n_joints

    @property
    def action_scale(self) -> np.ndarray:
        return np.array(self.task.velocity_bounds)

    def tip(self) -> np.ndarray:
        return forward_kinematics(self.state.x1, self.params)

    def tip_error(self) -> float:
        return float(np.linalg.norm(self.target - self.tip()))

    def observe(self) -> np.ndarray:
        tip = self.tip()
        dist = obstacle_distances(tip, self.task.obstacles)[0]
        return Observation(self.target.copy(), self.target - tip, tip, self.state.x1.copy(),
                           dist).vector()

    def reset(self, target=None) -> np.ndarray:
        if target is None:
            target = self.workspace[self.rng.integers(len(self.workspace))]
        self.target = np.asarray(target, dtype=float).copy()
        q0 = np.array(self.task.initial_state)
        self.state = JointState(q0, np.zeros_like(q0), 0.0)
        self.x1d = q0.copy()
        self.rho = self.controller.rho0
        self.steps = 0
        self.prev_error = self.tip_error()
        self.trace = []
        return self.observe()

    def events(self) -> set:
        ev = set()
        err = self.tip_error()
        if err < self.task.threshold:
            ev.add("reached")
        q = self.state.x1
        if any(not (lo <= qi <= hi) for qi, (lo, hi) in zip(q, self.task.limits)):
            ev.add("boundary")
        if self.task.obstacles:
            d = obstacle_distances(self.tip(), self.task.obstacles)[0]
            if np.any(d < np.array([o.radius for o in self.task.obstacles])):
                ev.add("collision")
        return ev

    def step(self, action) -> StepResult:
        a = np.clip(np.asarray(action, dtype=float), -self.action_scale, self.action_scale)
        try:
            self.state, self.x1d, self.rho, traj = self.loop.run(
                self.state, self.x1d, a, self.rho, self.task.substeps, self.rng)
        except NumericalBlowup:
            self.steps += 1
            return StepResult(np.zeros(self.obs_dim), -self.task.collision_penalty, True,
                              "diverged", float("inf"))
        self.steps += 1
        err = self.tip_error()
        ev = self.events()
        r = reward(self.prev_error, err, ev, self.task)
        if "reached" in ev:
            reason = "reached"
        elif "boundary" in ev:
            reason = "boundary"
        elif "collision" in ev:
            reason = "collision"
        elif self.steps >= self.task.max_steps:
            reason = "timeout"
        else:
            reason = "running"
        if self.record:
            self._record(traj, a, r)
        self.prev_error = err
        return StepResult(self.observe(), r, reason != "running", reason, err)

    def _record(self, traj, action, r):
        tips = tip_positions(traj.q, self.params)
        errs = np.linalg.norm(tips - self.target, axis=1)
        for k in range(traj.t.size):
            self.trace.append((traj.t[k], *traj.q[k], *traj.qref[k], *traj.tau[k],
                               tips[k, 0], tips[k, 1], errs[k],
                               r if k == traj.t.size - 1 else 0.0))

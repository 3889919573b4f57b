import math

import numpy as np
import pytest

from reachctl.arm import ArmParams, forward_kinematics
from reachctl.env import (PRESET_OBSTACLES, PRESET_TARGETS, JOINT_LIMITS, Obstacle, ReachEnv,
                          TaskSpec, build_workspace, joint_grid, obstacle_distances,
                          obstacle_preset, reward, tip_positions)
from reachctl.errors import ConfigError, EmptyWorkspace
from reachctl.policies import ResolvedRatePolicy, ZeroPolicy
from reachctl.sac import evaluate

P = ArmParams()
TASK = TaskSpec()


# ------------------------------------------------------------ reward

def test_reward_table_values():
    assert reward(0.5, 0.03, {"reached"}, TASK) == 200.0
    assert reward(0.5, 0.5, {"boundary"}, TASK) == -50.0
    assert reward(0.5, 0.5, {"collision"}, TASK) == -100.0
    assert reward(0.5, 0.04, set(), TASK) == 0.0


def test_reward_worsening_penalty():
    r = reward(0.13, 0.14, set(), TASK)
    assert r == pytest.approx(-math.log10(1.1) - 1.0)
    assert r == pytest.approx(-1.0414, abs=1e-4)
    assert reward(0.15, 0.14, set(), TASK) == pytest.approx(-math.log10(1.1))


def test_reward_precedence():
    assert reward(0.1, 0.03, {"reached", "boundary", "collision"}, TASK) == 200.0
    assert reward(0.1, 0.3, {"boundary", "collision"}, TASK) == -50.0


# ------------------------------------------------------------ workspace

def test_workspace_without_obstacles_keeps_grid():
    W = build_workspace(P, TASK)
    assert len(W) == len(joint_grid(TASK, TASK.grid_resolution))
    assert np.all(W[:, 2] == 0)


def test_workspace_empty_when_obstacle_covers_everything():
    task = TaskSpec(obstacles=[Obstacle((0.0, 0.0), 2.0)])
    with pytest.raises(EmptyWorkspace):
        build_workspace(P, task)
    with pytest.raises(ValueError):
        build_workspace(P, TASK, resolution=0.0)


def test_workspace_monotone_in_clearance():
    Q = joint_grid(TASK, 0.05)
    pts = tip_positions(Q, P)
    radii = np.array([o.radius for o in PRESET_OBSTACLES])
    centers = np.array([o.center for o in PRESET_OBSTACLES])
    removed = []
    for c in (0.0, 0.05, 0.1, 0.2):
        W = build_workspace(P, TaskSpec(obstacles=PRESET_OBSTACLES, clearance=c))
        brute = sum(1 for p in pts
                    if any(math.dist(p[:2], cc) < r + c for cc, r in zip(centers, radii)))
        assert len(pts) - len(W) == brute
        removed.append(brute)
    assert removed == sorted(removed) and removed[-1] > removed[0]


def test_preset_targets_are_reachable_and_clear():
    task = obstacle_preset()
    lo, hi = np.array(JOINT_LIMITS).T
    Q = joint_grid(task, 0.01)
    pts = tip_positions(Q, P)
    for name, tgt in PRESET_TARGETS.items():
        d = obstacle_distances(tgt, task.obstacles)[0]
        assert np.all(d >= [o.radius + task.clearance for o in task.obstacles]), name
        assert np.min(np.linalg.norm(pts[:, :2] - tgt[:2], axis=1)) < 0.02, name


def test_taskspec_validation_and_roundtrip():
    with pytest.raises(ConfigError):
        Obstacle((0, 0), 0.0)
    with pytest.raises(ConfigError):
        TaskSpec(threshold=0.0)
    with pytest.raises(ConfigError):
        TaskSpec(limits=((1.0, 0.0), (0.0, 1.0)))
    with pytest.raises(ConfigError):
        TaskSpec(policy_dt=0.0305)
    with pytest.raises(ConfigError):
        TaskSpec.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        TaskSpec.from_dict({"rewards": {"bonus": 3}})
    t = obstacle_preset()
    assert TaskSpec.from_dict(t.to_dict()) == t
    assert TaskSpec.from_dict({"rewards": {"reach": 10}}).reach_reward == 10


# ------------------------------------------------------------ observation / reset

def test_observation_layout():
    env = ReachEnv(P, obstacle_preset(), seed=0)
    obs = env.reset()
    assert obs.shape == (16,) == (env.obs_dim,)
    tip = forward_kinematics(env.state.x1, P)
    np.testing.assert_allclose(obs[0:3], env.target)
    np.testing.assert_allclose(obs[3:6], env.target - tip)
    np.testing.assert_allclose(obs[6:9], tip)
    np.testing.assert_allclose(obs[9:11], TASK.initial_state)
    assert np.all(obs[11:] >= 0)
    assert ReachEnv(P, TASK).reset().shape == (11,)


def test_tip_at_target_gives_zero_delta():
    env = ReachEnv(P, TASK)
    obs = env.reset(forward_kinematics(TASK.initial_state, P))
    assert np.all(obs[3:6] == 0)


def test_reset_targets_deterministic_and_clear():
    task = obstacle_preset()
    a, b = ReachEnv(P, task, seed=5), ReachEnv(P, task, seed=5)
    need = np.array([o.radius + task.clearance for o in task.obstacles])
    for _ in range(200):
        a.reset()
        b.reset()
        assert np.array_equal(a.target, b.target)
        assert np.all(obstacle_distances(a.target, task.obstacles)[0] >= need)


def test_reset_restores_controller_state():
    env = ReachEnv(P, TASK, seed=0)
    env.reset()
    for _ in range(5):
        env.step([0.1, 0.4])
    env.reset()
    np.testing.assert_array_equal(env.x1d, TASK.initial_state)
    assert env.rho == env.controller.rho0 and env.steps == 0


# ------------------------------------------------------------ stepping

def test_substeps_per_policy_step():
    assert TASK.substeps == 30
    env = ReachEnv(P, TASK, record=True)
    env.reset()
    env.step([0.0, 0.0])
    assert len(env.trace) == 30
    assert env.state.t == pytest.approx(0.03)
    assert len(env.trace[0]) == 11


def test_zero_action_from_rest_is_shaping_only():
    env = ReachEnv(P, TASK)
    env.reset(np.array([0.0, 1.5, 0.0]))
    res = env.step([0.0, 0.0])
    assert res.reason == "running" and not res.done
    assert -2.0 < res.reward <= 0.0


def test_boundary_event():
    task = TaskSpec(initial_state=(3 * math.pi / 4 - 0.01, 0.0))
    env = ReachEnv(P, task)
    env.reset(np.array([-1.0, 0.5, 0.0]))
    res = env.step([0.1, 0.0])
    for _ in range(20):
        if res.done:
            break
        res = env.step([0.1, 0.0])
    assert res.done and res.reason == "boundary" and res.reward == -50.0


def test_collision_event():
    q0 = (0.3, 0.4)
    tip = forward_kinematics(q0, P)
    task = TaskSpec(obstacles=[Obstacle((tip[0] + 0.1, tip[1]), 0.09)], initial_state=q0)
    env = ReachEnv(P, task)
    env.workspace = np.array([[tip[0] + 1.0, tip[1], 0.0]])
    env.reset(np.array([tip[0] - 0.5, tip[1] + 0.5, 0.0]))
    # push the tip toward +x
    pol = ResolvedRatePolicy(P, task.velocity_bounds)
    res = None
    for _ in range(100):
        env_target = env.target
        env.target = np.array([tip[0] + 0.3, tip[1], 0.0])
        a = pol(env.observe())
        env.target = env_target
        res = env.step(a)
        if res.done:
            break
    assert res.reason == "collision" and res.reward == -100.0


def test_timeout():
    env = ReachEnv(P, TaskSpec(max_steps=3))
    env.reset(np.array([0.0, 1.5, 0.0]))
    reasons = [env.step([0.0, 0.0]).reason for _ in range(3)]
    assert reasons == ["running", "running", "timeout"]


def test_step_deterministic_given_seed():
    def roll(seed):
        env = ReachEnv(P, TASK, seed=seed)
        env.reset()
        return [env.step([0.05, -0.2]).observation for _ in range(5)]
    for a, b in zip(roll(3), roll(3)):
        np.testing.assert_array_equal(a, b)


def test_action_clipped_to_bounds():
    env = ReachEnv(P, TASK)
    env.reset()
    env.step([5.0, -5.0])
    np.testing.assert_allclose(env.x1d - np.array(TASK.initial_state), [0.003, -0.012],
                               atol=1e-12)


def test_scripted_policy_reaches_with_obstacles():
    task = obstacle_preset()
    env = ReachEnv(P, task, seed=0)
    pol = ResolvedRatePolicy(P, task.velocity_bounds, task.obstacles)
    results = evaluate(pol, env, [np.array(t) for t in PRESET_TARGETS.values()])
    assert all(r[0] == "reached" for r in results)
    for reason, _, err in results:
        if reason == "reached":
            assert err < 0.04


def test_zero_policy_from_reached_pose():
    env = ReachEnv(P, TASK)
    tip = forward_kinematics(TASK.initial_state, P)
    res = evaluate(ZeroPolicy(), env, [tip + np.array([0.01, 0.0, 0.0])])
    assert res[0][0] == "reached" and res[0][1] == 1

"""Soft actor-critic, value-network variant, on numpy MLPs.

Each gradient phase performs, in order: value regression toward
``min(Q1, Q2) - alpha * log pi``, twin-Q regression toward
``r + gamma * V_target(s')``, the reparameterised policy step, and Polyak
averaging of the target value net.

Actions are handled internally in the squashed space ``tanh(u)`` in [-1, 1];
the environment sees them multiplied by the per-joint velocity bounds.
Log-densities are those of the squashed variable (the constant scale
Jacobian is dropped).
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DivergenceDetected
from .nn import MLP, Adam

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
SQUASH_EPS = 1e-6
CHECKPOINT_FORMAT = "reachctl-sac"
CHECKPOINT_VERSION = 1
LOG_FIELDS = ("episode", "steps", "return", "success", "tip_error_final")


@dataclass
class SacConfig:
    batch_size: int = 512
    tau_smooth: float = 0.001
    gamma: float = 0.995
    lr: float = 1e-3
    initial_random_steps: int = 1000
    max_steps_per_episode: int = 1000
    episodes: int = 20000
    alpha: float = 0.2
    hidden: tuple = (64, 64)
    buffer_capacity: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.tau_smooth <= 1:
            raise ConfigError("tau_smooth must lie in (0, 1]")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ConfigError("batch_size and buffer_capacity must be positive")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        self.hidden = tuple(int(h) for h in self.hidden)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SacConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown sac keys: {sorted(unknown)}")
        return cls(**d)


class Transition(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class Batch(NamedTuple):
    s: np.ndarray
    a: np.ndarray  # squashed space, [-1, 1]
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray


class ReplayBuffer:
    """FIFO ring buffer; storage grows on demand up to ``capacity``."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self._alloc(min(self.capacity, 4096))
        self.size = 0
        self.head = 0  # next write slot
        self.count = 0  # total transitions ever added

    def _alloc(self, n):
        old = getattr(self, "s", None)
        new = {
            "s": np.zeros((n, self.obs_dim)),
            "a": np.zeros((n, self.act_dim)),
            "r": np.zeros(n),
            "s_next": np.zeros((n, self.obs_dim)),
            "done": np.zeros(n),
            "ids": np.zeros(n, dtype=np.int64),
        }
        if old is not None:
            for k, arr in new.items():
                arr[:self.size] = getattr(self, k)[:self.size]
        for k, arr in new.items():
            setattr(self, k, arr)

    def __len__(self):
        return self.size

    def add(self, s, a, r, s_next, done):
        if self.size == len(self.r) and self.size < self.capacity:
            self._alloc(min(self.capacity, 2 * self.size))
        i = self.head
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = float(done)
        self.ids[i] = self.count
        self.count += 1
        self.head = (self.head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def oldest_id(self) -> int:
        return self.count - self.size

    def sample(self, batch_size: int, rng) -> Batch:
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx])


class Networks:
    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.policy = MLP((obs_dim, *hidden, 2 * act_dim), rng, out_scale=0.1)
        self.q1 = MLP((obs_dim + act_dim, *hidden, 1), rng)
        self.q2 = MLP((obs_dim + act_dim, *hidden, 1), rng)
        self.v = MLP((obs_dim, *hidden, 1), rng)
        self.v_target = self.v.copy()

    def named(self) -> dict:
        return {"policy": self.policy, "q1": self.q1, "q2": self.q2, "v": self.v,
                "v_target": self.v_target}


# ---------------------------------------------------------------- policy

class PolicySample(NamedTuple):
    a: np.ndarray  # squashed action
    logp: np.ndarray
    u: np.ndarray
    mu: np.ndarray
    log_std: np.ndarray
    clip_mask: np.ndarray
    eps: np.ndarray
    acts: list


def policy_sample(policy: MLP, S, eps) -> PolicySample:
    out, acts = policy.forward(S)
    A = out.shape[1] // 2
    mu, raw = out[:, :A], out[:, A:]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    mask = (raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX)
    u = mu + np.exp(log_std) * eps
    a = np.tanh(u)
    logp = (np.sum(-0.5 * eps**2 - log_std - 0.5 * math.log(2 * math.pi), axis=1)
            - np.sum(np.log(1.0 - a**2 + SQUASH_EPS), axis=1))
    return PolicySample(a, logp, u, mu, log_std, mask, eps, acts)


def sample_action(policy: MLP, s, rng, deterministic: bool = False, scale=None) -> np.ndarray:
    """Velocity command for a single observation, within +-scale per joint."""
    S = np.atleast_2d(np.asarray(s, dtype=float))
    A = policy.sizes[-1] // 2
    eps = np.zeros((S.shape[0], A)) if deterministic else rng.standard_normal((S.shape[0], A))
    a = policy_sample(policy, S, eps).a
    if scale is not None:
        a = a * np.asarray(scale)
    return a[0] if np.ndim(s) == 1 else a


def _q_in(S, A):
    return np.concatenate([S, A], axis=1)


# ---------------------------------------------------------------- losses

def value_loss(batch: Batch, nets: Networks, alpha: float, eps=None, rng=None):
    """0.5 * mean (V(s) - [min Q(s, a~) - alpha log pi(a~|s)])^2 and its psi-gradient."""
    S = batch.s
    if eps is None:
        eps = rng.standard_normal((S.shape[0], nets.act_dim))
    ps = policy_sample(nets.policy, S, eps)
    X = _q_in(S, ps.a)
    q = np.minimum(nets.q1(X), nets.q2(X))[:, 0]
    target = q - alpha * ps.logp
    v, acts = nets.v.forward(S)
    d = v[:, 0] - target
    loss = 0.5 * np.mean(d**2)
    grads, _ = nets.v.backward(acts, (d / S.shape[0])[:, None])
    return float(loss), grads


def q_loss(batch: Batch, nets: Networks, gamma: float):
    """Sum of both heads' 0.5 * mean (Q(s, a) - r - gamma (1-done) V_target(s'))^2."""
    y = batch.r + gamma * (1.0 - batch.done) * nets.v_target(batch.s_next)[:, 0]
    X = _q_in(batch.s, batch.a)
    total = 0.0
    out = []
    for net in (nets.q1, nets.q2):
        q, acts = net.forward(X)
        d = q[:, 0] - y
        total += 0.5 * np.mean(d**2)
        out.append(net.backward(acts, (d / X.shape[0])[:, None])[0])
    return float(total), out[0], out[1]


def policy_loss(batch: Batch, nets: Networks, alpha: float, eps=None, rng=None):
    """mean(alpha log pi(f(eps; s)|s) - min Q(s, f(eps; s))) and its phi-gradient."""
    S = batch.s
    B = S.shape[0]
    if eps is None:
        eps = rng.standard_normal((B, nets.act_dim))
    ps = policy_sample(nets.policy, S, eps)
    X = _q_in(S, ps.a)
    q1, acts1 = nets.q1.forward(X)
    q2, acts2 = nets.q2.forward(X)
    use1 = q1[:, 0] <= q2[:, 0]
    qmin = np.where(use1, q1[:, 0], q2[:, 0])
    loss = float(np.mean(alpha * ps.logp - qmin))
    # dL/da through the selected critic head
    dq = -np.ones((B, 1)) / B
    _, dx1 = nets.q1.backward(acts1, dq * use1[:, None])
    _, dx2 = nets.q2.backward(acts2, dq * (~use1)[:, None])
    da = (dx1 + dx2)[:, S.shape[1]:]
    t2 = ps.a**2
    dlogp_du = 2.0 * ps.a * (1.0 - t2) / (1.0 - t2 + SQUASH_EPS)
    du = da * (1.0 - t2) + (alpha / B) * dlogp_du
    std = np.exp(ps.log_std)
    dlog_std = (du * std * eps - alpha / B) * ps.clip_mask
    grads, _ = nets.policy.backward(ps.acts, np.concatenate([du, dlog_std], axis=1))
    return loss, grads


def soft_update(target: MLP, source: MLP, tau: float):
    for pt, ps in zip(target.params, source.params):
        pt *= 1.0 - tau
        pt += tau * ps
    return target


# ---------------------------------------------------------------- agent

class SacAgent:
    def __init__(self, obs_dim: int, act_dim: int, action_scale, cfg: SacConfig | None = None):
        self.cfg = cfg or SacConfig()
        self.rng = np.random.default_rng(self.cfg.seed)
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.action_scale = np.asarray(action_scale, dtype=float)
        self.nets = Networks(obs_dim, act_dim, self.cfg.hidden, self.rng)
        lr = self.cfg.lr
        self.opt = {name: Adam(getattr(self.nets, name).params, lr)
                    for name in ("policy", "q1", "q2", "v")}
        self.episode = 0
        self.total_steps = 0

    def act(self, obs, deterministic: bool = False) -> np.ndarray:
        return sample_action(self.nets.policy, obs, self.rng, deterministic, self.action_scale)

    def random_action(self) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, self.act_dim) * self.action_scale

    def update(self, batch: Batch) -> dict:
        c = self.cfg
        lv, gv = value_loss(batch, self.nets, c.alpha, rng=self.rng)
        self.opt["v"].step(gv)
        lq, g1, g2 = q_loss(batch, self.nets, c.gamma)
        self.opt["q1"].step(g1)
        self.opt["q2"].step(g2)
        lp, gp = policy_loss(batch, self.nets, c.alpha, rng=self.rng)
        self.opt["policy"].step(gp)
        soft_update(self.nets.v_target, self.nets.v, c.tau_smooth)
        return {"value": lv, "q": lq, "policy": lp}

    # ------------------------------------------------------------ persistence

    def state_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": self.cfg.to_dict(),
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "action_scale": self.action_scale.tolist(),
            "networks": {k: [p.tolist() for p in net.params]
                         for k, net in self.nets.named().items()},
            "optimizers": {k: o.state_dict() for k, o in self.opt.items()},
            "rng_state": self.rng.bit_generator.state,
            "episode": self.episode,
            "total_steps": self.total_steps,
        }

    def save(self, path):
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(self.state_dict(), fh)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "SacAgent":
        with open(path) as fh:
            d = json.load(fh)
        if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"{path} is not a version-{CHECKPOINT_VERSION} SAC checkpoint")
        agent = cls(d["obs_dim"], d["act_dim"], d["action_scale"], SacConfig.from_dict(d["config"]))
        for k, net in agent.nets.named().items():
            for dst, src in zip(net.params, d["networks"][k]):
                dst[...] = np.asarray(src)
        for k, o in agent.opt.items():
            o.load_state_dict(d["optimizers"][k])
        agent.rng.bit_generator.state = d["rng_state"]
        agent.episode = d["episode"]
        agent.total_steps = d["total_steps"]
        return agent


def train(env, cfg: SacConfig | None = None, agent: SacAgent | None = None, log_path=None,
          checkpoint_path=None, checkpoint_every: int = 100, episodes: int | None = None,
          buffer: ReplayBuffer | None = None, on_episode=None):
    """Off-policy training loop; returns (agent, log rows).

    Episode numbering continues from ``agent.episode`` when resuming.
    Timeouts are not treated as terminal for bootstrapping.
    """
    if cfg is None:
        cfg = agent.cfg if agent is not None else SacConfig()
    if agent is None:
        agent = SacAgent(env.obs_dim, env.act_dim, env.action_scale, cfg)
    if buffer is None:  # an empty buffer is falsy, so test identity
        buffer = ReplayBuffer(cfg.buffer_capacity, env.obs_dim, env.act_dim)
    env.task.max_steps = cfg.max_steps_per_episode
    n_episodes = cfg.episodes if episodes is None else episodes
    rows = []
    log_fh = None
    if log_path is not None:
        exists = os.path.exists(log_path) and agent.episode > 0
        log_fh = open(log_path, "a" if exists else "w", newline="")
        writer = csv.writer(log_fh)
        if not exists:
            writer.writerow(LOG_FIELDS)
    scale = agent.action_scale
    try:
        for _ in range(n_episodes):
            obs = env.reset()
            ep_return = 0.0
            while True:
                if agent.total_steps < cfg.initial_random_steps:
                    a = agent.random_action()
                else:
                    a = agent.act(obs)
                res = env.step(a)
                terminal = res.done and res.reason != "timeout"
                buffer.add(obs, a / scale, res.reward, res.observation, terminal)
                agent.total_steps += 1
                ep_return += res.reward
                obs = res.observation
                if agent.total_steps >= cfg.initial_random_steps and len(buffer) >= cfg.batch_size:
                    losses = agent.update(buffer.sample(cfg.batch_size, agent.rng))
                    if not all(math.isfinite(v) for v in losses.values()):
                        if checkpoint_path is not None:
                            agent.save(checkpoint_path)
                        raise DivergenceDetected(f"non-finite loss {losses}")
                if res.done:
                    break
            agent.episode += 1
            row = (agent.episode, env.steps, ep_return, int(res.reason == "reached"),
                   res.tip_error)
            rows.append(row)
            if log_fh is not None:
                writer.writerow(row)
                log_fh.flush()
            if on_episode is not None:
                on_episode(agent, row)
            if checkpoint_path is not None and agent.episode % checkpoint_every == 0:
                agent.save(checkpoint_path)
    finally:
        if log_fh is not None:
            log_fh.close()
    if checkpoint_path is not None:
        agent.save(checkpoint_path)
    return agent, rows


def evaluate(agent_or_policy, env, targets, deterministic: bool = True):
    """Roll out on each fixed target; returns list of (reason, steps, final tip error)."""
    out = []
    for tgt in targets:
        obs = env.reset(tgt)
        while True:
            if isinstance(agent_or_policy, SacAgent):
                a = agent_or_policy.act(obs, deterministic=deterministic)
            else:
                a = agent_or_policy(obs)
            res = env.step(a)
            obs = res.observation
            if res.done:
                break
        out.append((res.reason, env.steps, res.tip_error))
    return out

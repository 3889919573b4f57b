"""Step-response features and the gain-tuning objective."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .arm import ArmParams
from .closedloop import CONTROL_DT, step_response
from .controller import GAIN_NAMES, ControllerConfig
from .cso import CsoConfig
from .errors import ConfigError, NumericalBlowup

# lower ends are small positive numbers so log-uniform seeding is defined
GAIN_BOUNDS = np.array([
    [1e-3, 1000.0],  # a0
    [1e-3, 1000.0],  # a1
    [1e-3, 10.0],    # b1
    [1e-6, 1.0],     # c1
    [1e-3, 10.0],    # r1
])


@dataclass
class TuningScenario:
    amplitude: float = 0.1
    duration: float = 0.5
    q0: tuple = (0.0, 0.0)
    w_tr: float = 1.0
    w_ts: float = 1.0
    w_mp: float = 1.0
    w_ess: float = 10.0
    penalty: float = 1e6
    mode: str = "full"
    seed: int = 0  # disturbance stream shared by every candidate

    def __post_init__(self):
        if min(self.w_tr, self.w_ts, self.w_mp, self.w_ess) < 0:
            raise ConfigError("metric weights must be >= 0")
        if not self.duration > 0:
            raise ConfigError("duration must be > 0")
        self.q0 = tuple(float(v) for v in self.q0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["q0"] = list(self.q0)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TuningScenario":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class StepMetrics:
    rise_time: float
    settling_time: float
    overshoot: float
    steady_state_error: float
    settled: bool = True
    trivial: bool = False

    def weighted(self, sc: TuningScenario) -> float:
        return (sc.w_tr * self.rise_time + sc.w_ts * self.settling_time
                + sc.w_mp * self.overshoot + sc.w_ess * self.steady_state_error)


def step_metrics(t, y, amplitude: float, error, band: float = 0.02) -> StepMetrics:
    """Features of one joint's step response.

    ``y`` is the displacement from the start pose, ``error`` the tracking
    error q - q_ref; steady-state error is mean |error| over the last 10%.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    error = np.asarray(error, dtype=float)
    tail = max(1, int(np.ceil(0.1 * t.size)))
    ess = float(np.mean(np.abs(error[-tail:])))
    if amplitude == 0:
        return StepMetrics(0.0, 0.0, 0.0, ess, settled=True, trivial=True)
    r = y / amplitude
    above10 = np.nonzero(r >= 0.1)[0]
    above90 = np.nonzero(r >= 0.9)[0]
    outside = np.nonzero(np.abs(r - 1.0) > band)[0]
    settled = above90.size > 0 and (outside.size == 0 or outside[-1] < t.size - 1)
    if not settled:
        return StepMetrics(np.inf, np.inf, float(max(0.0, r.max() - 1.0)), ess, settled=False)
    tr = float(t[above90[0]] - t[above10[0]])
    ts = 0.0 if outside.size == 0 else float(t[outside[-1] + 1] - t[0])
    mp = float(max(0.0, r.max() - 1.0))
    return StepMetrics(tr, ts, mp, ess)


def evaluate_gains(gains, scenario: TuningScenario, params: ArmParams | None = None,
                   base: ControllerConfig | None = None):
    """Simulate the scenario.  Returns (per-joint metrics or None on blow-up, trajectory)."""
    params = params or ArmParams()
    cfg = (base or ControllerConfig()).with_gains(gains)
    try:
        traj = step_response(params, cfg, scenario.q0, scenario.amplitude, scenario.duration,
                             mode=scenario.mode, seed=scenario.seed, dt=CONTROL_DT)
    except NumericalBlowup:
        return None, None
    if not np.all(np.isfinite(traj.q)):
        return None, traj
    y = traj.q - traj.q[0]
    err = traj.q - traj.qref
    return [step_metrics(traj.t, y[:, i], scenario.amplitude, err[:, i])
            for i in range(y.shape[1])], traj


def control_objective(gains, scenario: TuningScenario, params: ArmParams | None = None,
                      base: ControllerConfig | None = None) -> float:
    gains = np.asarray(gains, dtype=float)
    if np.any(gains <= 0) or not np.all(np.isfinite(gains)):
        return scenario.penalty
    metrics, _ = evaluate_gains(gains, scenario, params, base)
    if metrics is None:
        return scenario.penalty
    if not all(m.settled for m in metrics):
        # stable but unsettled: rank near-misses below the flat penalty so the
        # search is not stranded on a plateau; gross failures cost the penalty
        miss = max(m.steady_state_error for m in metrics) / max(abs(scenario.amplitude), 1e-12)
        return scenario.penalty * (0.5 + 0.5 * min(1.0, miss))
    cost = sum(m.weighted(scenario) for m in metrics)
    return float(cost) if np.isfinite(cost) else scenario.penalty


class GainObjective:
    """Picklable ``gains -> cost`` callable for the optimizer."""

    def __init__(self, scenario: TuningScenario, params: ArmParams | None = None,
                 base: ControllerConfig | None = None):
        self.scenario = scenario
        self.params = params or ArmParams()
        self.base = base or ControllerConfig()

    def __call__(self, gains) -> float:
        return control_objective(gains, self.scenario, self.params, self.base)


def default_cso_config(seed: int = 0, **overrides) -> CsoConfig:
    kw = dict(eta=15, n_iteration=200, pa=0.25, beta=1.5, bounds=GAIN_BOUNDS.copy(),
              seed=seed, log_init=True)
    kw.update(overrides)
    return CsoConfig(**kw)


def gains_dict(gains) -> dict:
    return {k: float(v) for k, v in zip(GAIN_NAMES, gains)}

"""Single-document JSON run configuration."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .arm import ArmParams
from .controller import GAIN_NAMES, ControllerConfig
from .cso import CsoConfig
from .env import TaskSpec
from .errors import ConfigError
from .sac import SacConfig
from .tuning import GAIN_BOUNDS, TuningScenario, default_cso_config

SECTIONS = ("arm", "controller", "cso", "sac", "task", "run")
RUN_KEYS = {"seed", "out", "episodes", "eval_targets", "policy", "checkpoint", "scenario"}
CSO_KEYS = {"eta", "n_iteration", "pa", "beta", "seed", "coupled_levy", "log_init", "bounds"}


@dataclass
class RunConfig:
    arm: ArmParams = field(default_factory=ArmParams)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    gain_source: str = "explicit"  # explicit | file | tune
    gains_file: str | None = None
    cso: CsoConfig = field(default_factory=default_cso_config)
    scenario: TuningScenario = field(default_factory=TuningScenario)
    sac: SacConfig = field(default_factory=SacConfig)
    task: TaskSpec = field(default_factory=TaskSpec)
    seed: int = 0
    out: str = "out"
    episodes: int | None = None
    eval_targets: int = 4
    policy: str = "scripted"  # scripted | zero | checkpoint
    checkpoint: str | None = None

    def resolve_gains(self) -> ControllerConfig:
        """Controller config with gains from the selected source (not 'tune')."""
        if self.gain_source == "file":
            return self.controller.with_gains(load_gains(self.gains_file))
        if self.gain_source == "tune":
            raise ConfigError("gains must be tuned first (run the tune command)")
        return self.controller


def load_gains(path) -> np.ndarray:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read gains file {path}: {exc}") from exc
    g = d.get("gains", d)
    missing = [k for k in GAIN_NAMES if k not in g]
    if missing:
        raise ConfigError(f"gains file {path} lacks {missing}")
    return np.array([float(g[k]) for k in GAIN_NAMES])


def _check_keys(section: str, d: dict, allowed):
    if not isinstance(d, dict):
        raise ConfigError(f"section '{section}' must be an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")


def _controller_section(d: dict):
    d = dict(d)
    sources = [k for k in ("gains", "gains_file", "tune") if k in d and d[k] not in (None, False)]
    explicit = [k for k in GAIN_NAMES if k in d]
    if explicit:
        sources.append("explicit")
    if len(sources) > 1:
        raise ConfigError(f"controller needs exactly one gain source, got {sources}")
    gains_file = d.pop("gains_file", None)
    tune = bool(d.pop("tune", False))
    gains = d.pop("gains", None)
    if gains is not None:
        if isinstance(gains, dict):
            _check_keys("controller.gains", gains, GAIN_NAMES)
            d.update(gains)
        else:
            if len(gains) != len(GAIN_NAMES):
                raise ConfigError("controller.gains needs 5 values (a0, a1, b1, c1, r1)")
            d.update(zip(GAIN_NAMES, map(float, gains)))
    cfg = ControllerConfig.from_dict(d)
    source = "file" if gains_file else "tune" if tune else "explicit"
    return cfg, source, gains_file


def _cso_section(d: dict, seed: int) -> CsoConfig:
    _check_keys("cso", d, CSO_KEYS)
    d = dict(d)
    d.setdefault("seed", seed)
    bounds = d.pop("bounds", None)
    if bounds is not None:
        d["bounds"] = np.asarray(bounds, dtype=float)
    try:
        return default_cso_config(**d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def from_dict(doc: dict, seed: int | None = None, out: str | None = None) -> RunConfig:
    _check_keys("top level", doc, SECTIONS)
    run = doc.get("run", {})
    _check_keys("run", run, RUN_KEYS)
    seed = int(run.get("seed", 0) if seed is None else seed)
    if seed < 0 or seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    try:
        arm = ArmParams.from_dict(doc.get("arm", {}))
        controller, source, gains_file = _controller_section(doc.get("controller", {}))
        cso = _cso_section(doc.get("cso", {}), seed)
        sac_d = dict(doc.get("sac", {}))
        sac_d.setdefault("seed", seed)
        sac = SacConfig.from_dict(sac_d)
        task = TaskSpec.from_dict(doc.get("task", {}))
        scenario = TuningScenario.from_dict(run.get("scenario", {}))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    policy = run.get("policy", "scripted")
    if policy not in ("scripted", "zero", "checkpoint"):
        raise ConfigError(f"run.policy must be scripted, zero or checkpoint, not {policy!r}")
    return RunConfig(arm=arm, controller=controller, gain_source=source, gains_file=gains_file,
                     cso=cso, scenario=scenario, sac=sac, task=task, seed=seed,
                     out=out or run.get("out", "out"), episodes=run.get("episodes"),
                     eval_targets=int(run.get("eval_targets", 4)), policy=policy,
                     checkpoint=run.get("checkpoint"))


def load(path=None, seed: int | None = None, out: str | None = None) -> RunConfig:
    if path is None:
        return from_dict({}, seed, out)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return from_dict(doc, seed, out)


__all__ = ["RunConfig", "from_dict", "load", "load_gains", "GAIN_BOUNDS"]

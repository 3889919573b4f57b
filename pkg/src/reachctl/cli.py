"""reachctl command line: tune, train, run, simulate, report."""
from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .closedloop import pid_step_response, step_response
from .controller import DEFAULT_GAINS, PidGains
from .cso import optimize
from .env import PRESET_TARGETS, ReachEnv, obstacle_preset
from .errors import ConfigError, DivergenceDetected, NumericalBlowup
from .policies import ResolvedRatePolicy, ZeroPolicy
from .report import (format_table, plot_step, plot_traces, read_trace, summarize, write_rows,
                     write_trace)
from .sac import SacAgent, train
from .tuning import GainObjective, TuningScenario, control_objective, gains_dict, step_metrics

EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_cfg(args, out=None):
    rc = cfgmod.load(args.config, args.seed, out or args.out)
    os.makedirs(rc.out, exist_ok=True)
    return rc


# ------------------------------------------------------------------ tune

def cmd_tune(args) -> int:
    # --out may name the gains file itself; history.csv then goes next to it
    gains_path = None
    if args.out and args.out.endswith(".json"):
        gains_path = args.out
    rc = _load_cfg(args, os.path.dirname(gains_path) or "." if gains_path else None)
    gains_path = gains_path or os.path.join(rc.out, "gains.json")
    cso = rc.cso
    for flag, name in (("eta", "eta"), ("iterations", "n_iteration"), ("pa", "pa"),
                       ("beta", "beta")):
        v = getattr(args, flag)
        if v is not None:
            setattr(cso, name, v)
    if args.seed is not None:
        cso.seed = args.seed
    try:
        cso.__post_init__()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    scenario = rc.scenario
    if args.scenario:
        with open(args.scenario) as fh:
            scenario = TuningScenario.from_dict(json.load(fh))
    objective = GainObjective(scenario, rc.arm, rc.controller)
    res = optimize(objective, cso)
    ref_cost = control_objective(DEFAULT_GAINS.gains, scenario, rc.arm, rc.controller)
    _write_json(gains_path, {
        "gains": gains_dict(res.best),
        "cost": res.cost,
        "reference_cost": ref_cost,
        "evaluations": res.n_evaluations,
        "scenario": scenario.to_dict(),
        "scenario_hash": scenario.digest(),
        "cso": {"eta": cso.eta, "n_iteration": cso.n_iteration, "pa": cso.pa, "beta": cso.beta,
                "seed": cso.seed},
    })
    with open(os.path.join(rc.out, "history.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("iteration", "best_cost", "mean_cost"))
        for it, best, mean in res.history:
            w.writerow((it, repr(best), repr(mean)))
    print(" ".join(f"{k}={v:.6g}" for k, v in gains_dict(res.best).items()))
    print(f"cost {res.cost:.6g} (default gains {ref_cost:.6g})")
    return 0


# ------------------------------------------------------------------ train

def cmd_train(args) -> int:
    rc = _load_cfg(args)
    ctrl = rc.resolve_gains()
    env = ReachEnv(rc.arm, rc.task, ctrl, seed=rc.seed)
    ck = os.path.join(rc.out, "checkpoint.json")
    log = os.path.join(rc.out, "train_log.csv")
    agent = SacAgent.load(args.resume) if args.resume else None
    episodes = args.episodes if args.episodes is not None else rc.episodes
    try:
        agent, rows = train(env, rc.sac if agent is None else agent.cfg, agent, log_path=log,
                            checkpoint_path=ck, episodes=episodes)
    except DivergenceDetected as exc:
        print(f"diverged: {exc}; checkpoint kept at {ck}", file=sys.stderr)
        return EXIT_DIVERGED
    warm = min(agent.total_steps, agent.cfg.initial_random_steps)
    _write_json(os.path.join(rc.out, "train_summary.json"), {
        "episodes": agent.episode,
        "total_steps": agent.total_steps,
        "warmup_random_steps": warm,
        "success_rate_last_100": float(np.mean([r[3] for r in rows[-100:]])) if rows else 0.0,
    })
    print(f"trained to episode {agent.episode} ({agent.total_steps} steps, warmup {warm})")
    return 0


# ------------------------------------------------------------------ run

def _policy(rc, args, env):
    kind = args.policy or rc.policy
    if kind == "zero":
        return ZeroPolicy(env.act_dim)
    if kind == "checkpoint":
        path = args.checkpoint or rc.checkpoint
        if not path:
            raise ConfigError("checkpoint policy needs --checkpoint")
        agent = SacAgent.load(path)
        if agent.obs_dim != env.obs_dim:
            raise ConfigError("checkpoint observation size does not match the task")
        return lambda obs: agent.act(obs, deterministic=True)
    return ResolvedRatePolicy(rc.arm, rc.task.velocity_bounds, rc.task.obstacles)


def cmd_run(args) -> int:
    rc = _load_cfg(args)
    task = obstacle_preset() if args.preset == "obstacles" else rc.task
    ctrl = rc.resolve_gains()
    env = ReachEnv(rc.arm, task, ctrl, seed=rc.seed, record=True)
    policy = _policy(rc, args, env)
    if args.preset == "obstacles":
        targets = {k: np.array(v) for k, v in PRESET_TARGETS.items()}
    else:
        k = args.episodes or rc.eval_targets
        idx = np.random.default_rng(rc.seed).integers(len(env.workspace), size=k)
        targets = {f"t{i}": env.workspace[j] for i, j in enumerate(idx)}
    rows, traces = [], {}
    for name, tgt in targets.items():
        obs = env.reset(tgt)
        while True:
            res = env.step(policy(obs))
            obs = res.observation
            if res.done:
                break
        traces[name] = list(env.trace)
        write_trace(os.path.join(rc.out, f"traj_{name}.csv"), traces[name])
        rows.append(summarize(name, res.reason, traces[name], rc.arm, task.policy_dt))
    write_rows(os.path.join(rc.out, "report.csv"), rows)
    plot_traces(traces, rc.out, task.threshold)
    print(format_table(rows))
    return 0


# ------------------------------------------------------------------ simulate

def cmd_simulate(args) -> int:
    rc = _load_cfg(args)
    sc = rc.scenario
    over = {k: v for k, v in (("amplitude", args.amplitude), ("duration", args.duration))
            if v is not None}
    if over:
        sc = TuningScenario.from_dict({**sc.to_dict(), **over})
    ctrl = rc.resolve_gains()
    runs = {"adaptive": step_response(rc.arm, ctrl, sc.q0, sc.amplitude, sc.duration,
                                      mode=sc.mode, seed=sc.seed)}
    if not args.no_pid:
        runs["pid"] = pid_step_response(rc.arm, PidGains(), sc.q0, sc.amplitude, sc.duration,
                                        mode=sc.mode, seed=sc.seed)
    digest = sc.digest()
    out_rows = []
    for name, tr in runs.items():
        for j in range(tr.q.shape[1]):
            m = step_metrics(tr.t, tr.q[:, j] - tr.q[0, j], sc.amplitude,
                             tr.q[:, j] - tr.qref[:, j])
            out_rows.append((name, j + 1, m.rise_time, m.settling_time, m.overshoot,
                             m.steady_state_error, int(m.settled), int(m.trivial), digest))
    with open(os.path.join(rc.out, "simulate.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("controller", "joint", "rise_time_s", "settling_time_s", "overshoot",
                    "ess_rad", "settled", "trivial", "scenario_hash"))
        for r in out_rows:
            w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in r])
    plot_step(runs["adaptive"].t, {k: tr.q - tr.q[0] for k, tr in runs.items()},
              os.path.join(rc.out, "step.svg"), sc.amplitude)
    for r in out_rows:
        flag = " (trivial)" if r[7] else "" if r[6] else " (unsettled)"
        print(f"{r[0]:<9} joint {r[1]}  Tr {r[2]:.4g} s  Ts {r[3]:.4g} s  Mp {r[4]:.3g}  "
              f"Ess {r[5]:.3g} rad{flag}  [{digest}]")
    return 0


# ------------------------------------------------------------------ report

def cmd_report(args) -> int:
    src = args.dir or args.out or "out"
    paths = sorted(glob.glob(os.path.join(src, "traj_*.csv")))
    if not paths:
        raise ConfigError(f"no traj_*.csv files in {src}")
    reasons = {}
    rep = os.path.join(src, "report.csv")
    if os.path.exists(rep):
        with open(rep) as fh:
            reasons = {r["task"]: r["reason"] for r in csv.DictReader(fh)}
    rc = cfgmod.load(args.config, args.seed, None)
    dest = args.out or src
    os.makedirs(dest, exist_ok=True)
    rows, traces = [], {}
    for p in paths:
        name = os.path.basename(p)[5:-4]
        T = read_trace(p)
        traces[name] = T
        reason = reasons.get(name, "reached" if T[-1, 9] < rc.task.threshold else "unknown")
        rows.append(summarize(name, reason, T, rc.arm, rc.task.policy_dt))
    write_rows(os.path.join(dest, "summary.csv"), rows)
    plot_traces(traces, dest, rc.task.threshold)
    print(format_table(rows))
    return 0


# ------------------------------------------------------------------ entry

def _global_flags(default):
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", default=default, help="run configuration JSON")
    g.add_argument("--seed", type=int, default=default, help="seed (unsigned 64-bit)")
    g.add_argument("--out", default=default, help="output directory")
    return g


def build_parser() -> argparse.ArgumentParser:
    # flags are accepted before or after the subcommand; the copy on each
    # subcommand suppresses its defaults so it cannot mask an earlier value
    common = _global_flags(argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="reachctl", parents=[_global_flags(None)],
                                description="Learned reaching with an adaptive arm controller.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tune", parents=[common], help="cuckoo-search controller gains")
    t.add_argument("--eta", type=int)
    t.add_argument("--iterations", type=int)
    t.add_argument("--pa", type=float)
    t.add_argument("--beta", type=float)
    t.add_argument("--scenario", help="tuning scenario JSON")
    t.set_defaults(func=cmd_tune)

    tr = sub.add_parser("train", parents=[common], help="train the SAC reaching policy")
    tr.add_argument("--episodes", type=int)
    tr.add_argument("--resume", help="checkpoint to continue from")
    tr.set_defaults(func=cmd_train)

    r = sub.add_parser("run", parents=[common], help="evaluate a policy and write a report")
    r.add_argument("--policy", choices=("scripted", "zero", "checkpoint"))
    r.add_argument("--checkpoint")
    r.add_argument("--preset", choices=("none", "obstacles"), default="none")
    r.add_argument("--episodes", type=int, help="number of random targets (no preset)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("simulate", parents=[common], help="controller-only step study")
    s.add_argument("--amplitude", type=float)
    s.add_argument("--duration", type=float)
    s.add_argument("--no-pid", action="store_true")
    s.set_defaults(func=cmd_simulate)

    rp = sub.add_parser("report", parents=[common], help="rebuild tables/plots from trajectories")
    rp.add_argument("dir", nargs="?", help="directory holding traj_*.csv")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceDetected, NumericalBlowup) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())

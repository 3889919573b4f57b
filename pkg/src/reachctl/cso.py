"""Cuckoo search with Levy flights as a bounded black-box minimizer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CsoConfig:
    eta: int = 15
    n_iteration: int = 200
    pa: float = 0.25
    beta: float = 1.5
    bounds: np.ndarray = field(default_factory=lambda: np.array([[-5.0, 5.0]] * 5))
    seed: int = 0
    log_init: bool = False
    coupled_levy: bool = False  # reuse one normal draw for numerator and denominator

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.bounds.ndim != 2 or self.bounds.shape[1] != 2:
            raise ValueError("bounds must have shape (dim, 2)")
        if np.any(self.bounds[:, 0] > self.bounds[:, 1]):
            raise ValueError("bounds need lo <= hi")
        if self.eta < 2:
            raise ValueError("eta must be >= 2")
        if not 0.0 <= self.pa <= 1.0:
            raise ValueError("pa must lie in [0, 1]")
        if not 1.0 < self.beta <= 2.0:
            raise ValueError("beta must lie in (1, 2]")
        if self.n_iteration < 0:
            raise ValueError("n_iteration must be >= 0")
        if self.log_init and np.any(self.bounds[:, 0] <= 0):
            raise ValueError("log-uniform initialisation needs positive lower bounds")

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]


@dataclass
class Candidate:
    position: np.ndarray
    cost: float


@dataclass
class CsoResult:
    best: np.ndarray
    cost: float
    history: list  # (iteration, best_cost, mean_cost)
    population: np.ndarray
    costs: np.ndarray
    n_evaluations: int


def mantegna_sigma(beta: float) -> float:
    num = math.gamma(1 + beta) * math.sin(math.pi * beta / 2)
    den = math.gamma((1 + beta) / 2) * beta * 2 ** ((beta - 1) / 2)
    return (num / den) ** (1 / beta)


def levy_step(beta: float, rng, size=None, coupled: bool = False):
    """Mantegna sample u/|v|^(1/beta), u ~ N(0, sigma^2), v ~ N(0, 1)."""
    sigma = mantegna_sigma(beta)
    shape = () if size is None else size
    u = rng.standard_normal(shape)
    if coupled:
        v = u.copy()
    else:
        v = rng.standard_normal(shape)
    v = np.asarray(v, dtype=float)
    tiny = np.abs(v) < 1e-12
    while np.any(tiny):
        v[tiny] = rng.standard_normal(int(tiny.sum()))
        if coupled:
            u = np.where(tiny, v, u)
        tiny = np.abs(v) < 1e-12
    stp = sigma * u / np.abs(v) ** (1 / beta)
    return float(stp) if size is None else stp


def clamp(x, bounds):
    return np.clip(x, bounds[:, 0], bounds[:, 1])


def global_walk(B_j, B_best, beta, rng, bounds=None, coupled=False):
    B_j = np.asarray(B_j, dtype=float)
    diff = B_j - np.asarray(B_best, dtype=float)
    stp = levy_step(beta, rng, size=B_j.shape, coupled=coupled)
    ell = rng.standard_normal(B_j.shape)
    new = B_j + ell * 0.01 * stp * diff
    return new if bounds is None else clamp(new, bounds)


def _evaluate(objective, X, map_fn):
    return np.array(list(map_fn(objective, X)), dtype=float)


def abandon_and_replace(population, costs, pa, rng, objective, bounds, map_fn=map):
    """Regenerate the worst ceil(pa*eta) nests, keeping a proposal only on improvement.

    Returns (population', costs', n_proposals).
    """
    population = np.array(population, dtype=float)
    costs = np.array(costs, dtype=float)
    eta = len(population)
    k = math.ceil(pa * eta - 1e-12)
    if k == 0:
        return population, costs, 0
    worst = np.argsort(costs, kind="stable")[::-1][:k]
    iota = rng.permutation(eta)
    kappa = rng.permutation(eta)
    steps = rng.random((k, population.shape[1]))  # elementwise rand(0, 1)
    proposals = np.empty((k, population.shape[1]))
    for r, j in enumerate(worst):
        proposals[r] = population[j] + steps[r] * (population[iota[j]] - population[kappa[j]])
    proposals = clamp(proposals, bounds)
    new_costs = _evaluate(objective, proposals, map_fn)
    for r, j in enumerate(worst):
        if new_costs[r] < costs[j]:
            population[j] = proposals[r]
            costs[j] = new_costs[r]
    return population, costs, k


def initial_population(cfg: CsoConfig, rng) -> np.ndarray:
    lo, hi = cfg.bounds[:, 0], cfg.bounds[:, 1]
    U = rng.random((cfg.eta, cfg.dim))
    if cfg.log_init:
        return np.exp(np.log(lo) + U * (np.log(hi) - np.log(lo)))
    return lo + U * (hi - lo)


def optimize(objective, cfg: CsoConfig, map_fn=map, callback=None) -> CsoResult:
    """Minimize ``objective`` over the box ``cfg.bounds``.

    ``map_fn(objective, X)`` evaluates a batch; pass a pool's ordered map to
    evaluate concurrently.  Results do not depend on evaluation order since
    all random draws happen between batches on a single generator.
    """
    rng = np.random.default_rng(cfg.seed)
    pop = initial_population(cfg, rng)
    costs = _evaluate(objective, pop, map_fn)
    n_eval = cfg.eta
    history = [(0, float(costs.min()), float(costs.mean()))]
    for it in range(1, cfg.n_iteration + 1):
        best = pop[np.argmin(costs)].copy()
        proposals = np.array([global_walk(b, best, cfg.beta, rng, cfg.bounds, cfg.coupled_levy)
                              for b in pop])
        new_costs = _evaluate(objective, proposals, map_fn)
        n_eval += cfg.eta
        better = new_costs < costs
        pop[better] = proposals[better]
        costs[better] = new_costs[better]
        pop, costs, k = abandon_and_replace(pop, costs, cfg.pa, rng, objective, cfg.bounds,
                                            map_fn)
        n_eval += k
        history.append((it, float(costs.min()), float(costs.mean())))
        if callback is not None:
            callback(it, pop, costs)
    j = int(np.argmin(costs))
    return CsoResult(pop[j].copy(), float(costs[j]), history, pop, costs, n_eval)

"""Covariance Matrix Adaptation Evolution Strategy with box constraints.

Self-contained ask/tell implementation with the canonical parameterization:
rank-based recombination weights, cumulative step-size adaptation, and
rank-1 plus rank-mu covariance updates. Candidates are sampled from
N(mean, sigma^2 C); out-of-bounds draws are clamped to the box and carry a
quadratic penalty so infeasible geometry ranks behind feasible candidates
while every evaluated point stays feasible.

The update consumes fitness values only through their ranking (stable
argsort), so any strictly increasing transform of the objective leaves the
state trajectory bitwise unchanged. Sampling uses a counter-based
generator keyed on (seed, generation), making ask a pure function of the
state: replays and parallel evaluation cannot perturb the stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, EigenFailure, NonFiniteFitness, ShapeMismatch

#: quadratic bound-violation penalty per squared unit of overshoot
PENALTY_WEIGHT = 1.0e4

#: convergence reasons reported by `converged`
MAX_EVALS = "MaxEvals"
TOL_FUN = "TolFun"
TOL_X = "TolX"
STAGNATION = "Stagnation"


def default_population(dim: int) -> int:
    return 4 + int(3 * math.log(dim))


@dataclass(frozen=True)
class CmaConfig:
    """Search setup; lam is the population size (lambda)."""

    dim: int
    x0: np.ndarray
    sigma0: float
    bounds_lo: np.ndarray
    bounds_hi: np.ndarray
    lam: int = 0                      # 0 means the 4 + floor(3 ln D) default
    seed: int = 0
    max_evals: int = 100_000
    tol_fun: float = 1e-12
    tol_x: float = 1e-14

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "bounds_lo", np.asarray(self.bounds_lo, dtype=float))
        object.__setattr__(self, "bounds_hi", np.asarray(self.bounds_hi, dtype=float))
        if self.lam == 0:
            object.__setattr__(self, "lam", default_population(self.dim))


class Ask(NamedTuple):
    """One generation of candidates: raw draws, clamped copies, penalties."""

    raw: np.ndarray        # (lam, dim), exactly as sampled
    repaired: np.ndarray   # (lam, dim), inside the box
    penalties: np.ndarray  # (lam,)


@dataclass(frozen=True)
class CmaState:
    """Full strategy state; tell returns a new instance each generation."""

    config: CmaConfig
    mean: np.ndarray
    sigma: float
    cov: np.ndarray
    path_sigma: np.ndarray
    path_c: np.ndarray
    generation: int
    eval_count: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float


def cma_init(config: CmaConfig) -> CmaState:
    """Validate the config and build the generation-0 state.

    Weights follow w_i proportional to ln(lam/2 + 1/2) - ln i over the best
    mu = floor(lam/2) candidates, normalized to sum 1; learning rates are
    the canonical functions of (dim, mu_eff).
    """
    d = config.dim
    if d < 1:
        raise ConfigError(f"dim must be >= 1, got {d}")
    if config.lam < 2:
        raise ConfigError(f"population size must be >= 2, got {config.lam}")
    if not (np.isfinite(config.sigma0) and config.sigma0 > 0):
        raise ConfigError(f"sigma0 must be > 0, got {config.sigma0}")
    for name, arr in (("x0", config.x0), ("bounds_lo", config.bounds_lo),
                      ("bounds_hi", config.bounds_hi)):
        if arr.shape != (d,):
            raise ConfigError(f"{name} must have shape ({d},), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"{name} must be finite")
    if not np.all(config.bounds_lo < config.bounds_hi):
        raise ConfigError("bounds_lo must be < bounds_hi elementwise")
    if not np.all((config.bounds_lo <= config.x0) & (config.x0 <= config.bounds_hi)):
        raise ConfigError("x0 must lie within the bounds")
    if config.max_evals < 0:
        raise ConfigError("max_evals must be >= 0")

    lam = config.lam
    mu = lam // 2
    raw_w = np.log(lam / 2.0 + 0.5) - np.log(np.arange(1, mu + 1))
    weights = raw_w / raw_w.sum()
    mu_eff = 1.0 / float(np.square(weights).sum())

    c_sigma = (mu_eff + 2.0) / (d + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (d + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d)
    c_1 = 2.0 / ((d + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2.0) ** 2 + mu_eff))
    chi_n = math.sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d))

    return CmaState(config=config, mean=config.x0.copy(), sigma=float(config.sigma0),
                    cov=np.eye(d), path_sigma=np.zeros(d), path_c=np.zeros(d),
                    generation=0, eval_count=0, weights=weights, mu_eff=mu_eff,
                    c_sigma=c_sigma, d_sigma=d_sigma, c_c=c_c, c_1=c_1, c_mu=c_mu,
                    chi_n=chi_n)


def _decompose(cov: np.ndarray):
    # eigendecomposition of the symmetrized covariance; refreshed per ask
    sym = (cov + cov.T) / 2.0
    try:
        evals, evecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"covariance eigendecomposition failed: {exc}") from exc
    if not np.all(np.isfinite(evals)) or evals[0] <= 0.0:
        raise EigenFailure(f"covariance not positive definite (min eigenvalue "
                           f"{evals[0]:g})")
    return evals, evecs


def _generation_rng(seed: int, generation: int) -> np.random.Generator:
    # distinct 256-bit counter block per generation: pure replayable stream
    counter = np.zeros(4, dtype=np.uint64)
    counter[3] = np.uint64(generation)
    return np.random.Generator(np.random.Philox(key=np.uint64(seed), counter=counter))


def repair_with_penalty(x_raw: np.ndarray, bounds_lo: np.ndarray,
                        bounds_hi: np.ndarray) -> tuple[np.ndarray, float]:
    """Clamp to the box; penalty = 1e4 * squared clamp distance."""
    x = np.minimum(np.maximum(x_raw, bounds_lo), bounds_hi)
    delta = x_raw - x
    return x, PENALTY_WEIGHT * float(delta @ delta)


def ask(state: CmaState) -> Ask:
    """Sample lambda candidates x_k = mean + sigma * B sqrt(diag(d)) z_k.

    Returns the raw draws (which tell expects back unchanged), their
    clamped versions for evaluation, and the bound penalties to add to the
    evaluated losses.
    """
    cfg = state.config
    evals, evecs = _decompose(state.cov)
    rng = _generation_rng(cfg.seed, state.generation)
    z = rng.standard_normal((cfg.lam, cfg.dim))
    raw = state.mean + state.sigma * (z * np.sqrt(evals)) @ evecs.T
    repaired = np.empty_like(raw)
    penalties = np.empty(cfg.lam)
    for k in range(cfg.lam):
        repaired[k], penalties[k] = repair_with_penalty(raw[k], cfg.bounds_lo,
                                                        cfg.bounds_hi)
    return Ask(raw=raw, repaired=repaired, penalties=penalties)


def tell(state: CmaState, candidates: np.ndarray, fitnesses: Sequence[float]) -> CmaState:
    """Rank candidates and apply the standard CMA-ES distribution update.

    candidates must be the raw draws from ask (penalties belong in the
    fitnesses); ranking is a stable ascending argsort, so only the order of
    fitness values matters.
    """
    cfg = state.config
    candidates = np.asarray(candidates, dtype=float)
    fitnesses = np.asarray(fitnesses, dtype=float)
    if candidates.shape != (cfg.lam, cfg.dim):
        raise ShapeMismatch(f"expected candidates of shape ({cfg.lam}, {cfg.dim}), "
                            f"got {candidates.shape}")
    if fitnesses.shape != (cfg.lam,):
        raise ShapeMismatch(f"expected {cfg.lam} fitnesses, got shape {fitnesses.shape}")
    if not np.all(np.isfinite(fitnesses)):
        raise NonFiniteFitness("fitness values must be finite")

    d = cfg.dim
    mu = cfg.lam // 2
    order = np.argsort(fitnesses, kind="stable")
    selected = candidates[order[:mu]]

    mean_new = state.weights @ selected
    y_w = (mean_new - state.mean) / state.sigma

    evals, evecs = _decompose(state.cov)
    # C^(-1/2) y_w for the conjugate evolution path
    inv_sqrt_y = evecs @ ((evecs.T @ y_w) / np.sqrt(evals))

    c_s, d_s = state.c_sigma, state.d_sigma
    path_sigma = ((1.0 - c_s) * state.path_sigma
                  + math.sqrt(c_s * (2.0 - c_s) * state.mu_eff) * inv_sqrt_y)
    ps_norm = float(np.linalg.norm(path_sigma))
    sigma_new = state.sigma * math.exp((c_s / d_s) * (ps_norm / state.chi_n - 1.0))

    gen1 = state.generation + 1
    hsig_denom = math.sqrt(1.0 - (1.0 - c_s) ** (2 * gen1))
    hsig = ps_norm / hsig_denom < (1.4 + 2.0 / (d + 1.0)) * state.chi_n

    c_c = state.c_c
    path_c = (1.0 - c_c) * state.path_c
    if hsig:
        path_c = path_c + math.sqrt(c_c * (2.0 - c_c) * state.mu_eff) * y_w

    ys = (selected - state.mean) / state.sigma
    rank_mu = (ys.T * state.weights) @ ys
    decay = 1.0 - state.c_1 - state.c_mu
    cov = decay * state.cov + state.c_1 * np.outer(path_c, path_c) \
        + state.c_mu * rank_mu
    if not hsig:
        # missing rank-1 mass compensated so the trace stays calibrated
        cov = cov + state.c_1 * c_c * (2.0 - c_c) * state.cov
    cov = (cov + cov.T) / 2.0

    return CmaState(config=cfg, mean=mean_new, sigma=sigma_new, cov=cov,
                    path_sigma=path_sigma, path_c=path_c, generation=gen1,
                    eval_count=state.eval_count + cfg.lam, weights=state.weights,
                    mu_eff=state.mu_eff, c_sigma=state.c_sigma, d_sigma=state.d_sigma,
                    c_c=state.c_c, c_1=state.c_1, c_mu=state.c_mu, chi_n=state.chi_n)


def tolfun_window(dim: int, lam: int) -> int:
    return 10 + math.ceil(30.0 * dim / lam)


def stagnation_window(dim: int, lam: int) -> int:
    return 120 + math.ceil(30.0 * dim / lam)


def converged(state: CmaState, best_history: Sequence[float]) -> Optional[str]:
    """Stop reason, or None to continue.

    best_history carries one best-of-generation fitness per tell. MaxEvals
    counts asked evaluations; callers budgeting actual simulations (cache
    hits excluded) apply their own budget check and ignore this reason.
    """
    cfg = state.config
    if state.eval_count >= cfg.max_evals:
        return MAX_EVALS
    hist = np.asarray(best_history, dtype=float)
    w = tolfun_window(cfg.dim, cfg.lam)
    if hist.size >= w:
        recent = hist[-w:]
        if float(recent.max() - recent.min()) < cfg.tol_fun:
            return TOL_FUN
    if state.sigma * math.sqrt(float(np.max(np.diag(state.cov)))) < cfg.tol_x:
        return TOL_X
    ws = stagnation_window(cfg.dim, cfg.lam)
    if hist.size > ws and float(hist[-ws:].min()) >= float(hist[:-ws].min()):
        return STAGNATION
    return None

"""Closed identification loop: candidate -> simulation -> loss -> update.

The search vector x stacks five hydrodynamic coefficients per link,
optionally followed by per-joint (damping, friction_loss) pairs. Each
candidate is simulated at the target trajectory's own timestamps and
scored by trajectory MSE; a bounded CMA-ES drives the search. Evaluations
are cached on a quantized key, and the budget counts actual simulations,
so cache hits are free.
"""
from __future__ import annotations

import json
import multiprocessing as mp
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import cmaes
from .dynamics import DEFAULT_DT, sample_grid, simulate
from .errors import ConfigError, DivergedSimulation, ParseError, ShapeMismatch
from .loss import DIVERGED_LOSS, normalized_endpoint_error, select_keypoints, trajectory_mse
from .model import (
    COEFFS_PER_LINK,
    DEFAULT_COEFF_BOUNDS,
    DEFAULT_COEFF_START,
    MechanismModel,
    ParamVector,
    effective_length,
)
from .trajectory import Trajectory

RESULT_SCHEMA_VERSION = 1

#: bounds for the optional per-joint appended dimensions
DEFAULT_DAMPING_BOUNDS = (0.0, 0.01)    # N m s / rad
DEFAULT_FRICTION_BOUNDS = (0.0, 0.001)  # N m
DEFAULT_JOINT_START = (1e-3, 1e-4)

DEFAULT_SIGMA0 = 1.0

#: cache keys quantize coordinates to this many significant decimal digits
CACHE_DIGITS = 12


@dataclass(frozen=True)
class IdentConfig:
    """Everything one identification run needs."""

    model: MechanismModel
    target: Trajectory
    cma: cmaes.CmaConfig
    loss_keypoints: Optional[tuple[str, ...]] = None  # None = all target keypoints
    dt: float = DEFAULT_DT
    include_joint_params: bool = False

    @property
    def n_links(self) -> int:
        return self.model.n_links

    @property
    def expected_dim(self) -> int:
        d = COEFFS_PER_LINK * self.n_links
        if self.include_joint_params:
            d += 2 * self.n_links
        return d


def make_ident_config(model: MechanismModel, target: Trajectory, *,
                      max_evals: int = 5000, sigma0: float = DEFAULT_SIGMA0,
                      seed: int = 0, lam: int = 0, dt: float = DEFAULT_DT,
                      include_joint_params: bool = False,
                      loss_keypoints: Optional[Sequence[str]] = None,
                      coeff_bounds: tuple[float, float] = DEFAULT_COEFF_BOUNDS,
                      coeff_start: Sequence[float] = DEFAULT_COEFF_START,
                      damping_bounds: tuple[float, float] = DEFAULT_DAMPING_BOUNDS,
                      friction_bounds: tuple[float, float] = DEFAULT_FRICTION_BOUNDS,
                      tol_fun: float = 1e-12, tol_x: float = 1e-14) -> IdentConfig:
    """Assemble search vector layout, bounds, and start point for a model."""
    n = model.n_links
    x0 = list(np.tile(np.asarray(coeff_start, dtype=float), n))
    lo = [coeff_bounds[0]] * (COEFFS_PER_LINK * n)
    hi = [coeff_bounds[1]] * (COEFFS_PER_LINK * n)
    if include_joint_params:
        for _ in range(n):
            x0 += list(DEFAULT_JOINT_START)
            lo += [damping_bounds[0], friction_bounds[0]]
            hi += [damping_bounds[1], friction_bounds[1]]
    cma = cmaes.CmaConfig(dim=len(x0), x0=np.array(x0), sigma0=sigma0,
                          bounds_lo=np.array(lo), bounds_hi=np.array(hi),
                          lam=lam, seed=seed, max_evals=max_evals,
                          tol_fun=tol_fun, tol_x=tol_x)
    return IdentConfig(model=model, target=target, cma=cma,
                       loss_keypoints=tuple(loss_keypoints) if loss_keypoints else None,
                       dt=dt, include_joint_params=include_joint_params)


def _check_config(config: IdentConfig) -> None:
    if config.cma.dim != config.expected_dim:
        raise ConfigError(f"search dimension {config.cma.dim} does not match the "
                          f"model layout ({config.expected_dim})")
    if config.target.times[0] < 0:
        raise ConfigError("target timestamps must start at or after t = 0")
    if config.loss_keypoints is not None:
        missing = set(config.loss_keypoints) - set(config.target.keypoint_labels)
        if missing:
            raise ConfigError(f"loss keypoints {sorted(missing)} not in target "
                              f"labels {config.target.keypoint_labels}")


def split_candidate(config: IdentConfig, x: np.ndarray):
    """x -> (coefficient ParamVector, per-joint damping, per-joint friction)."""
    n = config.n_links
    nc = COEFFS_PER_LINK * n
    x = np.asarray(x, dtype=float)
    if x.shape != (config.cma.dim,):
        raise ShapeMismatch(f"expected candidate of shape ({config.cma.dim},), "
                            f"got {x.shape}")
    coeffs = ParamVector(x[:nc].copy(), config.cma.bounds_lo[:nc].copy(),
                         config.cma.bounds_hi[:nc].copy())
    if not config.include_joint_params:
        return coeffs, None, None
    rest = x[nc:].reshape(n, 2)
    return coeffs, rest[:, 0].copy(), rest[:, 1].copy()


def apply_candidate(config: IdentConfig, x: np.ndarray):
    """Instantiate the (model, coefficients) pair a candidate describes."""
    coeffs, damping, friction = split_candidate(config, x)
    model = config.model
    if damping is not None:
        model = model.with_joint_params(damping, friction)
    return model, coeffs


def evaluate_candidate(config: IdentConfig, x: np.ndarray) -> float:
    """Trajectory MSE of one feasible candidate against the target.

    A diverging simulation scores the finite sentinel 1e6 m^2 so ranking
    stays defined; genuine model-data errors propagate.
    """
    model, coeffs = apply_candidate(config, x)
    target = config.target
    duration = float(target.times[-1])
    fractions = np.linspace(0.0, 1.0, target.n_keypoints)
    try:
        sim = simulate(model, coeffs, duration, config.dt,
                       sample_times=target.times, fractions=fractions)
    except DivergedSimulation:
        return DIVERGED_LOSS
    sim = Trajectory(sim.times, sim.points, target.keypoint_labels)
    if config.loss_keypoints is not None:
        sim = select_keypoints(sim, config.loss_keypoints)
        target = select_keypoints(target, config.loss_keypoints)
    return trajectory_mse(sim, target)


def quantize_key(x: np.ndarray) -> tuple:
    """12-significant-digit decimal key; collisions are physically meaningless."""
    return tuple(f"{v:.{CACHE_DIGITS}g}" for v in x)


@dataclass
class EvalCache:
    """Quantized-key memo of candidate losses, with observable counters."""

    entries: dict = field(default_factory=dict)
    sim_count: int = 0
    hits: int = 0


def cached_evaluate(config: IdentConfig, x: np.ndarray, cache: EvalCache) -> float:
    key = quantize_key(np.asarray(x, dtype=float))
    if key in cache.entries:
        cache.hits += 1
        return cache.entries[key]
    loss = evaluate_candidate(config, x)
    cache.entries[key] = loss
    cache.sim_count += 1
    return loss


# --- parallel evaluation ------------------------------------------------

_WORKER_CONFIG: Optional[IdentConfig] = None


def _init_worker(config: IdentConfig) -> None:
    global _WORKER_CONFIG
    _WORKER_CONFIG = config


def _worker_eval(x: np.ndarray) -> float:
    return evaluate_candidate(_WORKER_CONFIG, x)


class HistoryRow(NamedTuple):
    """One loss-history line: sims spent, best-so-far, generation median."""

    generation: int
    evals: int
    best: float
    median: float


@dataclass(frozen=True)
class IdentResult:
    best_x: np.ndarray
    coeffs: ParamVector
    joint_damping: Optional[np.ndarray]
    joint_friction: Optional[np.ndarray]
    best_loss: float
    normalized_error: float
    loss_history: tuple[HistoryRow, ...]
    eval_count: int
    stop_reason: str
    wall_time_s: float


def run_identification(config: IdentConfig, parallelism: int = 1,
                       cache: Optional[EvalCache] = None) -> IdentResult:
    """Ask -> cached parallel evaluation -> tell, until converged or budget.

    The reported best_x is the feasible evaluated point with the lowest
    penalized fitness ever seen, not the final distribution mean; its raw
    trajectory MSE is best_loss. The budget max_evals caps simulations
    (cache hits are free); histories are bitwise independent of the worker
    count because results are gathered by candidate index.
    """
    _check_config(config)
    if parallelism < 1:
        raise ConfigError(f"parallelism must be >= 1, got {parallelism}")
    t_start = time.perf_counter()
    cache = cache if cache is not None else EvalCache()
    budget = config.cma.max_evals
    state = cmaes.cma_init(config.cma)
    lam = config.cma.lam

    pool = None
    try:
        if parallelism > 1:
            ctx = mp.get_context("spawn")
            pool = ctx.Pool(parallelism, initializer=_init_worker, initargs=(config,))

        def evaluate_batch(xs: list[np.ndarray]) -> list[float]:
            keys = [quantize_key(x) for x in xs]
            losses: list[Optional[float]] = [None] * len(xs)
            missing: dict[tuple, list[int]] = {}
            for k, key in enumerate(keys):
                if key in cache.entries:
                    cache.hits += 1
                    losses[k] = cache.entries[key]
                else:
                    missing.setdefault(key, []).append(k)
            todo = [xs[idxs[0]] for idxs in missing.values()]
            if todo:
                if pool is not None:
                    fresh = pool.map(_worker_eval, todo)
                else:
                    fresh = [evaluate_candidate(config, x) for x in todo]
                cache.sim_count += len(todo)
                for key, value in zip(missing, fresh):
                    cache.entries[key] = value
                    for k in missing[key]:
                        losses[k] = value
            return losses

        best_x: Optional[np.ndarray] = None
        best_loss = np.inf
        best_penalized = np.inf
        history: list[HistoryRow] = []
        gen_best: list[float] = []
        stop_reason = cmaes.MAX_EVALS

        # the start point is always evaluated, even on a zero budget
        x0, pen0 = cmaes.repair_with_penalty(config.cma.x0, config.cma.bounds_lo,
                                             config.cma.bounds_hi)
        loss0 = evaluate_batch([x0])[0]
        best_x, best_loss, best_penalized = x0, loss0, loss0 + pen0
        history.append(HistoryRow(0, cache.sim_count, best_penalized, best_penalized))

        while True:
            if cache.sim_count + lam > budget:
                stop_reason = cmaes.MAX_EVALS
                break
            reason = cmaes.converged(state, gen_best)
            if reason is not None and reason != cmaes.MAX_EVALS:
                stop_reason = reason
                break
            asked = cmaes.ask(state)
            raw_losses = evaluate_batch(list(asked.repaired))
            fitnesses = np.asarray(raw_losses) + asked.penalties
            for k in range(lam):
                if fitnesses[k] < best_penalized:
                    best_penalized = float(fitnesses[k])
                    best_loss = float(raw_losses[k])
                    best_x = asked.repaired[k].copy()
            state = cmaes.tell(state, asked.raw, fitnesses)
            gen_best.append(float(fitnesses.min()))
            history.append(HistoryRow(state.generation, cache.sim_count,
                                      best_penalized, float(np.median(fitnesses))))
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    coeffs, damping, friction = split_candidate(config, best_x)
    norm_err = _normalized_error(config, best_x)
    return IdentResult(best_x=best_x, coeffs=coeffs, joint_damping=damping,
                       joint_friction=friction, best_loss=best_loss,
                       normalized_error=norm_err,
                       loss_history=tuple(history), eval_count=cache.sim_count,
                       stop_reason=stop_reason,
                       wall_time_s=time.perf_counter() - t_start)


def _normalized_error(config: IdentConfig, x: np.ndarray) -> float:
    model, coeffs = apply_candidate(config, x)
    target = config.target
    fractions = np.linspace(0.0, 1.0, target.n_keypoints)
    try:
        sim = simulate(model, coeffs, float(target.times[-1]), config.dt,
                       sample_times=target.times, fractions=fractions)
    except DivergedSimulation:
        return float("inf")
    sim = Trajectory(sim.times, sim.points, target.keypoint_labels)
    return normalized_endpoint_error(sim, target, effective_length(config.model))


def synth_target(model: MechanismModel, x_true: ParamVector, duration: float,
                 sample_rate: float, noise_std: float = 0.0, seed: int = 0,
                 dt: float = DEFAULT_DT) -> Trajectory:
    """Simulated keypoint track plus i.i.d. Gaussian coordinate noise.

    noise_std = 0 returns the simulation output unchanged, bit for bit.
    """
    if noise_std < 0:
        raise ConfigError(f"noise_std must be >= 0, got {noise_std}")
    times = sample_grid(duration, sample_rate)
    traj = simulate(model, x_true, duration, dt, sample_times=times)
    if noise_std == 0:
        return traj
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    noisy = traj.points + noise_std * rng.standard_normal(traj.points.shape)
    return Trajectory(traj.times, noisy, traj.keypoint_labels)


# --- result and coefficient files ----------------------------------------

def result_to_dict(result: IdentResult) -> dict:
    doc = {
        "schema_version": RESULT_SCHEMA_VERSION,
        "best_x": [float(v) for v in result.best_x],
        "per_link_coeffs": [[float(v) for v in row]
                            for row in result.coeffs.coeff_matrix()],
        "best_loss": result.best_loss,
        "normalized_error": result.normalized_error,
        "eval_count": result.eval_count,
        "stop_reason": result.stop_reason,
        "wall_time_s": result.wall_time_s,
    }
    if result.joint_damping is not None:
        doc["joint_params"] = {
            "damping": [float(v) for v in result.joint_damping],
            "friction_loss": [float(v) for v in result.joint_friction],
        }
    return doc


def save_result(result: IdentResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result_to_dict(result), fh, indent=2)
        fh.write("\n")


def save_history(history: Sequence[HistoryRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("generation,evals,best,median\n")
        for row in history:
            fh.write(f"{row.generation},{row.evals},{row.best:.17g},{row.median:.17g}\n")


def coeffs_to_dict(coeffs: ParamVector) -> dict:
    return {
        "schema_version": RESULT_SCHEMA_VERSION,
        "per_link_coeffs": [[float(v) for v in row] for row in coeffs.coeff_matrix()],
    }


def save_coeffs(coeffs: ParamVector, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(coeffs_to_dict(coeffs), fh, indent=2)
        fh.write("\n")


def coeffs_from_dict(doc: dict, bounds: tuple[float, float] = DEFAULT_COEFF_BOUNDS,
                     origin: str = "coefficients"):
    """Parse per-link coefficients from a coeffs or identify-result document.

    Returns (ParamVector, joint_params dict or None). Accepts either a
    dedicated coefficients document or an identification result (both
    carry per_link_coeffs). Bounds widen as needed so stored values stay
    legal.
    """
    try:
        rows = doc["per_link_coeffs"]
        matrix = np.array([[float(v) for v in row] for row in rows], dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != COEFFS_PER_LINK:
            raise ValueError(f"per_link_coeffs must be n x {COEFFS_PER_LINK}")
        joint = doc.get("joint_params")
        if joint is not None:
            joint = {"damping": [float(v) for v in joint["damping"]],
                     "friction_loss": [float(v) for v in joint["friction_loss"]]}
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{origin}: malformed coefficients ({exc})") from exc
    values = matrix.ravel()
    lo = np.minimum(np.full(values.size, float(bounds[0])), values)
    hi = np.maximum(np.full(values.size, float(bounds[1])), values)
    return ParamVector(values, lo, hi), joint


def load_coeffs(path, bounds: tuple[float, float] = DEFAULT_COEFF_BOUNDS):
    """File variant of coeffs_from_dict."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    return coeffs_from_dict(doc, bounds, origin=str(path))

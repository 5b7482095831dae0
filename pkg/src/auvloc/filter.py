"""Sampling-importance-resampling particle filter over planar poses.

Particles are stored column-wise: ``poses`` is an ``(N, 3)`` array of
``(x, y, heading)`` and ``weights`` an ``(N,)`` array.  The proposal is
the odometry motion model, so importance weights reduce to the
measurement likelihood.

A likelihood model is any callable ``model(pose, z, world) -> float``
returning a non-negative factor.  Models may also provide
``log_batch(poses, z, world) -> ndarray`` (log factors for all particles
at once); :func:`weight_update` prefers it when present, which keeps
long products of small kernels away from underflow.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, NamedTuple, Protocol

import numpy as np

from .world import Pose2D, WorldMap, wrap_angles

NORMALIZATION_TOL = 1e-9


class LikelihoodModel(Protocol):
    def __call__(self, pose: Pose2D, z: Any, world: WorldMap) -> float: ...


class NotNormalizedError(ValueError):
    pass


class LikelihoodContractError(ValueError):
    """A likelihood model returned a negative or non-finite factor."""


class Particle(NamedTuple):
    pose: Pose2D
    weight: float


@dataclass(frozen=True, eq=False)
class ParticleSet:
    poses: np.ndarray
    weights: np.ndarray
    normalized: bool = True
    # set by weight_update when every factor was zero and weights were reset
    degenerate: bool = False

    def __post_init__(self):
        poses = np.array(self.poses, dtype=float).reshape(-1, 3)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if len(poses) == 0:
            raise ValueError("a particle set must be non-empty")
        if len(weights) != len(poses):
            raise ValueError("poses and weights differ in length")
        if not np.all(np.isfinite(poses)):
            raise ValueError("particle poses must be finite")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and non-negative")
        if self.normalized and abs(weights.sum() - 1.0) > NORMALIZATION_TOL:
            raise NotNormalizedError(f"weights sum to {weights.sum()!r}, not 1")
        poses[:, 2] = wrap_angles(poses[:, 2])
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.weights)

    @property
    def particles(self) -> list[Particle]:
        return [Particle(Pose2D.from_array(p), float(w)) for p, w in zip(self.poses, self.weights)]

    @classmethod
    def from_particles(cls, particles, normalized: bool = True) -> "ParticleSet":
        poses = [(p.pose.x, p.pose.y, p.pose.heading) for p in particles]
        return cls(np.array(poses), np.array([p.weight for p in particles]), normalized)

    @classmethod
    def at_pose(cls, pose: Pose2D, n: int = 1) -> "ParticleSet":
        """``n`` identical particles at ``pose`` with uniform weights."""
        return cls(np.tile(pose.as_array(), (n, 1)), np.full(n, 1.0 / n))


@dataclass(frozen=True)
class MotionCommand:
    """Odometry increment: rotate, translate, rotate.

    ``noise_stds`` are ``(sigma_trans, sigma_rot1, sigma_rot2)`` applied
    independently to each particle during prediction.
    """

    delta_trans: float
    delta_rot1: float = 0.0
    delta_rot2: float = 0.0
    noise_stds: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        stds = tuple(float(s) for s in self.noise_stds)
        if len(stds) != 3 or not all(s >= 0 for s in stds):
            raise ValueError("noise_stds must be three non-negative numbers")
        object.__setattr__(self, "noise_stds", stds)


def advance_poses(poses: np.ndarray, trans, rot1, rot2) -> np.ndarray:
    """Apply rot1/trans/rot2 increments (scalars or per-pose arrays)."""
    poses = np.asarray(poses, dtype=float)
    direction = poses[:, 2] + rot1
    out = np.empty_like(poses)
    out[:, 0] = poses[:, 0] + trans * np.cos(direction)
    out[:, 1] = poses[:, 1] + trans * np.sin(direction)
    out[:, 2] = wrap_angles(direction + rot2)
    return out


def move_pose(pose: Pose2D, cmd: MotionCommand) -> Pose2D:
    """Noise-free motion; same arithmetic as :func:`predict`."""
    out = advance_poses(pose.as_array()[None, :], cmd.delta_trans, cmd.delta_rot1, cmd.delta_rot2)
    return Pose2D.from_array(out[0])


def init_uniform(
    world: WorldMap, n: int, rng: np.random.Generator, max_rounds: int = 100
) -> ParticleSet:
    """Uniform poses over free space (rejection sampled), uniform headings."""
    if n < 1:
        raise ValueError("particle count must be at least 1")
    xmin, ymin, xmax, ymax = world.bounds
    accepted = []
    count = 0
    batch = max(n, 256)
    for _ in range(max_rounds):
        xy = rng.uniform((xmin, ymin), (xmax, ymax), size=(batch, 2))
        xy = xy[world.free_mask(xy)]
        accepted.append(xy)
        count += len(xy)
        if count >= n:
            break
    else:
        raise ValueError("map has no (or vanishingly little) free space to sample from")
    xy = np.concatenate(accepted)[:n]
    heading = rng.uniform(-math.pi, math.pi, size=n)
    return ParticleSet(np.column_stack([xy, heading]), np.full(n, 1.0 / n))


def predict(pset: ParticleSet, cmd: MotionCommand, rng: np.random.Generator) -> ParticleSet:
    n = len(pset)
    s_trans, s_rot1, s_rot2 = cmd.noise_stds
    noise = rng.normal(0.0, 1.0, size=(3, n))
    poses = advance_poses(
        pset.poses,
        cmd.delta_trans + s_trans * noise[0],
        cmd.delta_rot1 + s_rot1 * noise[1],
        cmd.delta_rot2 + s_rot2 * noise[2],
    )
    return replace(pset, poses=poses)


def _log_factors(pset: ParticleSet, z, model, world) -> np.ndarray:
    log_batch = getattr(model, "log_batch", None)
    if log_batch is not None:
        logf = np.asarray(log_batch(pset.poses, z, world), dtype=float)
        if logf.shape != (len(pset),) or np.any(np.isnan(logf)) or np.any(logf == np.inf):
            raise LikelihoodContractError("log likelihoods must be finite or -inf, one per particle")
        return logf
    factors = np.array([model(Pose2D.from_array(p), z, world) for p in pset.poses], dtype=float)
    if not np.all(np.isfinite(factors)) or np.any(factors < 0):
        raise LikelihoodContractError("likelihood factors must be finite and non-negative")
    with np.errstate(divide="ignore"):
        return np.log(factors)


def weight_update(pset: ParticleSet, z, model, world: WorldMap) -> ParticleSet:
    """Multiply each weight by its likelihood factor and renormalise.

    Accumulates in the log domain.  If every product is zero the weights
    are reset to uniform and ``degenerate`` is set on the result.
    """
    logf = _log_factors(pset, z, model, world)
    with np.errstate(divide="ignore"):
        logw = np.log(pset.weights) + logf
    peak = logw.max()
    n = len(pset)
    if peak == -np.inf:
        return replace(pset, weights=np.full(n, 1.0 / n), normalized=True, degenerate=True)
    w = np.exp(logw - peak)
    return replace(pset, weights=w / w.sum(), normalized=True, degenerate=False)


def _require_normalized(pset: ParticleSet) -> None:
    if not pset.normalized:
        raise NotNormalizedError("operation requires a normalized particle set")


def effective_sample_size(pset: ParticleSet) -> float:
    _require_normalized(pset)
    return float(1.0 / np.sum(pset.weights**2))


def systematic_indices(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Low-variance resampling: one uniform offset, ``N`` evenly spaced pointers."""
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    # side="right" never selects a zero-weight particle
    return np.minimum(np.searchsorted(cumulative, positions, side="right"), n - 1)


def resample_systematic(pset: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    _require_normalized(pset)
    idx = systematic_indices(pset.weights, rng)
    n = len(pset)
    return replace(pset, poses=pset.poses[idx], weights=np.full(n, 1.0 / n))


class Estimate(NamedTuple):
    mean: Pose2D
    position_variance: float
    heading_dispersion: float


def estimate(pset: ParticleSet) -> Estimate:
    """Weighted mean pose, scalar position spread (m^2) and heading dispersion.

    Heading uses the circular mean; dispersion is ``1 - R`` where ``R`` is
    the mean resultant length.
    """
    _require_normalized(pset)
    w = pset.weights / pset.weights.sum()
    x, y, th = pset.poses.T
    mx, my = float(w @ x), float(w @ y)
    variance = float(w @ ((x - mx) ** 2 + (y - my) ** 2))
    s, c = float(w @ np.sin(th)), float(w @ np.cos(th))
    resultant = min(math.hypot(s, c), 1.0)
    heading = math.atan2(s, c) if resultant > 0 else 0.0
    return Estimate(Pose2D(mx, my, heading), variance, 1.0 - resultant)


@dataclass(frozen=True)
class StepDiagnostics:
    ess: float
    degenerate: bool
    resampled: bool
    estimate: Estimate
    weight_update_ns: int = field(compare=False)


def step(
    pset: ParticleSet,
    cmd: MotionCommand,
    z,
    model,
    world: WorldMap,
    rng: np.random.Generator,
    resample_threshold: float = 0.5,
) -> tuple[ParticleSet, StepDiagnostics]:
    """One SIR cycle: predict, weight, and resample when ESS < threshold * N.

    The returned estimate is taken after weighting, before resampling.
    Only the weighting phase is timed.
    """
    pset = predict(pset, cmd, rng)
    t0 = time.perf_counter_ns()
    pset = weight_update(pset, z, model, world)
    elapsed = time.perf_counter_ns() - t0
    ess = effective_sample_size(pset)
    est = estimate(pset)
    resampled = ess < resample_threshold * len(pset)
    if resampled:
        pset = resample_systematic(pset, rng)
    return pset, StepDiagnostics(ess, pset.degenerate, resampled, est, elapsed)

"""Measurement models: range-array comparison and semantic object matching.

Both use unit-peak Gaussian kernels, so a perfect match scores exactly 1.
The semantic score multiplies a range kernel and a bearing kernel for
every matched object pair, then a fixed penalty for each object seen in
only one of the two observations (``d = q + l - 2m``).

The scalar functions are the reference definitions.  The model classes
add ``log_batch`` evaluators that score a whole particle array with
numpy and agree with the scalar path to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .sensing import (
    RangeScan,
    SemanticObservation,
    SensorConfig,
    expected_range_scan,
    expected_ranges_batch,
    expected_semantic_obs,
)
from .world import Pose2D, WorldMap, object_polar_batch, occluded_batch, wrap_angle, wrap_angles


class ScanMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SemanticLikelihoodParams:
    sigma_rho: float = 0.5
    sigma_theta: float = 0.05
    unmatched_penalty: float = 0.5
    gate_rho: float | None = None  # default 3 * sigma_rho
    gate_theta: float | None = None  # default 3 * sigma_theta

    def __post_init__(self):
        if self.gate_rho is None:
            object.__setattr__(self, "gate_rho", 3.0 * self.sigma_rho)
        if self.gate_theta is None:
            object.__setattr__(self, "gate_theta", 3.0 * self.sigma_theta)
        if not (self.sigma_rho > 0 and self.sigma_theta > 0):
            raise ValueError("sigma_rho and sigma_theta must be positive")
        if not (self.gate_rho > 0 and self.gate_theta > 0):
            raise ValueError("gates must be positive")
        if not 0 < self.unmatched_penalty <= 1:
            raise ValueError("unmatched_penalty must lie in (0, 1]")


class MatchResult(NamedTuple):
    pairs: list[tuple[int, int]]  # (index in z_r, index in z_k)
    m: int
    d: int


def _pair_distance(a, b, params: SemanticLikelihoodParams) -> tuple[float, float, float]:
    d_rho = a.rho - b.rho
    d_theta = wrap_angle(a.theta - b.theta)
    dist = math.sqrt((d_rho / params.sigma_rho) ** 2 + (d_theta / params.sigma_theta) ** 2)
    return dist, d_rho, d_theta


def match_objects(
    z_r: SemanticObservation, z_k: SemanticObservation, params: SemanticLikelihoodParams
) -> MatchResult:
    """Greedy one-to-one association of same-class detections.

    Candidate pairs inside both gates are taken in order of normalised
    distance; ties go to the lower ``z_r`` index, then the lower ``z_k``
    index.
    """
    candidates = []
    for i, a in enumerate(z_r):
        for j, b in enumerate(z_k):
            if a.class_label != b.class_label:
                continue
            dist, d_rho, d_theta = _pair_distance(a, b, params)
            if abs(d_rho) <= params.gate_rho and abs(d_theta) <= params.gate_theta:
                candidates.append((dist, i, j))
    candidates.sort()
    used_r, used_k, pairs = set(), set(), []
    for _, i, j in candidates:
        if i in used_r or j in used_k:
            continue
        used_r.add(i)
        used_k.add(j)
        pairs.append((i, j))
    m = len(pairs)
    return MatchResult(pairs, m, len(z_k) + len(z_r) - 2 * m)


def semantic_likelihood(
    z_r: SemanticObservation, z_k: SemanticObservation, params: SemanticLikelihoodParams
) -> float:
    match = match_objects(z_r, z_k, params)
    weight = 1.0
    for i, j in match.pairs:
        _, d_rho, d_theta = _pair_distance(z_r[i], z_k[j], params)
        weight *= math.exp(-(d_rho**2) / (2.0 * params.sigma_rho**2))
        weight *= math.exp(-(d_theta**2) / (2.0 * params.sigma_theta**2))
    return weight * params.unmatched_penalty**match.d


def _beam_differences(expected: np.ndarray, observed: np.ndarray, max_range: float) -> np.ndarray:
    exp_miss, obs_miss = np.isinf(expected), np.isinf(observed)
    diff = np.where(exp_miss, max_range, expected) - np.where(obs_miss, max_range, observed)
    return np.where(exp_miss & obs_miss, 0.0, diff)


def geometric_likelihood(expected: RangeScan, observed: RangeScan, sigma_range: float) -> float:
    """Product of per-beam range kernels.

    A beam that misses in only one scan is scored as if it returned at
    ``max_range``; a beam that misses in both contributes 1.
    """
    if len(expected) != len(observed):
        raise ScanMismatchError(f"beam counts differ: {len(expected)} vs {len(observed)}")
    if not np.array_equal(expected.bearings, observed.bearings):
        raise ScanMismatchError("scans use different bearings")
    if not sigma_range > 0:
        raise ValueError("sigma_range must be positive")
    diff = _beam_differences(expected.ranges, observed.ranges, observed.max_range)
    weight = 1.0
    for delta in diff:
        weight *= math.exp(-(delta**2) / (2.0 * sigma_range**2))
    return weight


# ---------------------------------------------------------------------------
# particle models
# ---------------------------------------------------------------------------


class SemanticModel:
    """Scores a pose by matching the observed detections against the
    detections the map predicts from that pose.

    Poses outside free space score 0.
    """

    def __init__(self, world: WorldMap, cfg: SensorConfig, params: SemanticLikelihoodParams):
        self.world = world
        self.cfg = cfg
        self.params = params
        labels = sorted(set(world.class_labels))
        self._label_ids = {label: i for i, label in enumerate(labels)}
        self._object_labels = np.array([self._label_ids[c] for c in world.class_labels], dtype=int)

    def __call__(self, pose: Pose2D, z: SemanticObservation, world: WorldMap | None = None) -> float:
        world = world or self.world
        if not world.in_free_space(pose.x, pose.y):
            return 0.0
        return semantic_likelihood(z, expected_semantic_obs(world, pose, self.cfg), self.params)

    def log_batch(self, poses: np.ndarray, z: SemanticObservation, world: WorldMap | None = None) -> np.ndarray:
        world = world or self.world
        if world is not self.world:
            return SemanticModel(world, self.cfg, self.params).log_batch(poses, z)
        poses = np.asarray(poses, dtype=float)
        n, m, q = len(poses), len(world.objects), len(z)
        p = self.params
        free = world.free_mask(poses[:, :2])
        if m == 0:
            return np.where(free, q * math.log(p.unmatched_penalty), -np.inf)

        rho, theta = object_polar_batch(world, poses)
        visible = (rho <= self.cfg.max_range) & (np.abs(theta) <= self.cfg.fov / 2.0)
        if self.cfg.occlusion:
            visible &= ~occluded_batch(world, poses, rho)
        # expected list per particle in (theta, rho) order, invisible objects last
        order = np.lexsort((rho, np.where(visible, theta, np.inf)), axis=-1)
        rho = np.take_along_axis(rho, order, axis=-1)
        theta = np.take_along_axis(theta, order, axis=-1)
        visible = np.take_along_axis(visible, order, axis=-1)
        labels = self._object_labels[order]
        n_expected = visible.sum(axis=1)

        log_w = np.zeros(n)
        matched = np.zeros(n, dtype=int)
        if q:
            obs_rho = np.array([det.rho for det in z])
            obs_theta = np.array([det.theta for det in z])
            obs_label = np.array([self._label_ids.get(det.class_label, -1) for det in z])
            d_rho = obs_rho[None, :, None] - rho[:, None, :]  # (N, q, M)
            d_theta = wrap_angles(obs_theta[None, :, None] - theta[:, None, :])
            ok = (
                visible[:, None, :]
                & (obs_label[None, :, None] == labels[:, None, :])
                & (np.abs(d_rho) <= p.gate_rho)
                & (np.abs(d_theta) <= p.gate_theta)
            )
            cost = np.sqrt((d_rho / p.sigma_rho) ** 2 + (d_theta / p.sigma_theta) ** 2)
            cost = np.where(ok, cost, np.inf)
            kernel = (d_rho**2) / (2.0 * p.sigma_rho**2) + (d_theta**2) / (2.0 * p.sigma_theta**2)
            rows = np.arange(n)
            flat = cost.reshape(n, q * m)
            for _ in range(min(q, m)):
                # argmin picks the first minimum: lowest z_r index, then lowest z_k index
                best = np.argmin(flat, axis=1)
                hit = np.isfinite(flat[rows, best])
                if not hit.any():
                    break
                r, k = np.divmod(best[hit], m)
                idx = rows[hit]
                log_w[idx] -= kernel[idx, r, k]
                matched[idx] += 1
                cost[idx, r, :] = np.inf
                cost[idx, :, k] = np.inf
        d = q + n_expected - 2 * matched
        log_w += d * math.log(p.unmatched_penalty)
        return np.where(free, log_w, -np.inf)


class GeometricModel:
    """Scores a pose by comparing the observed range scan with the scan
    ray-cast from that pose.  Poses outside free space score 0."""

    def __init__(self, world: WorldMap, cfg: SensorConfig, sigma_range: float):
        if not sigma_range > 0:
            raise ValueError("sigma_range must be positive")
        self.world = world
        self.cfg = cfg
        self.sigma_range = sigma_range

    def __call__(self, pose: Pose2D, z: RangeScan, world: WorldMap | None = None) -> float:
        world = world or self.world
        if not world.in_free_space(pose.x, pose.y):
            return 0.0
        return geometric_likelihood(expected_range_scan(world, pose, self.cfg), z, self.sigma_range)

    def log_batch(self, poses: np.ndarray, z: RangeScan, world: WorldMap | None = None) -> np.ndarray:
        world = world or self.world
        if len(z) != self.cfg.beam_count or not np.array_equal(z.bearings, self.cfg.bearings):
            raise ScanMismatchError("observed scan does not match the sensor configuration")
        poses = np.asarray(poses, dtype=float)
        free = world.free_mask(poses[:, :2])
        expected = expected_ranges_batch(world, poses, self.cfg)
        diff = _beam_differences(expected, z.ranges[None, :], z.max_range)
        log_w = -np.sum(diff**2, axis=1) / (2.0 * self.sigma_range**2)
        return np.where(free, log_w, -np.inf)


def make_semantic_model(world: WorldMap, cfg: SensorConfig, params: SemanticLikelihoodParams) -> SemanticModel:
    return SemanticModel(world, cfg, params)


def make_geometric_model(world: WorldMap, cfg: SensorConfig, sigma_range: float) -> GeometricModel:
    return GeometricModel(world, cfg, sigma_range)


__all__ = [
    "GeometricModel",
    "MatchResult",
    "ScanMismatchError",
    "SemanticLikelihoodParams",
    "SemanticModel",
    "geometric_likelihood",
    "make_geometric_model",
    "make_semantic_model",
    "match_objects",
    "semantic_likelihood",
]

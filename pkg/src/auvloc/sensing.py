"""Simulated range scans and semantic object detections.

``simulate_*`` draw noisy observations from a ground-truth pose;
``expected_*`` give the noiseless observation a particle hypothesis
predicts.  With all noise off the two coincide bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .world import (
    MISS,
    TWO_PI,
    Pose2D,
    WorldMap,
    _check_origin,
    cast_rays,
    visible_objects,
    wrap_angle,
)

# lower clamp for noisy ranges; keeps every return strictly positive
MIN_RANGE = 1e-6


@dataclass(frozen=True)
class SensorConfig:
    """Sensor parameters shared by both observation models.

    The defaults describe the semantic detector; use
    :meth:`geometric_default` for the scanning-sonar analogue.
    ``clutter_rate`` is the Poisson mean of false detections per semantic
    observation.
    """

    fov: float = math.pi
    max_range: float = 20.0
    beam_count: int = 72
    sigma_range: float = 0.2
    sigma_rho: float = 0.2
    sigma_theta: float = 0.02
    detect_prob: float = 0.9
    occlusion: bool = False
    clutter_rate: float = 0.0

    def __post_init__(self):
        if not 0 < self.fov <= TWO_PI:
            raise ValueError("fov must lie in (0, 2*pi]")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if int(self.beam_count) != self.beam_count or self.beam_count < 1:
            raise ValueError("beam_count must be an integer >= 1")
        for name in ("sigma_range", "sigma_rho", "sigma_theta", "clutter_rate"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 <= self.detect_prob <= 1:
            raise ValueError("detect_prob must lie in [0, 1]")

    @classmethod
    def semantic_default(cls) -> "SensorConfig":
        return cls()

    @classmethod
    def geometric_default(cls) -> "SensorConfig":
        return cls(fov=TWO_PI)

    def noiseless(self) -> "SensorConfig":
        return replace(
            self, sigma_range=0.0, sigma_rho=0.0, sigma_theta=0.0, detect_prob=1.0, clutter_rate=0.0
        )

    @property
    def bearings(self) -> np.ndarray:
        """Beam bearings relative to heading, evenly spanning the field of view."""
        n = int(self.beam_count)
        if n == 1:
            return np.zeros(1)
        if self.fov >= TWO_PI:
            # full circle: -pi and +pi are the same beam
            return -math.pi + TWO_PI * np.arange(n) / n
        return np.linspace(-self.fov / 2.0, self.fov / 2.0, n)


@dataclass(frozen=True, eq=False)
class RangeScan:
    """Array of beam ranges; :data:`~auvloc.world.MISS` marks beams with no return."""

    bearings: np.ndarray
    ranges: np.ndarray
    max_range: float

    def __post_init__(self):
        bearings = np.asarray(self.bearings, dtype=float)
        ranges = np.asarray(self.ranges, dtype=float)
        if bearings.ndim != 1 or bearings.shape != ranges.shape:
            raise ValueError("bearings and ranges must be 1-D arrays of equal length")
        if np.any(np.diff(bearings) <= 0):
            raise ValueError("bearings must be strictly increasing")
        finite = np.isfinite(ranges)
        if np.any(np.isnan(ranges)) or np.any(ranges[~finite] != MISS):
            raise ValueError("ranges must be finite or MISS")
        if np.any(ranges[finite] <= 0) or np.any(ranges[finite] > self.max_range):
            raise ValueError("finite ranges must lie in (0, max_range]")
        object.__setattr__(self, "bearings", bearings)
        object.__setattr__(self, "ranges", ranges)

    def __len__(self):
        return len(self.ranges)

    @property
    def miss(self) -> np.ndarray:
        return np.isinf(self.ranges)


class Detection(NamedTuple):
    class_label: str
    rho: float
    theta: float


@dataclass(frozen=True)
class SemanticObservation:
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        dets = tuple(Detection(*d) for d in self.detections)
        for det in dets:
            if not det.rho > 0 or not math.isfinite(det.rho):
                raise ValueError(f"detection range must be positive and finite: {det}")
            if not -math.pi <= det.theta < math.pi:
                raise ValueError(f"detection bearing outside [-pi, pi): {det}")
        object.__setattr__(self, "detections", dets)

    def __len__(self):
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    def __getitem__(self, i):
        return self.detections[i]

    @classmethod
    def of(cls, items: Sequence[tuple]) -> "SemanticObservation":
        """Build from ``(class_label, rho, theta)`` triples."""
        return cls(tuple(Detection(*item) for item in items))


def _scan_ranges(world: WorldMap, pose: Pose2D, cfg: SensorConfig) -> np.ndarray:
    _check_origin(world, pose.x, pose.y)
    return cast_rays(world, pose.x, pose.y, pose.heading + cfg.bearings, cfg.max_range)


def simulate_range_scan(
    world: WorldMap, true_pose: Pose2D, cfg: SensorConfig, rng: np.random.Generator
) -> RangeScan:
    ranges = _scan_ranges(world, true_pose, cfg)
    # always draw a full vector so stream consumption is independent of the scene
    noise = rng.normal(0.0, 1.0, size=ranges.shape) * cfg.sigma_range
    hit = np.isfinite(ranges)
    ranges[hit] = np.clip(ranges[hit] + noise[hit], MIN_RANGE, cfg.max_range)
    return RangeScan(cfg.bearings, ranges, cfg.max_range)


def expected_range_scan(world: WorldMap, hypothesis: Pose2D, cfg: SensorConfig) -> RangeScan:
    return RangeScan(cfg.bearings, _scan_ranges(world, hypothesis, cfg), cfg.max_range)


def expected_ranges_batch(world: WorldMap, poses: np.ndarray, cfg: SensorConfig) -> np.ndarray:
    """``(N, B)`` noiseless ranges for every pose; poses are not validated."""
    poses = np.asarray(poses, dtype=float)
    angles = poses[:, 2:3] + cfg.bearings
    return cast_rays(world, poses[:, 0:1], poses[:, 1:2], angles, cfg.max_range)


def _sorted_obs(dets) -> SemanticObservation:
    return SemanticObservation(tuple(sorted(dets, key=lambda d: (d.theta, d.rho))))


def simulate_semantic_obs(
    world: WorldMap, true_pose: Pose2D, cfg: SensorConfig, rng: np.random.Generator
) -> SemanticObservation:
    """Noisy detections: each visible object kept with ``detect_prob``,
    then perturbed in range and bearing.  Object ids are dropped."""
    visible = visible_objects(world, true_pose, cfg.fov, cfg.max_range, cfg.occlusion)
    n = len(visible)
    keep = rng.random(n) < cfg.detect_prob
    rho_noise = rng.normal(0.0, 1.0, n) * cfg.sigma_rho
    theta_noise = rng.normal(0.0, 1.0, n) * cfg.sigma_theta
    dets = []
    for i, obj in enumerate(visible):
        if not keep[i]:
            continue
        rho = max(obj.rho + float(rho_noise[i]), MIN_RANGE)
        dets.append(Detection(obj.class_label, rho, wrap_angle(obj.theta + float(theta_noise[i]))))

    if cfg.clutter_rate > 0 and world.objects:
        labels = sorted(set(world.class_labels))
        for _ in range(rng.poisson(cfg.clutter_rate)):
            label = labels[rng.integers(len(labels))]
            rho = float(rng.uniform(MIN_RANGE, cfg.max_range))
            theta = wrap_angle(float(rng.uniform(-cfg.fov / 2.0, cfg.fov / 2.0)))
            dets.append(Detection(label, rho, theta))
    return _sorted_obs(dets)


def expected_semantic_obs(
    world: WorldMap, hypothesis: Pose2D, cfg: SensorConfig
) -> SemanticObservation:
    visible = visible_objects(world, hypothesis, cfg.fov, cfg.max_range, cfg.occlusion)
    return SemanticObservation(tuple(Detection(v.class_label, v.rho, v.theta) for v in visible))

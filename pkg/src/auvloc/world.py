"""Block-world map representation and exact geometric queries.

Objects are axis-aligned rectangles inside a rectangular enclosure.  Ray
casting is closed-form (slab intersection), never marched.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

#: Sentinel range for a beam with no return inside ``max_range``.
MISS = math.inf

TWO_PI = 2.0 * math.pi


class MapError(ValueError):
    """Invalid map content (schema, bounds or identity violation)."""


class DegeneratePoseError(ValueError):
    """Sensor origin lies inside an obstacle or outside the map."""


def wrap_angle(angle: float) -> float:
    """Wrap an angle to ``[-pi, pi)``; values already in range are returned unchanged."""
    if -math.pi <= angle < math.pi:
        return angle
    wrapped = (angle + math.pi) % TWO_PI - math.pi
    # float modulo can round up to exactly 2*pi
    if wrapped >= math.pi:
        wrapped -= TWO_PI
    return wrapped


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    angles = np.asarray(angles, dtype=float)
    wrapped = np.mod(angles + math.pi, TWO_PI) - math.pi
    wrapped = np.where(wrapped >= math.pi, wrapped - TWO_PI, wrapped)
    return np.where((angles >= -math.pi) & (angles < math.pi), angles, wrapped)


@dataclass(frozen=True)
class Pose2D:
    """Planar pose; ``heading`` is normalised to ``[-pi, pi)`` on construction."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "heading"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"Pose2D.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading])

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "Pose2D":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class MapObject:
    id: int
    class_label: str
    center: tuple[float, float]
    half_extents: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(
            self, "half_extents", (float(self.half_extents[0]), float(self.half_extents[1]))
        )
        if not (self.half_extents[0] > 0 and self.half_extents[1] > 0):
            raise MapError(f"object {self.id}: half_extents must be strictly positive")
        if not all(math.isfinite(v) for v in (*self.center, *self.half_extents)):
            raise MapError(f"object {self.id}: non-finite geometry")

    @property
    def box(self) -> tuple[float, float, float, float]:
        """``(xmin, ymin, xmax, ymax)``."""
        (cx, cy), (hx, hy) = self.center, self.half_extents
        return (cx - hx, cy - hy, cx + hx, cy + hy)

    def contains(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.box
        return xmin <= x <= xmax and ymin <= y <= ymax


@dataclass(frozen=True)
class WorldMap:
    """Immutable map: enclosure ``bounds`` plus labelled rectangular objects.

    ``bounds`` is ``(xmin, ymin, xmax, ymax)``.
    """

    bounds: tuple[float, float, float, float]
    objects: tuple[MapObject, ...] = field(default_factory=tuple)

    def __post_init__(self):
        bounds = tuple(float(v) for v in self.bounds)
        if len(bounds) != 4 or not all(math.isfinite(v) for v in bounds):
            raise MapError("bounds must be four finite numbers")
        xmin, ymin, xmax, ymax = bounds
        if not (xmax > xmin and ymax > ymin):
            raise MapError("bounds must have positive width and height")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "objects", tuple(self.objects))
        seen = set()
        for obj in self.objects:
            if obj.id in seen:
                raise MapError(f"duplicate object id {obj.id}")
            seen.add(obj.id)
            oxmin, oymin, oxmax, oymax = obj.box
            if oxmin < xmin or oymin < ymin or oxmax > xmax or oymax > ymax:
                raise MapError(f"object {obj.id} lies outside the map bounds")

    @property
    def width(self) -> float:
        return self.bounds[2] - self.bounds[0]

    @property
    def height(self) -> float:
        return self.bounds[3] - self.bounds[1]

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @cached_property
    def boxes(self) -> np.ndarray:
        """``(M, 4)`` array of object rectangles ``(xmin, ymin, xmax, ymax)``."""
        if not self.objects:
            return np.empty((0, 4))
        return np.array([obj.box for obj in self.objects], dtype=float)

    @cached_property
    def centers(self) -> np.ndarray:
        if not self.objects:
            return np.empty((0, 2))
        return np.array([obj.center for obj in self.objects], dtype=float)

    @cached_property
    def class_labels(self) -> tuple[str, ...]:
        return tuple(obj.class_label for obj in self.objects)

    def in_free_space(self, x: float, y: float) -> bool:
        """Strictly inside the bounds and outside every (closed) object."""
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < x < xmax and ymin < y < ymax):
            return False
        return not any(obj.contains(x, y) for obj in self.objects)

    def free_mask(self, xy: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`in_free_space` over an ``(..., 2)`` array."""
        xy = np.asarray(xy, dtype=float)
        x, y = xy[..., 0], xy[..., 1]
        xmin, ymin, xmax, ymax = self.bounds
        free = (x > xmin) & (x < xmax) & (y > ymin) & (y < ymax)
        b = self.boxes
        if len(b):
            xs, ys = x[..., None], y[..., None]
            inside = (xs >= b[:, 0]) & (xs <= b[:, 2]) & (ys >= b[:, 1]) & (ys <= b[:, 3])
            free &= ~inside.any(axis=-1)
        return free

    def to_dict(self) -> dict:
        xmin, ymin, xmax, ymax = self.bounds
        return {
            "bounds": {"min": [xmin, ymin], "max": [xmax, ymax]},
            "objects": [
                {
                    "id": obj.id,
                    "class": obj.class_label,
                    "center": list(obj.center),
                    "half_extents": list(obj.half_extents),
                }
                for obj in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorldMap":
        return _parse_map(data)


# ---------------------------------------------------------------------------
# map file I/O
# ---------------------------------------------------------------------------

_MAP_KEYS = {"bounds", "objects"}
_BOUNDS_KEYS = {"min", "max"}
# JSON key -> field name used in error messages
_OBJECT_KEYS = {"id": "id", "class": "class_label", "center": "center", "half_extents": "half_extents"}


def _check_keys(data, allowed: set[str], where: str) -> None:
    if not isinstance(data, dict):
        raise MapError(f"{where}: expected an object")
    unknown = set(data) - allowed
    if unknown:
        raise MapError(f"{where}: unknown key(s) {sorted(unknown)}")


def _pair(value, where: str) -> tuple[float, float]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise MapError(f"{where}: expected a pair of numbers")
    return float(value[0]), float(value[1])


def _parse_map(data) -> WorldMap:
    _check_keys(data, _MAP_KEYS, "map")
    for key in _MAP_KEYS:
        if key not in data:
            raise MapError(f"map: missing field '{key}'")
    bounds = data["bounds"]
    _check_keys(bounds, _BOUNDS_KEYS, "bounds")
    for key in _BOUNDS_KEYS:
        if key not in bounds:
            raise MapError(f"bounds: missing field '{key}'")
    lo = _pair(bounds["min"], "bounds.min")
    hi = _pair(bounds["max"], "bounds.max")

    if not isinstance(data["objects"], list):
        raise MapError("objects: expected a list")
    objects = []
    for i, raw in enumerate(data["objects"]):
        where = f"objects[{i}]"
        _check_keys(raw, set(_OBJECT_KEYS), where)
        for key, name in _OBJECT_KEYS.items():
            if key not in raw:
                raise MapError(f"{where}: missing field '{key}' ({name})")
        if not isinstance(raw["id"], int) or isinstance(raw["id"], bool):
            raise MapError(f"{where}.id: expected an integer")
        if not isinstance(raw["class"], str) or not raw["class"]:
            raise MapError(f"{where}.class (class_label): expected a non-empty string")
        objects.append(
            MapObject(
                id=raw["id"],
                class_label=raw["class"],
                center=_pair(raw["center"], f"{where}.center"),
                half_extents=_pair(raw["half_extents"], f"{where}.half_extents"),
            )
        )
    return WorldMap(bounds=(lo[0], lo[1], hi[0], hi[1]), objects=tuple(objects))


def load_map(path) -> WorldMap:
    """Read and validate a JSON map file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MapError(f"cannot read map file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapError(f"{path}: invalid JSON: {exc}") from exc
    return _parse_map(data)


def save_map(world: WorldMap, path) -> None:
    Path(path).write_text(json.dumps(world.to_dict(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# ray casting
# ---------------------------------------------------------------------------


def _slab(o, d, lo, hi):
    """Parametric interval of a ray inside one slab ``lo <= o + t*d <= hi``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    parallel = d == 0
    inside = (o >= lo) & (o <= hi)
    t_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    t_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    return t_lo, t_hi


def _slab_entries(ox, oy, dx, dy, boxes: np.ndarray) -> np.ndarray:
    """Entry distance of rays into each box, ``inf`` where the ray misses.

    Ray arrays broadcast against a trailing box axis: the result has shape
    ``broadcast(ox, oy, dx, dy).shape + (M,)``.
    """
    ox, oy, dx, dy = (np.asarray(a, dtype=float)[..., None] for a in (ox, oy, dx, dy))
    xlo, xhi = _slab(ox, dx, boxes[:, 0], boxes[:, 2])
    ylo, yhi = _slab(oy, dy, boxes[:, 1], boxes[:, 3])
    t_near = np.maximum(xlo, ylo)
    t_far = np.minimum(xhi, yhi)
    hit = (t_near <= t_far) & (t_near > 0)
    return np.where(hit, t_near, np.inf)


def _bounds_exit(ox, oy, dx, dy, bounds) -> np.ndarray:
    xmin, ymin, xmax, ymax = bounds
    _, xhi = _slab(np.asarray(ox, float), np.asarray(dx, float), xmin, xmax)
    _, yhi = _slab(np.asarray(oy, float), np.asarray(dy, float), ymin, ymax)
    return np.minimum(xhi, yhi)


def cast_rays(world: WorldMap, ox, oy, angles, max_range: float) -> np.ndarray:
    """Vectorised ray cast from free-space origins along absolute ``angles``.

    Inputs broadcast together.  Returns ranges with :data:`MISS` where the
    first hit lies beyond ``max_range``.  Origins are not validated here.
    """
    angles = np.asarray(angles, dtype=float)
    dx, dy = np.cos(angles), np.sin(angles)
    ranges = _bounds_exit(ox, oy, dx, dy, world.bounds)
    if world.objects:
        ranges = np.minimum(ranges, _slab_entries(ox, oy, dx, dy, world.boxes).min(axis=-1))
    return np.where(ranges > max_range, MISS, ranges)


def _check_origin(world: WorldMap, x: float, y: float) -> None:
    for obj in world.objects:
        if obj.contains(x, y):
            raise DegeneratePoseError(f"origin ({x}, {y}) lies inside object {obj.id}")
    xmin, ymin, xmax, ymax = world.bounds
    if not (xmin < x < xmax and ymin < y < ymax):
        raise DegeneratePoseError(f"origin ({x}, {y}) is not inside the map bounds")


def ray_cast(world: WorldMap, origin: Pose2D, bearing: float, max_range: float) -> float:
    """Distance to the first object edge or wall along an absolute bearing.

    ``origin.heading`` is ignored; ``bearing`` is absolute.  Returns
    :data:`MISS` if the first hit is farther than ``max_range``.
    """
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    _check_origin(world, origin.x, origin.y)
    return float(cast_rays(world, origin.x, origin.y, bearing, max_range))


# ---------------------------------------------------------------------------
# object visibility
# ---------------------------------------------------------------------------


class VisibleObject(NamedTuple):
    object_id: int
    class_label: str
    rho: float
    theta: float


def visible_objects(
    world: WorldMap, pose: Pose2D, fov: float, max_range: float, occlusion: bool = False
) -> list[VisibleObject]:
    """Objects whose centre is within range and field of view of ``pose``.

    ``rho`` is the distance to the object centre and ``theta`` its bearing
    relative to the heading.  With ``occlusion`` on, an object is dropped
    when the ray toward its centre enters another object first (centre-ray
    approximation, silhouettes are not considered).  Sorted by ``theta``
    then ``rho``.
    """
    if not 0 < fov <= TWO_PI:
        raise ValueError("fov must lie in (0, 2*pi]")
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    if occlusion:
        _check_origin(world, pose.x, pose.y)

    half_fov = fov / 2.0
    found = []
    for index, obj in enumerate(world.objects):
        dx = obj.center[0] - pose.x
        dy = obj.center[1] - pose.y
        rho = math.hypot(dx, dy)
        if rho > max_range:
            continue
        bearing = math.atan2(dy, dx)
        theta = wrap_angle(bearing - pose.heading)
        if abs(theta) > half_fov:
            continue
        if occlusion and len(world.objects) > 1:
            entries = _slab_entries(pose.x, pose.y, math.cos(bearing), math.sin(bearing), world.boxes)
            entries[index] = np.inf
            if entries.min() < rho:
                continue
        found.append(VisibleObject(obj.id, obj.class_label, rho, theta))
    found.sort(key=lambda v: (v.theta, v.rho))
    return found


def object_polar_batch(world: WorldMap, poses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Range and relative bearing from each pose to each object centre.

    Returns two ``(N, M)`` arrays.
    """
    poses = np.asarray(poses, dtype=float)
    dx = world.centers[:, 0] - poses[:, 0:1]
    dy = world.centers[:, 1] - poses[:, 1:2]
    rho = np.hypot(dx, dy)
    theta = wrap_angles(np.arctan2(dy, dx) - poses[:, 2:3])
    return rho, theta


def occluded_batch(world: WorldMap, poses: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``(N, M)`` mask: centre ray from pose ``n`` to object ``j`` enters another object first."""
    poses = np.asarray(poses, dtype=float)
    m = len(world.objects)
    if m < 2:
        return np.zeros(rho.shape, dtype=bool)
    bearing = np.arctan2(world.centers[:, 1] - poses[:, 1:2], world.centers[:, 0] - poses[:, 0:1])
    entries = _slab_entries(
        poses[:, 0:1], poses[:, 1:2], np.cos(bearing), np.sin(bearing), world.boxes
    )  # (N, M target, M obstacle)
    entries[:, np.arange(m), np.arange(m)] = np.inf
    return entries.min(axis=-1) < rho

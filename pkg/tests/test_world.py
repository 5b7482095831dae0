import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auvloc.world import (
    MISS,
    DegeneratePoseError,
    MapError,
    MapObject,
    Pose2D,
    WorldMap,
    load_map,
    ray_cast,
    save_map,
    visible_objects,
    wrap_angle,
    wrap_angles,
)
from oracles import march

BOUNDS = (-25.0, -25.0, 25.0, 25.0)


def block(i, cx, cy, hx=2.5, hy=2.5, label="block"):
    return MapObject(i, label, (cx, cy), (hx, hy))


@pytest.fixture
def wall_world():
    # spans x in [10, 15], y in [-2.5, 2.5]
    return WorldMap(BOUNDS, (block(0, 12.5, 0.0),))


def write_json(path, data):
    path.write_text(json.dumps(data))
    return path


MAP_DOC = {
    "bounds": {"min": [-25, -25], "max": [25, 25]},
    "objects": [
        {"id": 1, "class": "block", "center": [5, 5], "half_extents": [2.5, 2.5]},
        {"id": 2, "class": "pylon", "center": [-10, 3], "half_extents": [0.5, 0.5]},
    ],
}


class TestWrap:
    @pytest.mark.parametrize(
        "angle, expected",
        [(0.0, 0.0), (math.pi, -math.pi), (-math.pi, -math.pi), (3 * math.pi / 2, -math.pi / 2), (-1e-20, -1e-20)],
    )
    def test_values(self, angle, expected):
        assert wrap_angle(angle) == pytest.approx(expected)

    @given(st.floats(-100, 100))
    def test_range_and_equivalence(self, a):
        w = wrap_angle(a)
        assert -math.pi <= w < math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)

    def test_tiny_negative_does_not_round_to_pi(self):
        assert wrap_angle(-math.pi - 1e-17) < math.pi
        assert np.all(wrap_angles(np.array([-math.pi - 1e-17, math.pi])) < math.pi)

    def test_vectorised_matches_scalar(self):
        a = np.linspace(-20, 20, 1001)
        assert np.array_equal(wrap_angles(a), [wrap_angle(v) for v in a])


class TestTypes:
    def test_pose_normalises_heading(self):
        assert Pose2D(0, 0, 2 * math.pi + 0.5).heading == pytest.approx(0.5)

    def test_pose_rejects_nan(self):
        with pytest.raises(ValueError):
            Pose2D(float("nan"), 0.0)

    def test_nonpositive_extent(self):
        with pytest.raises(MapError):
            block(0, 0, 0, hx=0.0)

    def test_degenerate_bounds(self):
        with pytest.raises(MapError):
            WorldMap((0, 0, 0, 10))

    def test_duplicate_ids(self):
        with pytest.raises(MapError, match="duplicate"):
            WorldMap(BOUNDS, (block(1, 0, 0), block(1, 10, 10)))


class TestLoadMap:
    def test_round_trip(self, tmp_path):
        world = load_map(write_json(tmp_path / "m.json", MAP_DOC))
        assert len(world.objects) == 2
        assert world.objects[1].class_label == "pylon"
        save_map(world, tmp_path / "again.json")
        assert load_map(tmp_path / "again.json") == world

    def test_object_outside_bounds(self, tmp_path):
        doc = json.loads(json.dumps(MAP_DOC))
        doc["objects"][0]["center"] = [60, 0]
        with pytest.raises(MapError, match="outside"):
            load_map(write_json(tmp_path / "m.json", doc))

    def test_missing_class_names_field(self, tmp_path):
        doc = json.loads(json.dumps(MAP_DOC))
        del doc["objects"][0]["class"]
        with pytest.raises(MapError, match="class_label"):
            load_map(write_json(tmp_path / "m.json", doc))

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.update(extra=1),
            lambda d: d["bounds"].update(origin=[0, 0]),
            lambda d: d["objects"][0].update(color="red"),
        ],
    )
    def test_unknown_keys_rejected(self, tmp_path, mutate):
        doc = json.loads(json.dumps(MAP_DOC))
        mutate(doc)
        with pytest.raises(MapError, match="unknown"):
            load_map(write_json(tmp_path / "m.json", doc))

    def test_duplicate_id_in_file(self, tmp_path):
        doc = json.loads(json.dumps(MAP_DOC))
        doc["objects"][1]["id"] = 1
        with pytest.raises(MapError, match="duplicate"):
            load_map(write_json(tmp_path / "m.json", doc))

    def test_bad_pair(self, tmp_path):
        doc = json.loads(json.dumps(MAP_DOC))
        doc["objects"][0]["center"] = [1, 2, 3]
        with pytest.raises(MapError, match="center"):
            load_map(write_json(tmp_path / "m.json", doc))

    def test_missing_file(self, tmp_path):
        with pytest.raises(MapError, match="cannot read"):
            load_map(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        (tmp_path / "m.json").write_text("{not json")
        with pytest.raises(MapError, match="invalid JSON"):
            load_map(tmp_path / "m.json")


class TestRayCast:
    def test_empty_map_miss(self):
        assert ray_cast(WorldMap(BOUNDS), Pose2D(0, 0), 0.0, 10.0) == MISS

    def test_empty_map_hits_wall(self):
        assert ray_cast(WorldMap(BOUNDS), Pose2D(0, 0), 0.0, 30.0) == 25.0

    def test_axis_aligned_face(self, wall_world):
        assert ray_cast(wall_world, Pose2D(0, 0), 0.0, 30.0) == 10.0

    def test_heading_is_ignored(self, wall_world):
        assert ray_cast(wall_world, Pose2D(0, 0, 1.0), 0.0, 30.0) == 10.0

    def test_oblique_matches_marching(self, wall_world):
        got = ray_cast(wall_world, Pose2D(0, 0), 0.2, 30.0)
        expected, what = march(wall_world, 0.0, 0.0, 0.2, 30.0)
        assert what == 0
        assert got == pytest.approx(expected, abs=1e-3)
        assert got == pytest.approx(10.0 / math.cos(0.2))

    def test_origin_inside_object(self, wall_world):
        with pytest.raises(DegeneratePoseError):
            ray_cast(wall_world, Pose2D(12.0, 0.0), 0.0, 10.0)

    def test_origin_outside_bounds(self):
        with pytest.raises(DegeneratePoseError):
            ray_cast(WorldMap(BOUNDS), Pose2D(30.0, 0.0), 0.0, 10.0)

    def test_nonpositive_range(self, wall_world):
        with pytest.raises(ValueError):
            ray_cast(wall_world, Pose2D(0, 0), 0.0, 0.0)

    def test_vertical_ray_through_parallel_slab(self):
        world = WorldMap(BOUNDS, (block(0, 0.0, 10.0),))
        assert ray_cast(world, Pose2D(0, 0), math.pi / 2, 30.0) == pytest.approx(7.5)
        # grazing the left edge exactly
        assert ray_cast(world, Pose2D(-2.5, 0.0), math.pi / 2, 30.0) == pytest.approx(7.5)

    def test_ray_behind_origin_not_reported(self, wall_world):
        assert ray_cast(wall_world, Pose2D(0, 0), math.pi, 30.0) == 25.0

    @settings(max_examples=200, deadline=None)
    @given(
        cx=st.floats(-15, 15),
        cy=st.floats(-15, 15),
        h=st.floats(0.2, 4.0),
        grow=st.floats(0.0, 3.0),
        bearing=st.floats(-math.pi, math.pi),
    )
    def test_monotone_in_extent(self, cx, cy, h, grow, bearing):
        small = WorldMap(BOUNDS, (block(0, cx, cy, h, h),))
        big = WorldMap(BOUNDS, (block(0, cx, cy, h + grow, h + grow),))
        origin = Pose2D(-24.0, -24.0)
        if not big.in_free_space(origin.x, origin.y):
            return
        assert ray_cast(big, origin, bearing, 80.0) <= ray_cast(small, origin, bearing, 80.0)


class TestVisibleObjects:
    def test_on_axis(self):
        world = WorldMap(BOUNDS, (block(7, 10.0, 0.0, 1, 1, "pylon"),))
        assert visible_objects(world, Pose2D(0, 0, 0), math.pi / 2, 20.0) == [(7, "pylon", 10.0, 0.0)]

    def test_facing_away(self):
        world = WorldMap(BOUNDS, (block(7, 10.0, 0.0, 1, 1),))
        assert visible_objects(world, Pose2D(0, 0, math.pi), math.pi / 2, 20.0) == []

    def test_out_of_range(self):
        world = WorldMap(BOUNDS, (block(7, 10.0, 0.0, 1, 1),))
        assert visible_objects(world, Pose2D(0, 0), math.pi, 9.99) == []

    def test_occlusion_collinear(self):
        world = WorldMap(BOUNDS, (block(1, 10.0, 0.0, 1, 1), block(2, 20.0, 0.0, 1, 1)))
        pose = Pose2D(0.0, 0.0, 0.0)
        seen = visible_objects(world, pose, math.pi, 25.0, occlusion=True)
        assert [v.object_id for v in seen] == [1]
        # marching oracle: the ray toward each centre first enters object index 0
        for obj in world.objects:
            angle = math.atan2(obj.center[1], obj.center[0])
            _, what = march(world, pose.x, pose.y, angle, math.hypot(*obj.center))
            assert what == 0
        assert len(visible_objects(world, pose, math.pi, 25.0, occlusion=False)) == 2

    def test_occlusion_requires_free_pose(self):
        world = WorldMap(BOUNDS, (block(1, 10.0, 0.0, 1, 1), block(2, 20.0, 0.0, 1, 1)))
        with pytest.raises(DegeneratePoseError):
            visible_objects(world, Pose2D(10.0, 0.0), math.pi, 25.0, occlusion=True)

    def test_ordering_by_bearing_then_range(self):
        world = WorldMap(
            BOUNDS,
            (block(1, 10.0, 5.0, 1, 1), block(2, 20.0, 0.0, 1, 1), block(3, 10.0, 0.0, 1, 1), block(4, 10.0, -5.0, 1, 1)),
        )
        seen = visible_objects(world, Pose2D(0, 0, 0), 2 * math.pi, 30.0)
        assert [v.object_id for v in seen] == [4, 3, 2, 1]

    def test_full_circle_sees_everything(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            objs, k = [], 0
            while len(objs) < 6:
                c = rng.uniform(-20, 20, 2)
                cand = block(k, c[0], c[1], 1.5, 1.5)
                if all(abs(c[0] - o.center[0]) > 3.1 or abs(c[1] - o.center[1]) > 3.1 for o in objs):
                    objs.append(cand)
                k += 1
            world = WorldMap(BOUNDS, tuple(objs))
            while True:
                p = rng.uniform(-24, 24, 2)
                if world.in_free_space(*p):
                    break
            pose = Pose2D(p[0], p[1], rng.uniform(-math.pi, math.pi))
            seen = visible_objects(world, pose, 2 * math.pi, world.diagonal)
            assert sorted(v.object_id for v in seen) == [o.id for o in objs]
            for v in seen:
                assert -math.pi <= v.theta < math.pi
                assert 0 < v.rho <= world.diagonal

    def test_bad_fov(self):
        with pytest.raises(ValueError):
            visible_objects(WorldMap(BOUNDS), Pose2D(0, 0), 7.0, 10.0)

import math

import numpy as np
import pytest

from mapweld.elements import MapClass, Point2
from mapweld.errors import InvalidScenario, UnknownElement
from mapweld.fileio import map_to_json_bytes, frame_to_obj
from mapweld.geometry import point_polyline_distance, polyline_length
from mapweld.synth import (
    NarrowRoad,
    NoiseSpec,
    RemoveElement,
    ScenarioKind,
    ScenarioSpec,
    ShiftElement,
    generate_scenario,
    inject_change,
    simulate_frames,
)

ALL_KINDS = list(ScenarioKind)


class TestGenerateScenario:
    def test_straight_road_structure(self):
        gt, drive = generate_scenario(ScenarioSpec(kind=ScenarioKind.STRAIGHT_ROAD, length=100))
        boundaries = gt.of_class(MapClass.BOUNDARY)
        dividers = gt.of_class(MapClass.DIVIDER)
        assert len(boundaries) == 2
        assert len(dividers) == 1
        for el in boundaries + dividers:
            ys = {p.y for p in el.points}
            assert len(ys) == 1  # straight and axis-parallel
        assert {abs(next(iter({p.y for p in el.points}))) for el in boundaries} == {3.048}

    def test_roundabout_circle_radii(self):
        gt, _ = generate_scenario(ScenarioSpec(kind=ScenarioKind.ROUNDABOUT, radius=15))
        radii = set()
        for el in gt.of_class(MapClass.BOUNDARY):
            rs = {math.hypot(p.x, p.y) for p in el.points}
            assert max(rs) - min(rs) < 1e-9
            radii.add(round(next(iter(rs)), 3))
        assert radii == {round(15 - 3.048, 3), round(15 + 3.048, 3)}

    def test_multilane_counts(self):
        gt, _ = generate_scenario(ScenarioSpec(kind=ScenarioKind.MULTI_LANE))
        assert len(gt.of_class(MapClass.BOUNDARY)) == 2
        assert len(gt.of_class(MapClass.DIVIDER)) == 3

    def test_intersection_structure(self):
        gt, drive = generate_scenario(ScenarioSpec(kind=ScenarioKind.INTERSECTION, length=48))
        assert len(gt.of_class(MapClass.BOUNDARY)) == 4
        assert len(gt.of_class(MapClass.DIVIDER)) == 4
        assert len(gt.of_class(MapClass.CROSSWALK)) == 2

    def test_loop_closed_rings(self):
        gt, _ = generate_scenario(ScenarioSpec(kind=ScenarioKind.LOOP))
        for el in gt.of_class(MapClass.BOUNDARY):
            assert el.closed

    def test_desk_scale(self):
        for kind in ALL_KINDS:
            gt, _ = generate_scenario(ScenarioSpec(kind=kind))
            b = gt.bounds
            assert b.xmax - b.xmin <= 200 and b.ymax - b.ymin <= 200

    def test_deterministic(self):
        for kind in ALL_KINDS:
            g1, d1 = generate_scenario(ScenarioSpec(kind=kind))
            g2, d2 = generate_scenario(ScenarioSpec(kind=kind))
            assert map_to_json_bytes(g1) == map_to_json_bytes(g2)
            assert d1.points == d2.points

    def test_invalid_spec_rejected(self):
        with pytest.raises(InvalidScenario):
            ScenarioSpec(kind=ScenarioKind.ROUNDABOUT, radius=2.0)
        with pytest.raises(InvalidScenario):
            ScenarioSpec(kind=ScenarioKind.STRAIGHT_ROAD, lanes_each_way=0)


class TestSimulateFrames:
    def test_noiseless_points_on_gt_geometry(self):
        gt, drive = generate_scenario(ScenarioSpec(kind=ScenarioKind.STRAIGHT_ROAD, length=80))
        frames = simulate_frames(gt, drive, step=2.0, noise=NoiseSpec())
        from mapweld.geometry import ego_to_map
        checked = 0
        for fp in frames[::5]:
            for el in fp.elements:
                src_id = el.id.split("#")[0].split("@")[0]
                gt_el = gt.get(src_id)
                assert gt_el is not None
                for p in el.points:
                    q = ego_to_map(fp.pose, Point2(p.x, p.y))
                    d = point_polyline_distance(q, gt_el.xy(), closed=gt_el.closed)
                    assert d < 1e-6
                    checked += 1
        assert checked > 100

    def test_twenty_point_contract(self):
        gt, drive = generate_scenario(ScenarioSpec(kind=ScenarioKind.STRAIGHT_ROAD))
        frames = simulate_frames(gt, drive, step=2.0, noise=NoiseSpec())
        for fp in frames:
            for el in fp.elements:
                assert len(el.points) == 20

    def test_full_dropout_empties_frames(self):
        gt, drive = generate_scenario(ScenarioSpec(kind=ScenarioKind.STRAIGHT_ROAD))
        frames = simulate_frames(gt, drive, noise=NoiseSpec(dropout_prob=1.0))
        assert all(len(fp.elements) == 0 for fp in frames)

    def test_jitter_mean_statistics(self):
        gt, drive = generate_scenario(
            ScenarioSpec(kind=ScenarioKind.STRAIGHT_ROAD, length=100, crosswalk_stations=())
        )
        sigma = 0.3
        noisy = simulate_frames(gt, drive, step=2.0, noise=NoiseSpec(point_sigma=sigma, seed=42))
        clean = simulate_frames(gt, drive, step=2.0, noise=NoiseSpec(point_sigma=0.0, seed=42))
        deltas = []
        for fn, fc in zip(noisy, clean):
            assert len(fn.elements) == len(fc.elements)
            for en, ec in zip(fn.elements, fc.elements):
                for pn, pc in zip(en.points, ec.points):
                    # skip clamped window-edge points: clamping biases them
                    if abs(pn.x) >= 30 - 1e-9 or abs(pn.y) >= 15 - 1e-9:
                        continue
                    deltas.append((pn.x - pc.x, pn.y - pc.y))
        arr = np.asarray(deltas)
        n = arr.size
        bound = 3 * sigma / math.sqrt(n)
        assert abs(arr.mean()) <= bound

    def test_deterministic_given_seed(self):
        gt, drive = generate_scenario(ScenarioSpec(kind=ScenarioKind.INTERSECTION, length=48))
        noise = NoiseSpec(point_sigma=0.2, dropout_prob=0.1, spurious_rate=0.5, seed=9)
        f1 = simulate_frames(gt, drive, noise=noise)
        f2 = simulate_frames(gt, drive, noise=noise)
        assert [frame_to_obj(a) for a in f1] == [frame_to_obj(b) for b in f2]

    def test_poses_follow_tangent(self):
        gt, drive = generate_scenario(ScenarioSpec(kind=ScenarioKind.ROUNDABOUT))
        frames = simulate_frames(gt, drive, step=2.0, noise=NoiseSpec())
        for fp in frames:
            r = math.hypot(fp.pose.x, fp.pose.y)
            assert r == pytest.approx(15.0, abs=0.05)
            radial = math.atan2(fp.pose.y, fp.pose.x)
            tangent = radial + math.pi / 2
            diff = (fp.pose.yaw - tangent + math.pi) % (2 * math.pi) - math.pi
            assert abs(diff) < 0.1

    def test_spurious_rate(self):
        gt, drive = generate_scenario(ScenarioSpec(kind=ScenarioKind.STRAIGHT_ROAD))
        frames = simulate_frames(gt, drive, noise=NoiseSpec(spurious_rate=0.5, seed=3))
        n_spur = sum(
            1 for fp in frames for el in fp.elements if el.id.startswith("spur")
        )
        assert 0.2 * len(frames) <= n_spur <= 0.9 * len(frames)
        for fp in frames:
            for el in fp.elements:
                if el.id.startswith("spur"):
                    length = polyline_length(el.xy())
                    assert 1.9 <= length <= 5.1


class TestInjectChange:
    def _gt(self):
        gt, _ = generate_scenario(ScenarioSpec(kind=ScenarioKind.STRAIGHT_ROAD, length=100))
        return gt

    def test_remove_element(self):
        gt = self._gt()
        new, record = inject_change(gt, RemoveElement("crosswalk_0"))
        assert len(new.elements) == len(gt.elements) - 1
        assert new.get("crosswalk_0") is None
        assert gt.get("crosswalk_0") is not None  # original untouched
        assert record.kind == "remove"

    def test_shift_element(self):
        gt = self._gt()
        new, record = inject_change(gt, ShiftElement("crosswalk_0", 2.0, 0.0))
        old = gt.get("crosswalk_0")
        moved = new.get("crosswalk_0")
        for a, b in zip(old.points, moved.points):
            assert b.x - a.x == pytest.approx(2.0)
            assert b.y - a.y == pytest.approx(0.0)

    def test_narrow_road_offset_reduced_locally(self):
        gt = self._gt()
        new, record = inject_change(
            gt, NarrowRoad("boundary_left", start_s=40.0, end_s=60.0, inset=1.5, taper=2.0)
        )
        moved = new.get("boundary_left")
        # inside the span (beyond tapers) the boundary sits 1.5 m lower
        for p in moved.points:
            if 43.0 <= p.x <= 57.0:
                assert p.y == pytest.approx(3.048 - 1.5, abs=1e-6)
            elif p.x <= 39.9 or p.x >= 60.1:
                assert p.y == pytest.approx(3.048, abs=1e-6)
        # continuity: consecutive gaps stay small
        gaps = [math.dist(a, b) for a, b in zip(moved.points, moved.points[1:])]
        assert max(gaps) < 1.0

    def test_unknown_element(self):
        with pytest.raises(UnknownElement):
            inject_change(self._gt(), RemoveElement("nope"))

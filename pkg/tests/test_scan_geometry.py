import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pseudolidar.scan_geometry import (FORWARD_ROTATION, CameraCalib, DetBox, Scan, cartesian_to_polar,
                                       points_in_box_bottom, points_in_box_full, polar_to_cartesian,
                                       project_point, project_points, read_calib_json, read_detections_json,
                                       read_scans_csv, to_camera_frame, write_calib_json,
                                       write_detections_json, write_scans_csv)
from pseudolidar.synth_world import Person, Scene, SensorConfig, raycast_scan, true_box

from conftest import make_scan


def single_beam(r, phi):
    return Scan(0, [r], phi, 0.01, 30.0)


@pytest.mark.parametrize("r, phi, expected", [
    (1.0, 0.0, (1.0, 0.0)),
    (2.0, math.pi / 2, (0.0, 2.0)),
    (math.sqrt(2), math.pi / 4, (1.0, 1.0)),
])
def test_polar_to_cartesian_examples(r, phi, expected):
    xy = polar_to_cartesian(single_beam(r, phi))
    np.testing.assert_allclose(xy[0], expected, atol=1e-12)


def test_sentinel_beams_still_produce_points():
    s = make_scan([30.0, 5.0, 30.0])
    assert polar_to_cartesian(s).shape == (3, 2)
    assert s.valid.tolist() == [False, True, False]


@given(st.lists(st.floats(0.05, 29.0), min_size=1, max_size=50))
def test_polar_round_trip(ranges):
    s = make_scan(ranges, angle_min=-3.0, inc=6.0 / max(len(ranges), 2))
    r, phi = cartesian_to_polar(polar_to_cartesian(s))
    np.testing.assert_allclose(r, s.ranges, rtol=1e-9)
    np.testing.assert_allclose(np.cos(phi - s.angles), 1.0, atol=1e-9)


@pytest.mark.parametrize("bad", [[0.0], [31.0], [np.nan], []])
def test_scan_rejects_bad_ranges(bad):
    with pytest.raises(ValueError):
        Scan(0, bad, 0.0, 0.01, 30.0)


def test_scan_rejects_more_than_full_turn():
    with pytest.raises(ValueError):
        Scan(0, np.ones(10), 0.0, 1.0, 30.0)


def test_calib_validation():
    with pytest.raises(ValueError):
        CameraCalib(0.0, 600, 640, 360, 1280, 720)
    with pytest.raises(ValueError):
        CameraCalib(600, 600, 640, 360, 0, 720)
    reflect = np.diag([1.0, 1.0, -1.0]) @ FORWARD_ROTATION
    with pytest.raises(ValueError):
        CameraCalib(600, 600, 640, 360, 1280, 720, rotation=reflect)
    with pytest.raises(ValueError):
        CameraCalib(600, 600, 640, 360, 1280, 720, rotation=2 * FORWARD_ROTATION)


@pytest.mark.parametrize("d", [0.5, 3.0, 17.0])
def test_optical_axis_point_hits_principal_point(d):
    calib = CameraCalib.forward_facing(cam_height=0.4, h_lidar=0.4)
    u, v = project_point((d, 0.0), calib)
    assert u == pytest.approx(640.0, abs=1e-9)
    assert v == pytest.approx(360.0, abs=1e-9)


def test_point_behind_camera_is_none(calib):
    assert project_point((-1.0, 0.0), calib) is None


def test_pinhole_hand_value():
    # identity rotation plus a depth shift maps LiDAR (1, y, 0) to camera (1, y, 2)
    calib = CameraCalib(600, 600, 640, 360, 1280, 720, rotation=np.eye(3),
                        translation=np.array([0.0, 0.0, 2.0]), h_lidar=0.0)
    u, v = project_point((1.0, 0.1), calib)
    assert u == pytest.approx(940.0)
    assert v == pytest.approx(600 * 0.1 / 2 + 360)


def test_point_outside_image_is_none(calib):
    assert project_point((1.0, 5.0), calib) is None


def test_identity_composition_is_bit_identical(calib):
    xy = np.random.default_rng(0).uniform(-10, 10, size=(200, 2))
    rot = np.eye(3) @ calib.rotation
    trans = np.eye(3) @ calib.translation + np.zeros(3)
    other = CameraCalib(calib.fx, calib.fy, calib.cx, calib.cy, calib.image_width, calib.image_height,
                        rot, trans, calib.h_lidar)
    a, oka = project_points(xy, calib)
    b, okb = project_points(xy, other)
    assert np.array_equal(oka, okb)
    assert np.array_equal(a[oka], b[okb])


def test_forward_facing_camera_position():
    calib = CameraCalib.forward_facing(cam_height=1.0, h_lidar=0.4)
    np.testing.assert_allclose(calib.camera_center, [0, 0, 1.0], atol=1e-12)
    # a point on the floor plane far ahead sits below the principal point
    cam = to_camera_frame([(5.0, 0.0)], calib, height=0.0)[0]
    assert cam[1] > 0 and cam[2] == pytest.approx(5.0)


def test_yaw_turns_view_left():
    calib = CameraCalib.forward_facing(yaw=0.2)
    u, _ = project_point((5.0, math.tan(0.2) * 5.0), calib)
    assert u == pytest.approx(640.0, abs=1e-6)


def test_detbox_validation_and_widening():
    with pytest.raises(ValueError):
        DetBox(10, 0, 10, 5, 0.5)
    with pytest.raises(ValueError):
        DetBox(0, 0, 1, 1, 1.5)
    b = DetBox(100, 0, 200, 50, 0.9)
    w = b.widened(0.1)
    assert w.width == pytest.approx(110.0)
    assert (w.x_min + w.x_max) / 2 == pytest.approx(150.0)
    assert b.widened(0.0) == b


def _ring_scan(n=720, r=4.0):
    return Scan(0, np.full(n, r), -math.pi, 2 * math.pi / n, 30.0)


def test_whole_image_box_takes_all_visible_bottom_points(calib):
    scan = _ring_scan()
    uv, ok = project_points(polar_to_cartesian(scan), calib)
    box = DetBox(0, 0, 1280, 720)
    idx = points_in_box_bottom(scan, box, calib)
    # the ring at LiDAR height projects below the image centre
    assert np.all(uv[ok, 1] >= 360)
    assert idx.tolist() == np.flatnonzero(ok & scan.valid).tolist()


def test_box_outside_image_is_empty(calib):
    assert len(points_in_box_bottom(_ring_scan(), DetBox(2000, 2000, 2100, 2100), calib)) == 0


def test_sentinel_excluded_from_frustum(calib):
    scan = Scan(0, np.full(720, 30.0), -math.pi, 2 * math.pi / 720, 30.0)
    assert len(points_in_box_full(scan, DetBox(0, 0, 1280, 720), calib)) == 0


def test_widened_box_picks_up_point_just_outside(calib):
    scan = _ring_scan(n=2000, r=4.0)
    uv, ok = project_points(polar_to_cartesian(scan), calib)
    k = int(np.flatnonzero(ok)[len(np.flatnonzero(ok)) // 2])
    u = uv[k, 0]
    # point 3 px right of the right edge of a 100 px box; widening adds 5 px a side
    box = DetBox(u - 103, 300, u - 3, 700)
    assert k not in points_in_box_full(scan, box, calib, widen=0.0)
    assert k in points_in_box_full(scan, box, calib, widen=0.1)


def test_person_at_3m_frustum_matches_leg_beams():
    sensor = SensorConfig(range_noise_sigma=0.0)
    # heading along x puts the two legs side by side as seen from the sensor
    person = Person(np.array([[3.0, 0.0], [3.0001, 0.0]]), 0.0, 0.0)
    scene = Scene(np.zeros((0, 4)), np.zeros((0, 3)), [person], np.zeros(3), np.zeros(3))
    scan, owner = raycast_scan(scene, np.zeros(3), sensor, None, 0, 0.0)
    calib = sensor.calib()
    box = true_box(np.array([3.0, 0.0]), person, calib)
    idx = points_in_box_bottom(scan, box, calib)
    legs = np.flatnonzero(owner >= scene.first_leg_id)
    assert len(legs) > 10
    assert idx.tolist() == legs.tolist()


@given(st.floats(0, 1200), st.floats(0, 700), st.floats(1, 300), st.floats(1, 300))
def test_bottom_subset_of_full(x0, y0, w, h):
    calib = CameraCalib.forward_facing()
    box = DetBox(x0, y0, x0 + w, y0 + h)
    scan = _ring_scan(n=360, r=3.0)
    assert set(points_in_box_bottom(scan, box, calib)) <= set(points_in_box_full(scan, box, calib, 0.0))


def test_file_round_trips(tmp_path, calib):
    scans = [make_scan([1.0, 2.5, 30.0], frame_id=i) for i in range(3)]
    write_scans_csv(tmp_path / "s.csv", scans)
    back = read_scans_csv(tmp_path / "s.csv")
    assert [s.frame_id for s in back] == [0, 1, 2]
    assert np.array_equal(back[1].ranges, scans[1].ranges)
    assert back[0].angle_increment == scans[0].angle_increment

    write_calib_json(tmp_path / "c.json", calib)
    c2 = read_calib_json(tmp_path / "c.json")
    np.testing.assert_allclose(c2.extrinsic, calib.extrinsic)

    boxes = [DetBox(1, 2, 3, 4, 0.5)]
    write_detections_json(tmp_path / "d.json", [(7, boxes), (8, [])])
    assert read_detections_json(tmp_path / "d.json") == {7: boxes, 8: []}


def test_bad_scan_file_reports_line(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("angle_min=0.0,angle_increment=0.1,max_range=30.0,n_points=3\n0,0.0,1.0,2.0\n")
    with pytest.raises(ValueError, match=":2:"):
        read_scans_csv(p)
    p.write_text("nonsense\n")
    with pytest.raises(ValueError, match=":1:"):
        read_scans_csv(p)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jengabot.errors import DegenerateMask, IllConditioned, ParseError, TargetNotVisible
from jengabot.geometry import CameraIntrinsics, RigidPose, rot_x, rot_y, rot_z, rotation_angle
from jengabot.perception import (InstanceMask, MaskNoise, TrackerNoise, TrackStatus, ap_at_iou, build_group_model,
                                 corrupt_masks, front_face_corners, inject_jump, mask_iou, planar_pnp,
                                 render_masks, start_tracking, track_step, tracker_reinitialize)
from jengabot.perception.maskio import format_masks, parse_masks, read_masks, rle_decode, rle_encode, write_masks
from jengabot.perception.metrics import match_predictions
from jengabot.perception.pnp import face_model_points, project_points
from jengabot.tower import apply_extraction, face_pose, new_tower

K = CameraIntrinsics()
FACE = (0.025, 0.015)


def frontal_camera(tower, level, slot, dist=0.3, yaw_deg=0.0):
    fp = face_pose(tower, level, slot)
    return RigidPose(rot_z(np.radians(yaw_deg)), [0, 0, 0]) @ fp @ RigidPose(np.eye(3), [0, 0, -dist])


# --- masks --------------------------------------------------------------------

def test_rendered_face_area_matches_projection():
    t = new_tower(seed=0)
    masks = {m.block_id: m for m in render_masks(frontal_camera(t, 9, 1), K, t)}
    target = masks[t.block_at(9, 1).id]
    analytic = (615 * 0.025 / 0.3) * (615 * 0.015 / 0.3)
    assert abs(target.area - analytic) / analytic < 0.02


def test_masks_are_disjoint_and_labeled():
    t = new_tower(seed=1)
    masks = render_masks(frontal_camera(t, 8, 0, 0.4, 15), K, t, image_id=3)
    stack = np.sum([m.mask.astype(int) for m in masks], axis=0)
    assert stack.max() <= 1
    assert len({m.block_id for m in masks}) == len(masks)
    assert all(m.image_id == 3 and m.mask.shape == (480, 640) for m in masks)


def test_extracted_block_has_no_mask():
    t = new_tower(seed=1)
    b = t.block_at(9, 0)
    apply_extraction(t, b)
    assert b.id not in {m.block_id for m in render_masks(frontal_camera(t, 9, 1), K, t)}


def test_mask_iou_basic():
    a = np.zeros((10, 10), bool)
    a[:4, :5] = True
    b = np.zeros((10, 10), bool)
    b[2:6, :5] = True
    assert np.isclose(mask_iou(InstanceMask(0, a), InstanceMask(1, b)), 10 / 30)
    assert mask_iou(InstanceMask(0, a), InstanceMask(0, a)) == 1.0


def test_corrupt_masks_zero_noise_and_determinism():
    t = new_tower(seed=2)
    masks = render_masks(frontal_camera(t, 9, 1), K, t)
    same = corrupt_masks(masks, MaskNoise(), seed=0)
    assert all(np.array_equal(a.mask, b.mask) for a, b in zip(masks, same))
    nz = MaskNoise(jitter_px=2.0, dropout=0.2)
    a, b = corrupt_masks(masks, nz, 5), corrupt_masks(masks, nz, 5)
    assert [m.block_id for m in a] == [m.block_id for m in b]
    assert all(np.array_equal(x.mask, y.mask) and x.confidence == y.confidence for x, y in zip(a, b))
    assert corrupt_masks(masks, MaskNoise(jitter_px=1.0, dropout=1.0), 0) == []


# --- corners ---------------------------------------------------------------------

def test_axis_aligned_rectangle_corners():
    m = np.zeros((100, 120), bool)
    m[20:50, 30:90] = True
    c = front_face_corners(m)
    assert np.allclose(c, [[29.5, 19.5], [89.5, 19.5], [89.5, 49.5], [29.5, 49.5]], atol=1e-6)


def test_rendered_corners_match_projected_face():
    t = new_tower(seed=0)
    for lv, slot, yaw in [(9, 1, 0.0), (6, 0, 10.0), (12, 2, -12.0)]:
        cam = frontal_camera(t, lv, slot, 0.32, yaw)
        masks = {m.block_id: m for m in render_masks(cam, K, t)}
        c = front_face_corners(masks[t.block_at(lv, slot).id])
        rel = cam.inv() @ face_pose(t, lv, slot)
        truth = project_points(rel, K, face_model_points(FACE))
        assert np.max(np.linalg.norm(c - truth, axis=1)) < 1.0


def test_small_mask_is_degenerate():
    m = np.zeros((50, 50), bool)
    m[10:14, 10:14] = True
    with pytest.raises(DegenerateMask):
        front_face_corners(m)


# --- PnP ---------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 0.5), st.floats(-30, 30), st.floats(-30, 30), st.floats(-0.03, 0.03))
def test_pnp_noiseless_roundtrip(depth, ax, ay, lateral):
    pose = RigidPose(rot_x(np.radians(ax)) @ rot_y(np.radians(ay)), [lateral, -lateral / 2, depth])
    uv = project_points(pose, K, face_model_points(FACE))
    est = planar_pnp(uv, FACE, K)
    assert np.linalg.norm(est.t - pose.t) < 1e-8
    assert np.degrees(rotation_angle(est.R @ pose.R.T)) < 1e-6


def test_pnp_with_extra_coplanar_points():
    pose = RigidPose(rot_y(0.3), [0.01, 0.0, 0.3])
    model = np.vstack([face_model_points(FACE), face_model_points(FACE) + [0.025, 0, 0]])
    est = planar_pnp(project_points(pose, K, model), None, K, model_points=model)
    assert np.allclose(est.t, pose.t, atol=1e-9)


def test_pnp_rejects_collinear_and_nonplanar():
    with pytest.raises(IllConditioned):
        planar_pnp([[0, 0], [10, 10], [20, 20], [30, 30]], FACE, K)
    model = face_model_points(FACE).copy()
    model[0, 2] = 0.01
    with pytest.raises(IllConditioned):
        planar_pnp(np.zeros((4, 2)) + np.arange(8).reshape(4, 2) ** 2, None, K, model_points=model)


# --- AP ---------------------------------------------------------------------------

def _cell(i, image_id=0, conf=1.0, shape=(4, 40)):
    m = np.zeros(shape, bool)
    m[:, 4 * i: 4 * i + 4] = True
    return InstanceMask(i, m, conf, image_id)


def test_matching_respects_image_and_threshold():
    gt = [_cell(0)]
    assert ap_at_iou([_cell(0, image_id=1)], gt, 0.5) == 0.0
    half = _cell(0)
    half.mask[:, 2:4] = False  # IoU 0.5
    assert ap_at_iou([half], gt, 0.5) == 1.0
    assert ap_at_iou([half], gt, 0.51) == 0.0


def test_duplicates_are_false_positives():
    conf, tp = match_predictions([_cell(0, conf=0.9), _cell(0, conf=0.8)], [_cell(0)], 0.5)
    assert tp.tolist() == [True, False]
    assert list(conf) == [0.9, 0.8]


def test_ap_of_ground_truth_is_one_and_empty_is_zero():
    gt = [_cell(i) for i in range(5)]
    assert ap_at_iou(gt, gt, 0.9) == 1.0
    assert ap_at_iou([], gt, 0.5) == 0.0


# --- mask file format ----------------------------------------------------------------

@settings(max_examples=50)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_rle_roundtrip(h, w, seed):
    m = np.random.default_rng(seed).random((h, w)) < 0.4
    assert np.array_equal(rle_decode(rle_encode(m), h, w), m)


def test_mask_file_roundtrip(tmp_path):
    masks = [_cell(1, 0, 0.75), _cell(3, 2, 0.5)]
    p = tmp_path / "m.masks"
    write_masks(p, masks)
    back = read_masks(p)
    assert [(m.block_id, m.image_id, m.confidence) for m in back] == [(1, 0, 0.75), (3, 2, 0.5)]
    assert all(np.array_equal(a.mask, b.mask) for a, b in zip(masks, back))


def test_parse_errors_carry_line_numbers():
    good = format_masks([_cell(0)]).splitlines()
    with pytest.raises(ParseError) as e:
        parse_masks("\n".join([good[0], good[1], "0 1 0.5"]))
    assert e.value.line == 3
    with pytest.raises(ParseError) as e:
        parse_masks("\n".join([good[0], "0 1 0.5 1,2,3"]))
    assert e.value.line == 2
    with pytest.raises(ParseError) as e:
        parse_masks("garbage")
    assert e.value.line == 1


# --- tracking ------------------------------------------------------------------------

def test_group_model_composition():
    t = new_tower(seed=0)
    g = build_group_model(t, t.block_at(9, 1))
    assert len(g.members) == 9 and g.n_points == 3 * 4 + 6 * 8
    s = g.single()
    assert s.block_ids == [t.block_at(9, 1).id] and s.n_points == 4
    edge = build_group_model(t, t.block_at(9, 0))
    assert len(edge.members) == 8


def test_zero_noise_tracks_exactly():
    t = new_tower(seed=0)
    g = build_group_model(t, t.block_at(9, 1))
    zero = TrackerNoise(0.0, 0.0, 0.0, 0.0)
    cam = frontal_camera(t, 9, 1)
    st_ = start_tracking(g, cam, t, K, zero, seed=1)
    for k in range(20):
        cam = frontal_camera(t, 9, 1, 0.3, 10 * np.sin(k / 5))
        st_ = track_step(st_, g, cam, t, K, zero, seed=1)
        rel = cam.inv() @ face_pose(t, 9, 1)
        assert st_.e_proj < 1e-9 and np.allclose(st_.pose.t, rel.t)


def test_group_error_never_exceeds_single():
    t = new_tower(seed=0)
    g = build_group_model(t, t.block_at(8, 1))
    noise = TrackerNoise()
    sg = ss = None
    for k in range(120):
        cam = frontal_camera(t, 8, 1, 0.3, 20 * np.sin(k / 15))
        sg = start_tracking(g, cam, t, K, noise, 7) if sg is None else track_step(sg, g, cam, t, K, noise, 7)
        ss = start_tracking(g.single(), cam, t, K, noise, 7) if ss is None else track_step(
            ss, g.single(), cam, t, K, noise, 7)
        if not ss.tracking:
            break
        assert sg.e_proj <= ss.e_proj + 1e-12


def test_jump_and_out_of_view_lose_track():
    t = new_tower(seed=0)
    g = build_group_model(t, t.block_at(9, 1))
    cam = frontal_camera(t, 9, 1)
    s = start_tracking(g, cam, t, K, TrackerNoise(), 0)
    lost = track_step(inject_jump(s, [0, 30, 0]), g, cam, t, K, TrackerNoise(), 0)
    assert lost.status is TrackStatus.LOST
    away = cam @ RigidPose(rot_y(np.pi / 2), [0, 0, 0])
    gone = track_step(s, g, away, t, K, TrackerNoise(), 0)
    assert gone.status is TrackStatus.LOST and gone.e_proj == float("inf")


def test_reinitialize_from_masks():
    t = new_tower(seed=3)
    b = t.block_at(9, 1)
    g = build_group_model(t, b)
    cam = frontal_camera(t, 9, 1, 0.28, 8)
    masks = render_masks(cam, K, t)
    s = tracker_reinitialize(g, masks, K, t, cam)
    rel = cam.inv() @ face_pose(t, 9, 1)
    assert s.tracking and s.e_proj < 10
    assert np.linalg.norm(s.pose.t - rel.t) < 0.01
    with pytest.raises(TargetNotVisible):
        tracker_reinitialize(g, [m for m in masks if m.block_id != b.id], K)

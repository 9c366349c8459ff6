import math

import numpy as np
import pytest

from svpose import so3
from svpose.errors import DegenerateAlignmentError, OrientationFlipError
from svpose.evaluation import (
    AUC_STEPS,
    accuracy,
    accuracy_curve_auc,
    center_errors,
    evaluate,
    rotation_errors_deg,
    scene_scale,
    translation_align,
    translation_errors,
    umeyama_align,
)
from svpose.frame import CameraPose
from svpose.synth import RigSpec, generate_scene


def rng_for(seed):
    return np.random.Generator(np.random.PCG64(seed))


def random_similarity(rng, scale_range=(0.2, 5.0)):
    s = rng.uniform(*scale_range)
    r = so3.random_rotation(rng)
    t = rng.standard_normal(3) * 2.0
    return s, r, t


def test_scene_scale_is_centroid_to_furthest():
    centers = np.array(
        [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [2.0, 2.0, 0.0]]
    )
    # Centroid (1, 1, 0); every corner is sqrt(2) away.
    assert scene_scale(centers) == pytest.approx(math.sqrt(2.0), rel=1e-12)


def test_umeyama_recovers_constructed_transform():
    rng = rng_for(0)
    for _ in range(50):
        n = int(rng.integers(3, 12))
        x = rng.standard_normal((n, 3))
        s, r, t = random_similarity(rng)
        y = s * x @ r.T + t
        got = umeyama_align(x, y)
        assert got.scale == pytest.approx(s, rel=1e-9)
        assert np.abs(got.rotation - r).max() < 1e-9
        assert np.abs(got.translation - t).max() < 1e-9
        assert np.abs(got.apply(x) - y).max() < 1e-9


def test_umeyama_two_points_exact():
    rng = rng_for(1)
    x = rng.standard_normal((2, 3))
    y = rng.standard_normal((2, 3))
    transform = umeyama_align(x, y)
    assert np.abs(transform.apply(x) - y).max() < 1e-12


def test_umeyama_degenerate_and_flip():
    rng = rng_for(2)
    y = rng.standard_normal((4, 3))
    with pytest.raises(DegenerateAlignmentError):
        umeyama_align(np.zeros((4, 3)), y)
    with pytest.raises(ValueError):
        umeyama_align(y[:1], y[:1])
    # All target points coincide: the best scale collapses to zero.
    x = rng.standard_normal((4, 3))
    with pytest.raises(OrientationFlipError):
        umeyama_align(x, np.zeros((4, 3)))


def test_translation_align_recovers_scale_and_shift():
    rng = rng_for(3)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        gt = [
            CameraPose(rotation=so3.random_rotation(rng), translation=rng.standard_normal(3))
            for _ in range(n)
        ]
        s = rng.uniform(0.2, 5.0)
        shift = rng.standard_normal(3)
        pred = [
            CameraPose(
                rotation=g.rotation,
                translation=(g.translation - g.rotation @ shift) / s,
            )
            for g in gt
        ]
        got_s, got_shift = translation_align(pred, gt)
        assert got_s == pytest.approx(s, rel=1e-9)
        assert np.abs(got_shift - shift).max() < 1e-9
        assert np.abs(translation_errors(pred, gt)).max() < 1e-9


def test_translation_align_degenerate_and_flip():
    rng = rng_for(4)
    gt = [
        CameraPose(rotation=np.eye(3), translation=np.zeros(3)),
        CameraPose(rotation=np.eye(3), translation=np.zeros(3)),
    ]
    # Zero predicted translations leave the scale column empty.
    with pytest.raises(DegenerateAlignmentError):
        translation_align(gt, gt)
    good = [
        CameraPose(rotation=so3.random_rotation(rng), translation=rng.standard_normal(3))
        for _ in range(3)
    ]
    flipped = [
        CameraPose(rotation=g.rotation, translation=-g.translation) for g in good
    ]
    with pytest.raises(OrientationFlipError):
        translation_align(flipped, good)


def test_rotation_errors_for_single_perturbed_camera():
    rng = rng_for(5)
    gt = [
        CameraPose(rotation=so3.random_rotation(rng), translation=np.zeros(3))
        for _ in range(4)
    ]
    theta = 0.3
    wobble = so3.axis_angle_rotation(rng.standard_normal(3), theta)
    pred = [
        CameraPose(rotation=p.rotation if k != 2 else wobble @ p.rotation, translation=p.translation)
        for k, p in enumerate(gt)
    ]
    errs = rotation_errors_deg(pred, gt)
    # Pair order (0,1),(0,2),(0,3),(1,2),(1,3),(2,3); those touching
    # camera 2 are off by exactly theta.
    d = math.degrees(theta)
    expect = [0.0, d, 0.0, d, 0.0, d]
    assert np.abs(errs - expect).max() < 1e-7


def test_center_errors_counting_oracle():
    # Identity rotations, unit square of centers; one center pulled off
    # by a known distance. Alignment cannot hide a single outlier fully,
    # but with pred == gt the errors must vanish.
    rng = rng_for(6)
    centers = np.array(
        [[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [1.0, 1.0, 0]]
    )
    poses = [
        CameraPose(rotation=np.eye(3), translation=-c) for c in centers
    ]
    assert np.abs(center_errors(poses, poses)).max() < 1e-12
    s, r, t = random_similarity(rng)
    moved = [
        CameraPose(rotation=p.rotation, translation=-(s * r @ p.center + t))
        for p in poses
    ]
    # A global similarity of the centers is aligned away exactly.
    assert np.abs(center_errors(moved, poses)).max() < 1e-9


def test_accuracy_strict_inequality():
    errs = np.array([0.5, 1.0, 1.5])
    assert accuracy(errs, 1.0) == pytest.approx(1.0 / 3.0)
    assert accuracy(errs, 1.0001) == pytest.approx(2.0 / 3.0)
    with pytest.raises(ValueError):
        accuracy(np.array([]), 1.0)


def test_auc_matches_hand_count():
    # Thresholds are the right endpoints k*max/steps, k = 1..steps.
    errs = np.array([0.25])
    auc = accuracy_curve_auc(errs, 1.0)
    crossing = sum(
        1 for k in range(1, AUC_STEPS + 1) if 0.25 < k * 1.0 / AUC_STEPS
    )
    assert auc == pytest.approx(crossing / AUC_STEPS, abs=1e-12)
    assert accuracy_curve_auc(np.array([0.0]), 1.0) == 1.0
    assert accuracy_curve_auc(np.array([2.0]), 1.0) == 0.0


def test_evaluate_perfect_prediction():
    scene = generate_scene(RigSpec(n_cameras=5, seed=11, radius_min=0.7, radius_max=1.3))
    report = evaluate(scene.poses, scene.poses, scene.sigma)
    flat = report.to_flat_dict()
    assert report.n_cameras == 5
    for key, value in flat.items():
        if key.startswith(("rot_acc", "center_acc", "trans_acc")):
            assert value == 1.0, key
    assert flat["rot_auc"] == 1.0
    assert flat["center_auc"] == 1.0


def test_flat_dict_column_order_frozen():
    scene = generate_scene(RigSpec(n_cameras=3, seed=12))
    flat = evaluate(scene.poses, scene.poses, scene.sigma).to_flat_dict()
    assert list(flat) == [
        "n_cameras",
        "sigma",
        "rot_acc_5",
        "rot_acc_10",
        "rot_acc_15",
        "rot_acc_30",
        "rot_auc",
        "center_acc_0.1",
        "center_acc_0.2",
        "center_acc_0.3",
        "center_auc",
        "trans_acc_0.1",
    ]


def apply_world_similarity(poses, s, r, t):
    # A world similarity acts on a pose as R -> R r, t -> s t + R t0.
    return [
        CameraPose(
            rotation=p.rotation @ r,
            translation=s * p.translation + p.rotation @ t,
        )
        for p in poses
    ]


def test_rotation_and_center_metrics_invariant_for_any_prediction():
    rng = rng_for(7)
    scene = generate_scene(RigSpec(n_cameras=6, seed=13, radius_min=0.7, radius_max=1.3))
    gt = scene.poses
    # Predictions: ground truth mildly perturbed, so errors are nonzero.
    pred = []
    for p in gt:
        wobble = so3.axis_angle_rotation(rng.standard_normal(3), 0.05)
        pred.append(
            CameraPose(
                rotation=wobble @ p.rotation,
                translation=p.translation + 0.05 * rng.standard_normal(3),
            )
        )
    base = evaluate(pred, gt, scene.sigma).to_flat_dict()
    for _ in range(5):
        s, r, t = random_similarity(rng)
        moved = apply_world_similarity(pred, s, r, t)
        got = evaluate(moved, gt, scene.sigma).to_flat_dict()
        for key in base:
            if key.startswith(("rot_", "center_")):
                assert got[key] == pytest.approx(base[key], abs=1e-9), key


def test_all_metrics_invariant_with_true_rotations():
    """With the ground-truth rotations in place the translation residual
    span is closed under world similarities, so every reported number is
    invariant, translation accuracy included."""
    rng = rng_for(8)
    scene = generate_scene(RigSpec(n_cameras=6, seed=14, radius_min=0.7, radius_max=1.3))
    gt = scene.poses
    pred = [
        CameraPose(
            rotation=p.rotation,
            translation=p.translation + 0.05 * rng.standard_normal(3),
        )
        for p in gt
    ]
    base = evaluate(pred, gt, scene.sigma).to_flat_dict()
    for _ in range(5):
        s, r, t = random_similarity(rng)
        moved = apply_world_similarity(pred, s, r, t)
        got = evaluate(moved, gt, scene.sigma).to_flat_dict()
        for key in base:
            assert got[key] == pytest.approx(base[key], abs=1e-9), key

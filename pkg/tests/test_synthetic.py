import math

import numpy as np
import pytest

from grace.synthetic import (ArticulatedBodySpec, Box, Capsule,
                             GeneratorConfig, Plane, SceneSpec, body_min_z,
                             fit_camera, generate_sample, label_contact,
                             look_at, random_body, render_sample, sample_body)
from grace.types import HumanPointCloud, validate_sample


def capsule_area_oracle(length, radius):
    return 2 * math.pi * radius * length + 4 * math.pi * radius ** 2


def make_capsule(part_id, p0, p1, radius):
    return Capsule(part_id=part_id, p0=np.array(p0, dtype=float),
                   p1=np.array(p1, dtype=float), radius=radius)


# ---------------------------------------------------------------------------
# body sampling

def test_sample_body_default_smpl_scale_shape(rng):
    spec = random_body(seed=1, num_parts=12)
    pts, ids = sample_body(spec, 6890, rng)
    assert pts.shape == (6890, 3)
    assert ids.shape == (6890,)


def test_single_capsule_all_same_part(rng):
    spec = ArticulatedBodySpec(
        parts=(make_capsule(3, [0, 0, 0], [0, 0, 1], 0.1),), pose_seed=0)
    pts, ids = sample_body(spec, 64, rng)
    assert np.all(ids == 3)
    # every point sits on the capsule surface
    axis_t = np.clip(pts[:, 2], 0, 1)
    closest = np.stack([np.zeros(64), np.zeros(64), axis_t], axis=1)
    assert np.allclose(np.linalg.norm(pts - closest, axis=1), 0.1, atol=1e-9)


def test_two_capsule_counts_proportional_to_area(rng):
    big = make_capsule(1, [0, 0, 0], [0, 0, 1.0], 0.10)
    small = make_capsule(2, [0, 0, 1.0], [0.4, 0, 1.0], 0.03)
    spec = ArticulatedBodySpec(parts=(big, small), pose_seed=0)
    n = 20000
    pts, ids = sample_body(spec, n, rng)
    a1 = capsule_area_oracle(big.length, big.radius)
    a2 = capsule_area_oracle(small.length, small.radius)
    p = a1 / (a1 + a2)
    count = int((ids == 1).sum())
    sigma = math.sqrt(n * p * (1 - p))
    assert abs(count - n * p) <= 3 * sigma


def test_sample_body_too_few_points(rng):
    spec = random_body(seed=0, num_parts=4)
    with pytest.raises(ValueError):
        sample_body(spec, 32, rng)


def test_random_body_is_connected_tree():
    spec = random_body(seed=5, num_parts=16)
    assert len({c.part_id for c in spec.parts}) == 16
    placed = [spec.parts[0]]
    for capsule in spec.parts[1:]:
        attached = any(
            np.allclose(capsule.p0, parent.p0) or np.allclose(capsule.p0, parent.p1)
            for parent in placed
        )
        assert attached
        placed.append(capsule)


# ---------------------------------------------------------------------------
# contact labeling

def test_floating_body_has_no_contact(rng):
    pts = rng.normal(size=(100, 3)) * 0.2 + np.array([0, 0, 1.0])
    scene = SceneSpec(primitives=(Plane(normal=np.array([0., 0., 1.]), offset=0.0),),
                      contact_epsilon=0.005)
    label = label_contact(HumanPointCloud(points=pts), scene)
    assert label.contact.sum() == 0


def test_plane_contact_is_exactly_z_below_epsilon(rng):
    pts = rng.uniform(-0.5, 0.5, size=(500, 3))
    eps = 0.01
    scene = SceneSpec(primitives=(Plane(normal=np.array([0., 0., 1.]), offset=0.0),),
                      contact_epsilon=eps)
    label = label_contact(HumanPointCloud(points=pts), scene)
    assert np.array_equal(label.contact.astype(bool), pts[:, 2] <= eps)


def test_two_boxes_union_of_per_primitive_labels(rng):
    pts = rng.uniform(-1, 1, size=(400, 3))
    box_a = Box(center=np.array([0.5, 0, 0]), half_extents=np.array([0.2, 0.2, 0.2]))
    box_b = Box(center=np.array([-0.5, 0, 0]), half_extents=np.array([0.15, 0.3, 0.1]),
                yaw=0.7)
    eps = 0.02
    scene = SceneSpec(primitives=(box_a, box_b), contact_epsilon=eps)
    label = label_contact(HumanPointCloud(points=pts), scene)
    brute = ((box_a.signed_distance(pts) <= eps)
             | (box_b.signed_distance(pts) <= eps))
    assert np.array_equal(label.contact.astype(bool), brute)


def test_box_signed_distance_hand_values():
    box = Box(center=np.zeros(3), half_extents=np.array([1.0, 1.0, 1.0]))
    pts = np.array([
        [0, 0, 0],      # center: -1 (deep inside)
        [2, 0, 0],      # one unit outside a face
        [2, 2, 0],      # corner region: sqrt(2)
        [0, 0, 1],      # exactly on the surface
    ], dtype=float)
    sdf = box.signed_distance(pts)
    assert sdf[0] == pytest.approx(-1.0)
    assert sdf[1] == pytest.approx(1.0)
    assert sdf[2] == pytest.approx(math.sqrt(2))
    assert sdf[3] == pytest.approx(0.0)


def test_label_contact_permutation_equivariant(rng):
    pts = rng.uniform(-0.5, 0.5, size=(300, 3))
    scene = SceneSpec(primitives=(Plane(normal=np.array([0., 0., 1.]), offset=0.0),),
                      contact_epsilon=0.05)
    perm = rng.permutation(300)
    a = label_contact(HumanPointCloud(points=pts), scene).contact
    b = label_contact(HumanPointCloud(points=pts[perm]), scene).contact
    assert np.array_equal(b, a[perm])


# ---------------------------------------------------------------------------
# rendering

def test_render_empty_scene_no_body_all_background(rng):
    cam = look_at(np.array([0, 0, 2.0]), np.zeros(3), (32, 32), focal=30.0)
    image, mask = render_sample(np.zeros((0, 3)), np.zeros(0, dtype=np.int64),
                                SceneSpec(), cam, rng)
    assert image.shape == (32, 32, 3)
    assert np.all(mask.mask == 0)


def test_render_one_part_fills_frame(rng):
    # a densely sampled sphere right in front of a wide-angle camera
    sphere = make_capsule(4, [0, 0, 0], [0, 0, 0], 1.0)
    spec = ArticulatedBodySpec(parts=(sphere,), pose_seed=0)
    pts, ids = sample_body(spec, 30000, rng)
    cam = look_at(np.array([0, 0, 3.0]), np.zeros(3), (32, 32), focal=256.0)
    image, mask = render_sample(pts, ids, SceneSpec(), cam, rng, splat_radius=2)
    hist = np.bincount(mask.mask.ravel())
    assert hist[4] == 32 * 32


def test_render_out_of_frame_body_raises(rng):
    pts = np.tile(np.array([[100.0, 0, 0]]), (64, 1))
    cam = look_at(np.array([0, 0, 2.0]), np.zeros(3), (32, 32), focal=30.0)
    with pytest.raises(ValueError, match="out of frame"):
        render_sample(pts, np.ones(64, dtype=np.int64), SceneSpec(), cam, rng)


def test_render_two_part_projected_areas_within_2pct(rng):
    # two spheres on the optical axis at different depths: the near one owns
    # a centered disk, the far one the surrounding annulus, both with exact
    # analytic pixel areas (silhouette radius f*r/sqrt(d^2 - r^2), dilated
    # ~0.5 px by nearest-pixel splatting)
    far = make_capsule(1, [0, 0, 0], [0, 0, 0], 0.35)
    near = make_capsule(2, [0, 0, 2.0], [0, 0, 2.0], 0.12)
    spec = ArticulatedBodySpec(parts=(far, near), pose_seed=0)
    pts, ids = sample_body(spec, 150000, rng)
    h = w = 128
    eye_z = 4.0
    focal = 300.0
    cam = look_at(np.array([0, 0, eye_z]), np.zeros(3), (h, w), focal=focal)
    _, mask = render_sample(pts, ids, SceneSpec(), cam, rng, splat_radius=0)
    hist = np.bincount(mask.mask.ravel(), minlength=3)

    def silhouette_radius(r, d):
        return focal * r / math.sqrt(d ** 2 - r ** 2) + 0.5

    r_far = silhouette_radius(0.35, eye_z)
    r_near = silhouette_radius(0.12, eye_z - 2.0)
    expected_near = math.pi * r_near ** 2
    expected_far = math.pi * r_far ** 2 - expected_near
    assert abs(hist[2] - expected_near) / expected_near < 0.02, (hist[2], expected_near)
    assert abs(hist[1] - expected_far) / expected_far < 0.02, (hist[1], expected_far)


def test_fit_camera_keeps_cloud_in_frame(rng):
    pts = rng.normal(size=(500, 3))
    cam = fit_camera(pts, (64, 64), rng)
    u, v, z = cam.project(pts)
    assert np.all(z > 0)
    assert u.min() >= 0 and u.max() < 64 and v.min() >= 0 and v.max() < 64


# ---------------------------------------------------------------------------
# full generator

def test_generate_sample_deterministic():
    cfg = GeneratorConfig(n_points=128, image_size=(32, 32), num_parts=6)
    a = generate_sample(9, 4, cfg)
    b = generate_sample(9, 4, cfg)
    assert a == b


def test_generated_samples_validate_clean():
    cfg = GeneratorConfig(n_points=128, image_size=(32, 32), num_parts=6)
    for i in range(4):
        sample = generate_sample(21, i, cfg)
        report = validate_sample(sample)
        assert report.ok, report.violations


def test_generated_sample_has_some_contact():
    cfg = GeneratorConfig(n_points=256, image_size=(32, 32), num_parts=8)
    rates = [generate_sample(33, i, cfg).contact.contact.mean() for i in range(6)]
    assert all(r > 0 for r in rates)
    assert np.mean(rates) < 0.6  # contact stays the minority class overall


def test_body_min_z_analytic():
    spec = ArticulatedBodySpec(
        parts=(make_capsule(1, [0, 0, 0.5], [0, 0, 1.5], 0.2),), pose_seed=0)
    assert body_min_z(spec) == pytest.approx(0.3)

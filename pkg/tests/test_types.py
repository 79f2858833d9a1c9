import numpy as np
import pytest

from grace.types import (ContactLabel, ContactPrediction, ContactSample,
                         HumanPointCloud, ImageInput, MeshTopology, PartMask,
                         normalize_cloud, validate_sample)


def test_wellformed_sample_has_empty_report(tiny_sample):
    report = validate_sample(tiny_sample)
    assert report.ok
    assert report.violations == []


def test_contact_length_mismatch_reported(tiny_sample):
    broken = ContactSample(
        sample_id=tiny_sample.sample_id,
        image_u8=tiny_sample.image_u8,
        cloud=tiny_sample.cloud,
        contact=ContactLabel(contact=tiny_sample.contact.contact[:-1]),
        part_mask=tiny_sample.part_mask,
    )
    report = validate_sample(broken)
    assert not report.ok
    assert any("length" in v for v in report.violations)


def test_part_mask_value_out_of_range_reported(tiny_sample):
    mask = tiny_sample.part_mask.mask.copy()
    mask[0, 0] = tiny_sample.part_mask.num_parts + 1
    broken = ContactSample(
        sample_id=tiny_sample.sample_id,
        image_u8=tiny_sample.image_u8,
        cloud=tiny_sample.cloud,
        contact=tiny_sample.contact,
        part_mask=PartMask(mask=mask, num_parts=tiny_sample.part_mask.num_parts),
    )
    report = validate_sample(broken)
    assert not report.ok
    assert any("part mask" in v for v in report.violations)


def test_multiple_violations_all_reported(tiny_sample):
    mask = tiny_sample.part_mask.mask.copy()
    mask[0, 0] = 99
    broken = ContactSample(
        sample_id="x",
        image_u8=tiny_sample.image_u8,
        cloud=HumanPointCloud(points=tiny_sample.cloud.points[:32]),
        contact=ContactLabel(contact=np.array([0, 1, 2, 1], dtype=np.uint8)),
        part_mask=PartMask(mask=mask, num_parts=8),
    )
    report = validate_sample(broken)
    assert len(report.violations) >= 3


def test_image_standardization_zero_mean_unit_var(rng):
    img = rng.integers(0, 256, size=(32, 48, 3), dtype=np.uint8)
    x = ImageInput.from_u8(img).pixels
    assert x.shape == (3, 32, 48)
    assert np.allclose(x.mean(axis=(1, 2)), 0.0, atol=1e-5)
    assert np.allclose(x.std(axis=(1, 2)), 1.0, atol=1e-4)


def test_image_standardization_constant_channel():
    img = np.full((8, 8, 3), 77, dtype=np.uint8)
    x = ImageInput.from_u8(img).pixels
    assert np.all(x == 0.0)


def test_normalize_cloud_diagonal_and_permutation_bitexact(rng):
    pts = rng.normal(size=(200, 3)) * 0.7
    normalized, centroid, scale = normalize_cloud(pts)
    lo, hi = normalized.min(axis=0), normalized.max(axis=0)
    assert np.isclose(np.linalg.norm(hi - lo), 2.0, atol=1e-5)

    perm = rng.permutation(len(pts))
    normalized_p, centroid_p, scale_p = normalize_cloud(pts[perm])
    # identical values, not merely close: the centroid accumulates in a
    # canonical order
    assert np.array_equal(normalized_p, normalized[perm])
    assert np.array_equal(centroid_p, centroid)
    assert scale_p == scale


def test_normalize_cloud_degenerate_raises():
    with pytest.raises(ValueError):
        normalize_cloud(np.zeros((64, 3)))


def test_contact_prediction_threshold():
    pred = ContactPrediction.from_probs(np.array([0.1, 0.5, 0.9]), threshold=0.5)
    assert pred.binary.tolist() == [False, True, True]


def test_mesh_topology_edges_unique_and_lengths():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [1, 3, 2]])
    topo = MeshTopology.from_faces(faces, pts)
    assert len(topo.edges) == 5  # shared edge (1, 2) stored once
    for (a, b), length in zip(topo.edges, topo.edge_lengths):
        assert np.isclose(length, np.linalg.norm(pts[a] - pts[b]))

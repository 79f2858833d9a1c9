"""Shared data contracts for the contact-estimation pipeline.

Everything that crosses a module boundary is one of the value objects
defined here. They are plain dataclasses over numpy arrays, immutable by
convention (nothing mutates a sample after construction), so they can be
shared freely across threads.

Conventions:
    - point clouds are in meters, shape [N, 3]
    - images are either raw uint8 [H, W, 3] (on disk / in ContactSample)
      or normalized float32 [3, H, W] (ImageInput, what the network eats)
    - part masks are integer [H, W] with 0 = background, 1..J = body parts
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

DEFAULT_NUM_PARTS = 24
MIN_CLOUD_POINTS = 64
DEFAULT_CONTACT_THRESHOLD = 0.5

# Bounding-box diagonal every cloud is rescaled to before encoding.
NORMALIZED_DIAGONAL = 2.0


@dataclass(frozen=True)
class ImageInput:
    """Normalized RGB image, float32 [3, H, W], per-channel zero mean / unit variance."""

    pixels: np.ndarray

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @staticmethod
    def from_u8(image_u8: np.ndarray) -> "ImageInput":
        """Standardize an uint8 [H, W, 3] image per channel.

        Constant channels (std = 0) map to all zeros instead of dividing
        by zero.
        """
        if image_u8.ndim != 3 or image_u8.shape[2] != 3:
            raise ValueError(f"expected [H, W, 3] uint8 image, got {image_u8.shape}")
        x = image_u8.astype(np.float32).transpose(2, 0, 1)  # [3, H, W]
        mean = x.mean(axis=(1, 2), keepdims=True)
        std = x.std(axis=(1, 2), keepdims=True)
        x = (x - mean) / np.maximum(std, 1e-6)
        return ImageInput(pixels=x)


@dataclass(frozen=True)
class HumanPointCloud:
    """Human surface points in meters, [N, 3]. N >= MIN_CLOUD_POINTS."""

    points: np.ndarray
    source_tag: str = "arbitrary"  # "smpl_like" | "arbitrary"

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def bbox_diagonal(self) -> float:
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return float(np.linalg.norm(hi - lo))


def normalize_cloud(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Re-center a cloud to its centroid and rescale to NORMALIZED_DIAGONAL.

    The centroid is accumulated over a lexicographically sorted copy of the
    points, so the result is bit-identical under any permutation of the
    input rows. Every geometric decision downstream (sampling, grouping,
    interpolation) then sees the exact same coordinate values regardless of
    vertex order, which is what makes shuffled inputs reproduce unshuffled
    predictions.

    Returns (normalized [N, 3] float32, centroid [3], scale).
    """
    pts = np.asarray(points, dtype=np.float64)
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    centroid = pts[order].sum(axis=0) / len(pts)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if diag <= 0.0:
        raise ValueError("degenerate point cloud: bounding-box diagonal is zero")
    scale = NORMALIZED_DIAGONAL / diag
    normalized = ((pts - centroid) * scale).astype(np.float32)
    return normalized, centroid, scale


@dataclass(frozen=True)
class MeshTopology:
    """Triangle faces over a point cloud, plus derived Euclidean edge lengths.

    `edges` is [E, 2] with each undirected edge listed once (i < j);
    `edge_lengths` is [E] in meters.
    """

    faces: np.ndarray
    edges: np.ndarray
    edge_lengths: np.ndarray

    @staticmethod
    def from_faces(faces: np.ndarray, points: np.ndarray) -> "MeshTopology":
        faces = np.asarray(faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must be [F, 3], got {faces.shape}")
        e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0)
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0)
        lengths = np.linalg.norm(points[e[:, 0]] - points[e[:, 1]], axis=1)
        return MeshTopology(faces=faces, edges=e, edge_lengths=lengths)


@dataclass(frozen=True)
class ContactLabel:
    """Binary per-vertex contact ground truth, uint8 [N] with values in {0, 1}."""

    contact: np.ndarray

    @property
    def n_points(self) -> int:
        return self.contact.shape[0]


@dataclass(frozen=True)
class PartMask:
    """Per-pixel body-part ids, int [H, W], 0 = background, 1..J = parts."""

    mask: np.ndarray
    num_parts: int = DEFAULT_NUM_PARTS


@dataclass(frozen=True)
class FeatureGrid:
    """2D feature map [C, H', W'] at a known downsampling stride."""

    data: np.ndarray
    stride: int


@dataclass(frozen=True)
class PointFeatures:
    """Per-point features [C, N_p] with the matching subsampled coordinates.

    `coords` are in the model's normalized frame (see normalize_cloud);
    `sampling_index` maps each retained point back to its index in the
    original cloud, so coords == normalize_cloud(original)[sampling_index].
    """

    data: np.ndarray
    coords: np.ndarray
    sampling_index: np.ndarray


@dataclass(frozen=True)
class GlobalFeature:
    """Single pooled feature vector, stored as [1, C]."""

    data: np.ndarray


@dataclass(frozen=True)
class ContactPrediction:
    """Per-vertex contact probabilities plus the thresholded binary mask."""

    probs: np.ndarray
    binary: np.ndarray
    threshold: float = DEFAULT_CONTACT_THRESHOLD

    @staticmethod
    def from_probs(probs: np.ndarray, threshold: float = DEFAULT_CONTACT_THRESHOLD) -> "ContactPrediction":
        probs = np.asarray(probs, dtype=np.float32)
        return ContactPrediction(probs=probs, binary=probs >= threshold, threshold=threshold)


@dataclass
class ContactSample:
    """One paired record: image, cloud, contact label, part mask, optional topology.

    This mirrors the on-disk record format byte for byte (see grace.dataset);
    the image is kept as raw uint8 here and standardized to ImageInput only
    when fed to the network.
    """

    sample_id: str
    image_u8: np.ndarray          # uint8 [H, W, 3]
    cloud: HumanPointCloud
    contact: ContactLabel
    part_mask: PartMask
    faces: Optional[np.ndarray] = None  # uint32/int [F, 3] or None
    split: str = "train"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ContactSample):
            return NotImplemented
        same_faces = (
            (self.faces is None and other.faces is None)
            or (self.faces is not None and other.faces is not None
                and np.array_equal(self.faces, other.faces))
        )
        return (
            self.sample_id == other.sample_id
            and self.split == other.split
            and np.array_equal(self.image_u8, other.image_u8)
            and np.array_equal(self.cloud.points, other.cloud.points)
            and self.cloud.source_tag == other.cloud.source_tag
            and np.array_equal(self.contact.contact, other.contact.contact)
            and np.array_equal(self.part_mask.mask, other.part_mask.mask)
            and self.part_mask.num_parts == other.part_mask.num_parts
            and same_faces
        )


@dataclass
class ValidationReport:
    """Accumulated invariant violations for one sample. Empty means valid."""

    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)


def validate_sample(sample: ContactSample) -> ValidationReport:
    """Check every declared invariant of a ContactSample.

    Collects all violations rather than stopping at the first, so a report
    for a broken sample names everything that is wrong with it.
    """
    report = ValidationReport()

    img = sample.image_u8
    if img.ndim != 3 or img.shape[2] != 3:
        report.add(f"image: expected [H, W, 3], got shape {img.shape}")
    elif img.shape[0] <= 0 or img.shape[1] <= 0:
        report.add("image: H and W must be positive")
    if img.dtype != np.uint8:
        report.add(f"image: expected uint8, got {img.dtype}")

    pts = sample.cloud.points
    n = pts.shape[0] if pts.ndim == 2 else -1
    if pts.ndim != 2 or pts.shape[1] != 3:
        report.add(f"cloud: expected [N, 3], got shape {pts.shape}")
    else:
        if n < MIN_CLOUD_POINTS:
            report.add(f"cloud: N = {n} below minimum {MIN_CLOUD_POINTS}")
        if not np.all(np.isfinite(pts)):
            report.add("cloud: non-finite coordinates")
        elif n > 0 and float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))) <= 0.0:
            report.add("cloud: bounding-box diagonal is zero")
    if sample.cloud.source_tag not in ("smpl_like", "arbitrary"):
        report.add(f"cloud: unknown source_tag {sample.cloud.source_tag!r}")

    contact = sample.contact.contact
    if contact.ndim != 1:
        report.add(f"contact: expected 1-d vector, got shape {contact.shape}")
    else:
        if n >= 0 and contact.shape[0] != n:
            report.add(f"contact: length {contact.shape[0]} does not match cloud size {n}")
        bad = ~np.isin(contact, (0, 1))
        if bad.any():
            report.add(f"contact: {int(bad.sum())} values outside {{0, 1}}")

    mask = sample.part_mask.mask
    num_parts = sample.part_mask.num_parts
    if mask.ndim != 2:
        report.add(f"part mask: expected [H, W], got shape {mask.shape}")
    else:
        if img.ndim == 3 and mask.shape != img.shape[:2]:
            report.add(f"part mask: shape {mask.shape} does not match image {img.shape[:2]}")
        if mask.min(initial=0) < 0 or mask.max(initial=0) > num_parts:
            report.add(
                f"part mask: values must lie in [0, {num_parts}], "
                f"found range [{int(mask.min())}, {int(mask.max())}]"
            )

    if sample.faces is not None:
        faces = np.asarray(sample.faces)
        if faces.ndim != 2 or faces.shape[1] != 3:
            report.add(f"faces: expected [F, 3], got shape {faces.shape}")
        elif n >= 0:
            if faces.min(initial=0) < 0 or faces.max(initial=-1) >= n:
                report.add("faces: vertex index out of range")
            else:
                topo = MeshTopology.from_faces(faces, pts)
                degenerate = int((topo.edge_lengths <= 0.0).sum())
                if degenerate:
                    report.add(f"faces: {degenerate} zero-length edges")

    return report

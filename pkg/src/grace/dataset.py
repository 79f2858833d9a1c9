"""On-disk dataset format and (de)serialization.

Layout::

    <root>/
      manifest.json
      <sample_id>/
        image.png      8-bit RGB
        points.bin     16-byte header + float32 payload (see below)
        contact.bin    one uint8 per vertex, values in {0, 1}
        partmask.png   8-bit single channel, pixel value = part id (0 = background)
        faces.bin      optional, uint32 triples (vertex indices)

points.bin header, little-endian, 16 bytes total:
    bytes 0-3   magic b"GRPC"
    bytes 4-7   uint32 N        number of points
    bytes 8-11  uint32 dims     coordinate dimensionality (3)
    bytes 12-15 uint32 reserved (written as 0, ignored on read)
followed by N * dims little-endian float32 values, row major.

manifest.json lists every sample id with its split plus the generation
parameters. All writes are deterministic: same samples in, same bytes out.
"""

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .types import ContactLabel, ContactSample, HumanPointCloud, PartMask

POINTS_MAGIC = b"GRPC"
MANIFEST_NAME = "manifest.json"


def write_points(path: Path, points: np.ndarray) -> None:
    points = np.ascontiguousarray(points, dtype="<f4")
    n, dims = points.shape
    with open(path, "wb") as fh:
        fh.write(POINTS_MAGIC)
        fh.write(struct.pack("<III", n, dims, 0))
        fh.write(points.tobytes())


def read_points(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != POINTS_MAGIC:
            raise ValueError(f"{path}: not a point-cloud file (bad magic)")
        n, dims, _ = struct.unpack("<III", header[4:])
        payload = fh.read(4 * n * dims)
    if len(payload) != 4 * n * dims:
        raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(n, dims).copy()


def write_sample(root: Path, sample: ContactSample) -> Path:
    """Write one sample directory under root; returns its path."""
    sdir = Path(root) / sample.sample_id
    sdir.mkdir(parents=True, exist_ok=True)
    Image.fromarray(sample.image_u8, mode="RGB").save(sdir / "image.png")
    write_points(sdir / "points.bin", sample.cloud.points)
    (sdir / "contact.bin").write_bytes(
        np.ascontiguousarray(sample.contact.contact, dtype=np.uint8).tobytes()
    )
    mask = np.ascontiguousarray(sample.part_mask.mask, dtype=np.uint8)
    Image.fromarray(mask, mode="L").save(sdir / "partmask.png")
    if sample.faces is not None:
        (sdir / "faces.bin").write_bytes(
            np.ascontiguousarray(sample.faces, dtype="<u4").tobytes()
        )
    return sdir


def read_sample(root: Path, sample_id: str, split: str = "train",
                num_parts: int = 24) -> ContactSample:
    sdir = Path(root) / sample_id
    image = np.asarray(Image.open(sdir / "image.png").convert("RGB"), dtype=np.uint8)
    points = read_points(sdir / "points.bin")
    contact = np.frombuffer((sdir / "contact.bin").read_bytes(), dtype=np.uint8).copy()
    mask = np.asarray(Image.open(sdir / "partmask.png"), dtype=np.uint8).astype(np.int64)
    faces = None
    faces_path = sdir / "faces.bin"
    if faces_path.exists():
        faces = np.frombuffer(faces_path.read_bytes(), dtype="<u4").reshape(-1, 3).copy()
    return ContactSample(
        sample_id=sample_id,
        image_u8=image,
        cloud=HumanPointCloud(points=points.astype(np.float32)),
        contact=ContactLabel(contact=contact),
        part_mask=PartMask(mask=mask, num_parts=num_parts),
        faces=faces,
        split=split,
    )


def write_manifest(root: Path, entries: list[dict], meta: dict) -> None:
    """entries: [{"id": ..., "split": ...}, ...]; meta: generation parameters."""
    manifest = {"format_version": 1, **meta, "samples": entries}
    path = Path(root) / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(root: Path) -> dict:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST_NAME} under {root}")
    return json.loads(path.read_text())


def load_split(root: Path, split: str) -> list[ContactSample]:
    """Load all samples of one split, in manifest order."""
    root = Path(root)
    manifest = read_manifest(root)
    num_parts = int(manifest.get("num_parts", 24))
    samples = [
        read_sample(root, entry["id"], split=entry["split"], num_parts=num_parts)
        for entry in manifest["samples"]
        if entry["split"] == split
    ]
    return samples

"""Colored point-cloud export for downstream viewers.

Binary little-endian PLY with per-vertex uchar RGB: predicted contact
vertices are highlighted yellow, the rest stay a neutral body tone, with
probability blended in so soft predictions read as intermediate shades.
"""

import struct
from pathlib import Path

import numpy as np

CONTACT_COLOR = np.array([235, 220, 60], dtype=np.float64)
BODY_COLOR = np.array([140, 150, 165], dtype=np.float64)


def contact_colors(probs: np.ndarray, threshold: float | None = None) -> np.ndarray:
    """[N, 3] uint8 colors blending body tone -> highlight with probability.

    With a threshold, coloring is binarized instead: vertices at or above it
    get the full highlight, the rest the plain body tone.
    """
    p = np.clip(np.asarray(probs, dtype=np.float64), 0.0, 1.0)[:, None]
    if threshold is not None:
        p = (p >= threshold).astype(np.float64)
    return np.clip(BODY_COLOR * (1 - p) + CONTACT_COLOR * p, 0, 255).astype(np.uint8)


def write_contact_ply(path: Path, points: np.ndarray, probs: np.ndarray,
                      threshold: float | None = None) -> Path:
    points = np.asarray(points, dtype="<f4")
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"points must be [N, 3], got {points.shape}")
    if len(probs) != len(points):
        raise ValueError("probability vector length does not match point count")
    colors = contact_colors(probs, threshold)
    header = "\n".join([
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {len(points)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]) + "\n"
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for xyz, rgb in zip(points, colors):
            fh.write(struct.pack("<fffBBB", *xyz, *rgb))
    return path


def read_ply_vertex_count(path: Path) -> int:
    """Cheap sanity helper: vertex count declared in a PLY header."""
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.decode("ascii", errors="replace").strip()
            if line.startswith("element vertex"):
                return int(line.split()[-1])
            if line == "end_header":
                break
    raise ValueError(f"{path}: no vertex element found")

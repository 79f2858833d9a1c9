"""Canonical point-cloud sampling, grouping, and interpolation.

These routines decide *which* points talk to which, so they are the part
of the pipeline that has to be a pure function of the point set rather
than of the array order. All selection rules are therefore canonical:

    - farthest-point sampling seeds at the lexicographically smallest
      (x, y, z) and breaks max-min-distance ties lexicographically on
      coordinates, never on input indices;
    - ball query orders neighbors by (distance, then lexicographic
      coordinates) before capping at k;
    - k-NN interpolation breaks distance ties by source position, which
      is already canonical because sources come out of FPS in selection
      order.

Feed two permutations of the same cloud through build_pyramid and you get
the same sampled coordinates, the same neighbor coordinate sets, and the
same interpolation stencils, which is what makes the network's outputs
independent of vertex order.

Everything here is index bookkeeping with no learnable state; the results
are cached per cloud (a PointPyramid) and reused across training steps.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

CHUNK = 128  # centers per distance-matrix block


def _lex_smallest(points: np.ndarray, candidates: np.ndarray) -> int:
    sub = points[candidates]
    best = np.lexsort((sub[:, 2], sub[:, 1], sub[:, 0]))[0]
    return int(candidates[best])


def _lex_rank(points: np.ndarray) -> np.ndarray:
    rank = np.empty(len(points), dtype=np.int64)
    rank[np.lexsort((points[:, 2], points[:, 1], points[:, 0]))] = np.arange(len(points))
    return rank


def _sq_dists(centers: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Exact pairwise squared distances [len(centers), len(points)]."""
    diff = centers[:, None, :] - points[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def farthest_point_sample(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of k farthest-point samples, in selection order.

    Deterministic for a given point *set*: the seed is the lexicographically
    smallest coordinate and max-min-distance ties fall back to the same
    lexicographic rule, so any permutation of the input rows selects the
    same coordinate sequence.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"cannot sample k = {k} from {n} points")
    out = np.empty(k, dtype=np.int64)
    selected = np.zeros(n, dtype=bool)
    seed = _lex_smallest(pts, np.arange(n))
    out[0] = seed
    selected[seed] = True
    min_d2 = ((pts - pts[seed]) ** 2).sum(axis=1)
    for i in range(1, k):
        m = min_d2[~selected].max()
        cand = np.flatnonzero((min_d2 == m) & ~selected)
        nxt = int(cand[0]) if cand.size == 1 else _lex_smallest(pts, cand)
        out[i] = nxt
        selected[nxt] = True
        np.minimum(min_d2, ((pts - pts[nxt]) ** 2).sum(axis=1), out=min_d2)
    return out


def ball_query(points: np.ndarray, centers: np.ndarray, radius: float, k: int) -> np.ndarray:
    """Up to k neighbors of each center within `radius`, nearest first.

    Ties in distance are broken lexicographically on neighbor coordinates.
    An empty ball falls back to the single nearest neighbor; short balls are
    padded by repeating the nearest member (harmless under max pooling).
    Returns [S, k] indices into `points`.
    """
    pts = np.asarray(points, dtype=np.float64)
    ctr = np.asarray(centers, dtype=np.float64)
    rank = _lex_rank(pts)
    r2 = float(radius) ** 2
    out = np.empty((len(ctr), k), dtype=np.int64)
    for start in range(0, len(ctr), CHUNK):
        block = ctr[start:start + CHUNK]
        d2 = _sq_dists(block, pts)
        for row in range(len(block)):
            order = np.lexsort((rank, d2[row]))
            inside = order[d2[row][order] <= r2][:k]
            if inside.size == 0:
                inside = order[:1]
            if inside.size < k:
                inside = np.concatenate(
                    [inside, np.full(k - inside.size, inside[0], dtype=np.int64)]
                )
            out[start + row] = inside
    return out


def interpolation_stencil(sources: np.ndarray, queries: np.ndarray, k: int = 3,
                          eps: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-distance-weighted k-NN stencil for interpolating source
    features onto query positions.

    Weights are 1 / (d^2 + eps), normalized per query; a query sitting on a
    source therefore takes essentially that source's feature. Returns
    (indices [Q, k'], weights [Q, k']) with k' = min(k, len(sources)).
    """
    src = np.asarray(sources, dtype=np.float64)
    qry = np.asarray(queries, dtype=np.float64)
    k_eff = min(k, len(src))
    idx = np.empty((len(qry), k_eff), dtype=np.int64)
    w = np.empty((len(qry), k_eff), dtype=np.float64)
    for start in range(0, len(qry), CHUNK):
        d2 = _sq_dists(qry[start:start + CHUNK], src)
        sel = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]
        d2sel = np.take_along_axis(d2, sel, axis=1)
        ww = 1.0 / (d2sel + eps)
        ww /= ww.sum(axis=1, keepdims=True)
        idx[start:start + len(sel)] = sel
        w[start:start + len(sel)] = ww
    return idx, w.astype(np.float32)


# ---------------------------------------------------------------------------
# multi-level pyramid

@dataclass(frozen=True)
class PyramidLevel:
    """One resolution level. Level 0 is the raw cloud in input order; deeper
    levels are FPS subsets in canonical selection order."""

    coords: torch.Tensor                  # [n, 3] float32
    index_in_prev: torch.Tensor           # [n] long (level 0: arange)
    index_in_original: torch.Tensor       # [n] long into the raw cloud
    neighbor_idx: Optional[torch.Tensor]  # [n, k] long into previous level


@dataclass(frozen=True)
class PointPyramid:
    levels: tuple[PyramidLevel, ...]
    # interp[j]: (idx, w) carrying level j+1 features onto level j coords
    interp: tuple[tuple[torch.Tensor, torch.Tensor], ...]

    @property
    def n_points(self) -> int:
        return self.levels[0].coords.shape[0]


def build_pyramid(normalized_points: np.ndarray,
                  levels: list[tuple[int, float, int]]) -> PointPyramid:
    """Precompute sampling, grouping, and interpolation for one cloud.

    `levels` is a list of (n_sampled, ball_radius, neighbors_k) tuples,
    n_sampled strictly decreasing and radii nondecreasing. Raises if any
    n_sampled exceeds the available points at that level.
    """
    pts = np.asarray(normalized_points, dtype=np.float32)
    counts = [n for n, _, _ in levels]
    radii = [r for _, r, _ in levels]
    if any(b >= a for a, b in zip(counts, counts[1:])):
        raise ValueError(f"level sizes must strictly decrease, got {counts}")
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ValueError(f"ball radii must not decrease, got {radii}")

    out_levels = [PyramidLevel(
        coords=torch.from_numpy(pts.copy()),
        index_in_prev=torch.arange(len(pts)),
        index_in_original=torch.arange(len(pts)),
        neighbor_idx=None,
    )]
    prev = pts
    prev_orig = np.arange(len(pts), dtype=np.int64)
    for n_sampled, radius, k in levels:
        if n_sampled > len(prev):
            raise ValueError(
                f"n_sampled = {n_sampled} exceeds the {len(prev)} points "
                f"available at this level"
            )
        fps_idx = farthest_point_sample(prev, n_sampled)
        coords = prev[fps_idx]
        neighbors = ball_query(prev, coords, radius, min(k, len(prev)))
        prev_orig = prev_orig[fps_idx]
        out_levels.append(PyramidLevel(
            coords=torch.from_numpy(coords.copy()),
            index_in_prev=torch.from_numpy(fps_idx),
            index_in_original=torch.from_numpy(prev_orig.copy()),
            neighbor_idx=torch.from_numpy(neighbors),
        ))
        prev = coords

    interp = []
    for lvl in range(len(out_levels) - 1):
        idx, w = interpolation_stencil(out_levels[lvl + 1].coords.numpy(),
                                       out_levels[lvl].coords.numpy(), k=3)
        interp.append((torch.from_numpy(idx), torch.from_numpy(w)))
    return PointPyramid(levels=tuple(out_levels), interp=tuple(interp))

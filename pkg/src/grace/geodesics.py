"""Geodesic distances along mesh edges, the substrate of the geometric
error metrics.

A GeodesicIndex is an immutable weighted edge graph over the vertices:
built from triangle faces when the sample has a mesh, or from a symmetric
k-NN graph (k = 6 by default) when it is a bare point cloud. Distance
queries are exact multi-source Dijkstra runs (scipy's csgraph); distances
are returned in centimeters because that is the unit the error metrics
report.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .types import MeshTopology

METERS_TO_CM = 100.0
DEFAULT_KNN = 6


@dataclass(frozen=True)
class GeodesicIndex:
    """Symmetric nonnegative edge weights (meters) over N vertices."""

    graph: sparse.csr_matrix
    n_vertices: int
    source: str  # "faces" | "knn6" etc., surfaced in reports

    @staticmethod
    def from_topology(topology: MeshTopology, n_vertices: int) -> "GeodesicIndex":
        e = topology.edges
        w = topology.edge_lengths
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        weights = np.concatenate([w, w])
        graph = sparse.csr_matrix((weights, (rows, cols)), shape=(n_vertices, n_vertices))
        return GeodesicIndex(graph=graph, n_vertices=n_vertices, source="faces")

    @staticmethod
    def from_cloud(points: np.ndarray, k: int = DEFAULT_KNN) -> "GeodesicIndex":
        """Symmetric k-NN graph as a topology substitute for bare clouds."""
        pts = np.asarray(points, dtype=np.float64)
        n = len(pts)
        k_eff = min(k, n - 1)
        tree = cKDTree(pts)
        dist, idx = tree.query(pts, k=k_eff + 1)  # first hit is the point itself
        rows = np.repeat(np.arange(n), k_eff)
        cols = idx[:, 1:].ravel()
        weights = dist[:, 1:].ravel()
        # symmetrize: keep each undirected edge once with its length
        a = np.minimum(rows, cols)
        b = np.maximum(rows, cols)
        order = np.lexsort((b, a))
        a, b, weights = a[order], b[order], weights[order]
        keep = np.ones(len(a), dtype=bool)
        keep[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
        a, b, weights = a[keep], b[keep], weights[keep]
        graph = sparse.csr_matrix(
            (np.concatenate([weights, weights]),
             (np.concatenate([a, b]), np.concatenate([b, a]))),
            shape=(n, n),
        )
        return GeodesicIndex(graph=graph, n_vertices=n, source=f"knn{k_eff}")

    def distances_cm(self, sources: np.ndarray) -> np.ndarray:
        """Multi-source shortest-path distance from the nearest source, in cm.

        Unreachable vertices come back as +inf; callers apply the penalty cap.
        """
        sources = np.asarray(sources)
        if sources.dtype == bool:
            sources = np.flatnonzero(sources)
        if sources.size == 0:
            raise ValueError("source set is empty")
        dist = dijkstra(self.graph, directed=False, indices=sources, min_only=True)
        return dist * METERS_TO_CM

    @cached_property
    def penalty_cap_cm(self) -> float:
        """Per-mesh maximum geodesic distance, estimated by a double sweep:
        run from vertex 0, then from the farthest reachable vertex found.
        Substitutes for distances that do not exist (empty reference set,
        disconnected vertices)."""
        first = dijkstra(self.graph, directed=False, indices=0, min_only=True)
        finite = np.isfinite(first)
        far = int(np.argmax(np.where(finite, first, -np.inf)))
        second = dijkstra(self.graph, directed=False, indices=far, min_only=True)
        cap = float(np.max(second[np.isfinite(second)]))
        return cap * METERS_TO_CM

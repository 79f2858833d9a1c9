import heapq

import numpy as np
import pytest
from scipy.spatial import Delaunay

from grace.geodesics import GeodesicIndex
from grace.types import MeshTopology


def dijkstra_oracle(n, edges, lengths, source):
    """Hand-rolled single-source Dijkstra over an undirected edge list."""
    adj = [[] for _ in range(n)]
    for (a, b), w in zip(edges, lengths):
        adj[a].append((b, w))
        adj[b].append((a, w))
    dist = np.full(n, np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def random_mesh(seed, n_vertices):
    """Random planar Delaunay triangulation lifted to a bumpy surface."""
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 1, size=(n_vertices, 2))
    z = 0.3 * np.sin(4 * xy[:, 0]) * np.cos(3 * xy[:, 1]) + 0.05 * rng.normal(size=n_vertices)
    pts = np.column_stack([xy, z])
    faces = Delaunay(xy).simplices
    return pts, faces


def test_all_sources_gives_zero():
    pts, faces = random_mesh(0, 50)
    index = GeodesicIndex.from_topology(MeshTopology.from_faces(faces, pts), len(pts))
    dist = index.distances_cm(np.arange(len(pts)))
    assert np.all(dist == 0.0)


def test_three_vertex_path_hand_value():
    # collinear vertices with unit meter spacing; geodesic v0 -> v2 is 2 m
    pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
    faces = np.array([[0, 1, 2]])
    index = GeodesicIndex.from_topology(MeshTopology.from_faces(faces, pts), 3)
    dist = index.distances_cm(np.array([0]))
    assert dist[1] == pytest.approx(100.0)
    assert dist[2] == pytest.approx(200.0)


def test_empty_source_set_raises():
    pts, faces = random_mesh(1, 30)
    index = GeodesicIndex.from_topology(MeshTopology.from_faces(faces, pts), len(pts))
    with pytest.raises(ValueError, match="empty"):
        index.distances_cm(np.array([], dtype=int))


@pytest.mark.parametrize("seed", range(5))
def test_multisource_matches_bruteforce_exactly(seed):
    pts, faces = random_mesh(seed, 120)
    topo = MeshTopology.from_faces(faces, pts)
    index = GeodesicIndex.from_topology(topo, len(pts))
    rng = np.random.default_rng(seed + 1000)
    sources = rng.choice(len(pts), size=5, replace=False)
    ours = index.distances_cm(sources)
    per_source = np.stack([
        dijkstra_oracle(len(pts), topo.edges, topo.edge_lengths, s) for s in sources
    ])
    oracle = per_source.min(axis=0) * 100.0
    assert np.array_equal(ours, oracle)


def test_triangle_inequality_on_sampled_triples():
    pts, faces = random_mesh(9, 150)
    index = GeodesicIndex.from_topology(MeshTopology.from_faces(faces, pts), len(pts))
    rng = np.random.default_rng(2)
    all_dist = {v: index.distances_cm(np.array([v])) for v in range(len(pts))}
    for _ in range(300):
        a, b, c = rng.choice(len(pts), size=3, replace=False)
        # 1e-9 slack absorbs float summation along alternate paths
        assert all_dist[a][c] <= all_dist[a][b] + all_dist[b][c] + 1e-9


def test_knn_index_symmetric_and_connected(rng):
    pts = rng.normal(size=(200, 3))
    index = GeodesicIndex.from_cloud(pts, k=6)
    assert index.source == "knn6"
    asym = (index.graph - index.graph.T)
    assert abs(asym).max() == 0.0
    dist = index.distances_cm(np.array([0]))
    assert np.all(np.isfinite(dist))  # gaussian blob: 6-NN graph is connected


def test_disconnected_mesh_unreachable_is_inf():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0],
                    [10, 10, 10], [11, 10, 10], [10, 11, 10]], dtype=float)
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    index = GeodesicIndex.from_topology(MeshTopology.from_faces(faces, pts), 6)
    dist = index.distances_cm(np.array([0]))
    assert np.all(np.isinf(dist[3:]))
    assert index.penalty_cap_cm > 0


def test_penalty_cap_is_mesh_scale():
    pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [1, 2, 3]])
    index = GeodesicIndex.from_topology(MeshTopology.from_faces(faces, pts), 4)
    assert index.penalty_cap_cm == pytest.approx(300.0)

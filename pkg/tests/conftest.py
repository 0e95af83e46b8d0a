import numpy as np
import pytest

from cfgraph import Graph, SbmSpec, generate_sbm


@pytest.fixture(scope="session")
def homophilous():
    return generate_sbm(SbmSpec(n=300, num_classes=2, p_in=0.05, p_out=0.005, seed=0))


@pytest.fixture(scope="session")
def heterophilous():
    return generate_sbm(SbmSpec(n=300, num_classes=2, p_in=0.02, p_out=0.04, seed=2))


def random_graph(rng, n, p):
    iu = np.triu_indices(n, k=1)
    keep = rng.random(len(iu[0])) < p
    return Graph.from_edges(n, np.stack([iu[0][keep], iu[1][keep]], axis=1))


def dense_adjacency(g):
    A = np.zeros((g.n, g.n))
    if g.num_edges:
        A[g.edges[:, 0], g.edges[:, 1]] = 1.0
        A[g.edges[:, 1], g.edges[:, 0]] = 1.0
    return A


def dense_prop(g):
    """Independent Ã oracle from the dense adjacency."""
    A = dense_adjacency(g) + np.eye(g.n)
    d = A.sum(axis=1)
    return A / np.sqrt(np.outer(d, d))


def bfs_distances(g, seeds):
    """Plain-Python multi-source BFS distances (inf when unreachable)."""
    A = dense_adjacency(g)
    dist = np.full(g.n, np.inf)
    frontier = list(seeds)
    for s in frontier:
        dist[s] = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(A[u]):
                if dist[v] == np.inf:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist

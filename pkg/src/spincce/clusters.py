"""Neighbor graph over bath spins and connected-cluster enumeration."""
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class NeighborGraph:
    n: int
    edges: np.ndarray  # (m, 2) with i < j, lexicographically sorted
    r_dipole: float

    @property
    def adjacency(self):
        adj = [set() for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].add(int(j))
            adj[j].add(int(i))
        return adj

    @classmethod
    def from_edges(cls, n, edges, r_dipole=np.nan):
        e = np.sort(np.asarray(edges, dtype=int).reshape(-1, 2), axis=1)
        e = np.unique(e, axis=0) if len(e) else e
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        return cls(int(n), e, r_dipole)


def build_graph(positions, r_dipole):
    """Edges between all spin pairs closer than or at ``r_dipole`` (angstrom).

    Accepts a BathArray or an (n, 3) array of positions.
    """
    if r_dipole <= 0:
        raise ValueError("r_dipole must be positive")
    positions = np.asarray(getattr(positions, "positions", positions), dtype=float).reshape(-1, 3)
    n = len(positions)
    if n < 2:
        return NeighborGraph(n, np.empty((0, 2), dtype=int), r_dipole)
    pairs = cKDTree(positions).query_pairs(r_dipole, output_type="ndarray")
    if len(pairs):
        pairs = np.sort(pairs, axis=1)
        pairs = pairs[np.lexsort(pairs.T[::-1])]
    return NeighborGraph(n, pairs.reshape(-1, 2).astype(int), r_dipole)


class ClusterSet:
    """Connected clusters grouped by size; each cluster is a sorted index tuple."""

    def __init__(self, by_size):
        self.by_size = {}
        for k, arr in sorted(by_size.items()):
            arr = np.asarray(arr, dtype=int).reshape(-1, k)
            if len(arr):
                arr = arr[np.lexsort(arr.T[::-1])]
            self.by_size[k] = arr
        self._members = {tuple(int(i) for i in c) for arr in self.by_size.values() for c in arr}

    @property
    def order(self):
        return max(self.by_size, default=0)

    def __contains__(self, cluster):
        return tuple(cluster) in self._members

    def __len__(self):
        return len(self._members)

    def __iter__(self):
        for k in sorted(self.by_size):
            for c in self.by_size[k]:
                yield tuple(int(i) for i in c)

    def counts(self):
        return {k: len(v) for k, v in self.by_size.items()}

    def subclusters(self, cluster):
        """Proper non-empty subsets of ``cluster`` that are themselves clusters of the set."""
        cluster = tuple(cluster)
        if cluster not in self._members:
            raise KeyError(f"{cluster} is not a member of the cluster set")
        out = []
        for k in range(1, len(cluster)):
            out.extend(sub for sub in combinations(cluster, k) if sub in self._members)
        return out

    def dumps(self):
        """One cluster per line, space-separated sorted indices."""
        return "".join(" ".join(map(str, c)) + "\n" for c in self)

    @classmethod
    def loads(cls, text):
        by_size = {}
        for line in text.splitlines():
            if line.strip():
                c = tuple(int(v) for v in line.split())
                by_size.setdefault(len(c), []).append(c)
        return cls(by_size)


def _esu(adj, order, anchor, sub, ext, nbhd, out):
    out.append(tuple(sorted(sub)))
    if len(sub) == order:
        return
    ext = sorted(ext)
    while ext:
        w = ext.pop()
        new_ext = set(ext)
        new_ext.update(u for u in adj[w] if u > anchor and u not in sub and u not in nbhd)
        _esu(adj, order, anchor, sub | {w}, new_ext, nbhd | adj[w], out)


def enumerate_clusters(graph, order):
    """All connected induced subgraphs with at most ``order`` vertices.

    Each cluster is grown once from its smallest index (anchor), extending only with
    neighbors larger than the anchor that are not adjacent to the current cluster.
    Isolated vertices are always present as singletons.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    adj = graph.adjacency
    found = []
    for v in range(graph.n):
        ext = {u for u in adj[v] if u > v}
        _esu(adj, order, v, {v}, ext, adj[v] | {v}, found)
    by_size = {k: [] for k in range(1, order + 1)}
    for c in found:
        by_size[len(c)].append(c)
    return ClusterSet({k: v for k, v in by_size.items() if v or k == 1})


def is_connected(cluster, adjacency):
    cluster = set(cluster)
    if not cluster:
        return False
    start = next(iter(cluster))
    seen, stack = {start}, [start]
    while stack:
        u = stack.pop()
        for w in adjacency[u] & cluster:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen == cluster

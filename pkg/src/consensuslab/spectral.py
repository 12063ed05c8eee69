"""Graphs, Laplacians, and the dense symmetric eigensolver.

Undirected simple graphs are stored as canonical edge lists; Laplacians are
dense ``L = D - A`` matrices with a lazily computed, cached spectrum.  The
eigensolver is a self-contained cyclic Jacobi sweep: robust for the dense
symmetric matrices used here (N up to a couple thousand) and free of any
dependence on a packaged eigensolver, which tests instead use as an
independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import EigensolverError, GraphGenerationError
from .streams import GRAPH, RngStream

# Relative tolerance used everywhere a spectral quantity is compared to zero.
SPECTRAL_TOL = 1e-8


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes 0..node_count-1.

    Edges are canonicalized to sorted (u, v) pairs with u < v, deduplicated,
    and stored sorted.  Self-loops and out-of-range endpoints are rejected.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        n = self.node_count
        if n < 1:
            raise ValueError(f"node_count must be >= 1, got {n}")
        canon = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for {n} nodes")
            canon.append((u, v) if u < v else (v, u))
        canon.sort()
        for a, b in zip(canon, canon[1:]):
            if a == b:
                raise ValueError(f"duplicate edge {a}")
        object.__setattr__(self, "edges", tuple(canon))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint arrays (u, v) with u < v, in canonical edge order."""
        if not self.edges:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty.copy()
        arr = np.asarray(self.edges, dtype=np.int64)
        u, v = arr[:, 0].copy(), arr[:, 1].copy()
        u.setflags(write=False)
        v.setflags(write=False)
        return u, v

    @cached_property
    def degrees(self) -> np.ndarray:
        u, v = self.edge_arrays
        deg = np.bincount(u, minlength=self.node_count) + np.bincount(
            v, minlength=self.node_count
        )
        deg = deg.astype(np.int64)
        deg.setflags(write=False)
        return deg

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.node_count else 0


def path_graph(n: int) -> Graph:
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError("cycle needs at least 3 nodes")
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


def complete_graph(n: int) -> Graph:
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def jacobi_eigh(
    matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a dense symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns).  Converges when
    the off-diagonal Frobenius norm drops below ``tol`` times the Frobenius
    norm of the input; raises EigensolverError with the residual if the sweep
    limit is reached first.
    """
    a = np.array(matrix, dtype=np.float64, copy=True)
    n = a.shape[0]
    if a.ndim != 2 or a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.abs(a).max()) if n else 0.0)
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * scale):
        raise ValueError("matrix is not symmetric")
    a = (a + a.T) / 2.0
    vec = np.eye(n)
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        return np.zeros(n), vec

    def _off(m: np.ndarray) -> float:
        # Strict lower triangle, doubled: immune to the cancellation that a
        # full-norm-minus-diagonal formula hits once off-diagonals are tiny.
        lower = np.tril(m, -1)
        return math.sqrt(2.0 * float(np.sum(lower * lower)))

    # Rotations on entries this small cannot affect the convergence target.
    skip = tol * norm / (2.0 * n)
    off = _off(a)
    for _ in range(max_sweeps):
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                tau = float(a[q, q] - a[p, p]) / (2.0 * float(apq))
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vcol_p = vec[:, p].copy()
                vcol_q = vec[:, q].copy()
                vec[:, p] = c * vcol_p - s * vcol_q
                vec[:, q] = s * vcol_p + c * vcol_q
        off = _off(a)
    else:
        raise EigensolverError(off, max_sweeps)

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], vec[:, order]


class Laplacian:
    """Dense symmetric Laplacian-like matrix with cached spectrum.

    Accepts any symmetric matrix whose rows sum to zero (weighted mean
    Laplacians included).  The spectrum is computed once on first use.
    """

    def __init__(self, matrix: np.ndarray):
        a = np.array(matrix, dtype=np.float64, copy=True)
        n = a.shape[0]
        if a.ndim != 2 or a.shape != (n, n):
            raise ValueError(f"Laplacian must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("Laplacian has non-finite entries")
        scale = max(1.0, float(np.abs(a).max()) if n else 0.0)
        if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * scale):
            raise ValueError("Laplacian is not symmetric")
        rowsums = a.sum(axis=1)
        if not np.allclose(rowsums, 0.0, rtol=0.0, atol=1e-8 * scale):
            worst = int(np.abs(rowsums).argmax())
            raise ValueError(f"row {worst} sums to {rowsums[worst]:.3e}, expected 0")
        a = (a + a.T) / 2.0
        a.setflags(write=False)
        self.matrix = a

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def _eigh(self) -> tuple[np.ndarray, np.ndarray]:
        w, v = jacobi_eigh(self.matrix)
        w.setflags(write=False)
        v.setflags(write=False)
        return w, v

    @property
    def eigenvalues(self) -> np.ndarray:
        """All eigenvalues, ascending."""
        return self._eigh[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._eigh[1]

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x


def build_laplacian(graph: Graph) -> Laplacian:
    """L = D - A for a simple undirected graph."""
    n = graph.node_count
    a = np.zeros((n, n))
    u, v = graph.edge_arrays
    a[u, v] = -1.0
    a[v, u] = -1.0
    a[np.arange(n), np.arange(n)] = graph.degrees
    return Laplacian(a)


def eigenvalues(lap: Laplacian) -> np.ndarray:
    return lap.eigenvalues


def algebraic_connectivity(lap: Laplacian) -> float:
    """Second-smallest eigenvalue; 0.0 for the single-node graph."""
    w = lap.eigenvalues
    if w.size < 2:
        return 0.0
    return float(w[1])


def spectral_radius(lap: Laplacian) -> float:
    w = lap.eigenvalues
    return float(max(abs(w[0]), abs(w[-1]))) if w.size else 0.0


def is_connected(lap: Laplacian) -> bool:
    """Spectral connectivity test: lambda_2 above tolerance."""
    return algebraic_connectivity(lap) > SPECTRAL_TOL * max(1.0, spectral_radius(lap))


def distance_to_consensus(x: np.ndarray) -> float:
    """Euclidean distance from x to the consensus line span{1}."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.linalg.norm(x - x.mean()))


def _graph_generator(seed: "int | RngStream") -> np.random.Generator:
    stream = seed if isinstance(seed, RngStream) else RngStream(seed)
    return stream.generator(GRAPH)


def generate_erdos_renyi(
    node_count: int, edge_count: int, seed: "int | RngStream"
) -> Graph:
    """Uniform draw over simple graphs with exactly ``edge_count`` edges."""
    n, m = int(node_count), int(edge_count)
    if n < 1:
        raise ValueError("need at least one node")
    total = n * (n - 1) // 2
    if not (0 <= m <= total):
        raise ValueError(f"edge_count must be in [0, {total}] for {n} nodes, got {m}")
    gen = _graph_generator(seed)
    picks = gen.choice(total, size=m, replace=False) if m else np.empty(0, dtype=np.int64)
    offsets = np.array([u * n - u * (u + 1) // 2 for u in range(n)], dtype=np.int64)
    u = np.searchsorted(offsets, picks, side="right") - 1
    v = picks - offsets[u] + u + 1
    return Graph(n, tuple(zip(u.tolist(), v.tolist())))


def _pairing_attempt(n: int, d: int, gen: np.random.Generator) -> set | None:
    """One configuration-model attempt with stub repair; None if it jams."""
    edges: set[tuple[int, int]] = set()
    stubs = np.repeat(np.arange(n), d)
    while stubs.size:
        potential: dict[int, int] = {}
        gen.shuffle(stubs)
        for s1, s2 in zip(stubs[0::2], stubs[1::2]):
            u, v = (int(s1), int(s2)) if s1 < s2 else (int(s2), int(s1))
            if u != v and (u, v) not in edges:
                edges.add((u, v))
            else:
                potential[u] = potential.get(u, 0) + 1
                potential[v] = potential.get(v, 0) + 1
        if potential:
            nodes = list(potential)
            suitable = any(
                u != v and (min(u, v), max(u, v)) not in edges
                for i, u in enumerate(nodes)
                for v in nodes[i:]
            )
            if not suitable:
                return None
        stubs = np.array(
            [node for node, k in sorted(potential.items()) for _ in range(k)],
            dtype=np.int64,
        )
    return edges


def generate_random_regular(
    node_count: int, degree: int, seed: "int | RngStream", max_attempts: int = 200
) -> Graph:
    """Random simple d-regular graph via the pairing model with retries."""
    n, d = int(node_count), int(degree)
    if not (0 <= d < n):
        raise ValueError(f"degree must satisfy 0 <= d < n, got d={d}, n={n}")
    if (n * d) % 2 != 0:
        raise ValueError(f"n*d must be even, got n={n}, d={d}")
    if d == 0:
        return Graph(n, ())
    gen = _graph_generator(seed)
    for _ in range(max_attempts):
        edges = _pairing_attempt(n, d, gen)
        if edges is not None:
            return Graph(n, tuple(edges))
    raise GraphGenerationError(
        f"no simple {d}-regular pairing found in {max_attempts} attempts "
        f"(n={n}); try another seed"
    )


def write_edge_list(graph: Graph, path) -> None:
    """Text format: header line 'N M', then one 'u v' line per edge."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{graph.node_count} {graph.edge_count}\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def read_edge_list(path) -> Graph:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty edge-list file")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError(f"{path}: header must be 'N M', got {lines[0]!r}")
    n, m = int(head[0]), int(head[1])
    if len(lines) - 1 != m:
        raise ValueError(f"{path}: header says {m} edges, file has {len(lines) - 1}")
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: bad edge line {ln!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return Graph(n, tuple(edges))

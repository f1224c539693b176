"""Node propensities for the random graph with edge probability p_i p_j / (1 + p_i p_j).

The MM update comes from two successive minorizations of ``-ln(1 + p_i p_j)``
(supporting hyperplane, then the arithmetic-geometric mean bound on
``-p_i p_j``) and separates the parameters:

    p_i <- sqrt(p_i d_i / sum_{j != i} p_j / (1 + p_i p_j))

All nodes update simultaneously from the previous vector.  The pair sums are
O(m^2) and evaluated in row blocks so memory stays bounded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DivergenceError, MMProblem, StoppingRule, run_mm

__all__ = [
    "Graph",
    "graph_loglik",
    "graph_mm_update",
    "graph_init",
    "graph_simulate",
    "graph_stationarity",
    "GraphProblem",
    "fit_graph",
    "read_edge_list",
    "write_propensities",
    "DIVERGENCE_BOUND",
]

DIVERGENCE_BOUND = 1e8
_BLOCK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes ``0 .. m-1``; ``edges`` is an (E, 2) array."""

    m: int
    edges: np.ndarray
    degrees: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("graph needs at least one node")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= self.m):
            raise ValueError(f"edge endpoint outside 0..{self.m - 1}")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        e = np.sort(e, axis=1)
        key = e[:, 0] * self.m + e[:, 1]
        if np.unique(key).size != key.size:
            raise ValueError("duplicate edges")
        deg = np.bincount(e.ravel(), minlength=self.m)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "degrees", deg)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])


def _blocks(m):
    step = max(1, _BLOCK_ELEMENTS // max(m, 1))
    for start in range(0, m, step):
        yield start, min(m, start + step)


def _pair_log_sum(p):
    # sum over unordered pairs i<j of ln(1 + p_i p_j)
    total = 0.0
    for a, b in _blocks(p.size):
        block = np.log1p(np.outer(p[a:b], p))
        total += block.sum() - np.log1p(p[a:b] ** 2).sum()
    return 0.5 * total


def _neighbor_sums(p):
    # s_i = sum_{j != i} p_j / (1 + p_i p_j)
    out = np.empty_like(p)
    for a, b in _blocks(p.size):
        pi = p[a:b, None]
        out[a:b] = (p[None, :] / (1.0 + pi * p[None, :])).sum(axis=1) - p[a:b] / (1.0 + p[a:b] ** 2)
    return out


def graph_loglik(graph: Graph, p) -> float:
    """Log-likelihood; ``-inf`` when an edge touches a node with zero propensity."""
    p = np.asarray(p, dtype=float)
    if p.shape != (graph.m,):
        raise ValueError("propensity vector has the wrong length")
    if np.any(p < 0):
        raise ValueError("propensities must be nonnegative")
    d = graph.degrees
    if np.any((d > 0) & (p == 0)):
        return -np.inf
    pos = d > 0
    edge_part = float(np.sum(d[pos] * np.log(p[pos])))
    return edge_part - _pair_log_sum(p)


def graph_mm_update(graph: Graph, p) -> np.ndarray:
    """One simultaneous (Jacobi) MM sweep; isolated nodes go to zero."""
    p = np.asarray(p, dtype=float)
    d = graph.degrees
    s = _neighbor_sums(p)
    new = np.zeros_like(p)
    active = d > 0
    bad = active & (s <= 0)
    if np.any(bad):
        raise ValueError(f"degenerate configuration at node {int(np.flatnonzero(bad)[0])}")
    new[active] = np.sqrt(p[active] * d[active] / s[active])
    return new


def graph_stationarity(graph: Graph, p) -> np.ndarray:
    """Score ``d_i / p_i - sum_{j != i} p_j / (1 + p_i p_j)`` at nodes with d_i > 0."""
    p = np.asarray(p, dtype=float)
    active = graph.degrees > 0
    return graph.degrees[active] / p[active] - _neighbor_sums(p)[active]


def graph_init(graph: Graph) -> np.ndarray:
    """Starting values from a common background propensity.

    Solves ``q^2 / (1 + q^2) = |E| / (m (m - 1) / 2)`` for ``q``, then
    ``p_i q / (1 + p_i q) = d_i / m`` for each ``p_i``.
    """
    m = graph.m
    if graph.n_edges == 0:
        return np.zeros(m)
    density = graph.n_edges / (m * (m - 1) / 2)
    if density >= 1.0:
        raise ValueError("saturated graph: every pair is an edge, background propensity is infinite")
    q = np.sqrt(density / (1.0 - density))
    d = graph.degrees.astype(float)
    if np.any(d >= m):
        raise ValueError("saturated node: degree equals the node count")
    return d / (q * (m - d))


def graph_simulate(propensities, seed) -> Graph:
    """Draw each pair independently with probability p_i p_j / (1 + p_i p_j)."""
    p = np.asarray(propensities, dtype=float)
    if np.any(p < 0):
        raise ValueError("propensities must be nonnegative")
    m = p.size
    rng = np.random.default_rng(seed)
    found = []
    for a, b in _blocks(m):
        prod = np.outer(p[a:b], p)
        prob = prod / (1.0 + prod)
        u = rng.random(prob.shape)
        rows, cols = np.nonzero(u < prob)
        rows = rows + a
        keep = cols > rows
        found.append(np.column_stack([rows[keep], cols[keep]]))
    edges = np.concatenate(found) if found else np.empty((0, 2), dtype=np.int64)
    return Graph(m, edges)


class GraphProblem(MMProblem):
    sense = "maximize"
    monotone = True

    def __init__(self, graph: Graph, bound: float = DIVERGENCE_BOUND):
        self.graph = graph
        self.dimension = graph.m
        self.bound = bound

    def objective(self, theta):
        return graph_loglik(self.graph, theta)

    def mm_map(self, theta):
        new = graph_mm_update(self.graph, theta)
        if new.max(initial=0.0) > self.bound:
            raise DivergenceError(
                f"propensity exceeded {self.bound:g}: MLE may not exist", new
            )
        return new

    def is_feasible(self, theta):
        return bool(np.all(np.isfinite(theta)) and np.all(theta >= 0))


def fit_graph(graph: Graph, p0=None, rule: StoppingRule = StoppingRule(), **kwargs):
    """Fit propensities from :func:`graph_init` (or ``p0``); returns ``(trace, report)``."""
    p0 = graph_init(graph) if p0 is None else np.asarray(p0, dtype=float)
    return run_mm(GraphProblem(graph), p0, rule, **kwargs)


def read_edge_list(path, m: int | None = None) -> Graph:
    """Whitespace-separated ``i j`` pairs, 0-based; ``#`` starts a comment."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two node indices")
            try:
                rows.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: node indices must be integers") from None
    edges = np.array(rows, dtype=np.int64).reshape(-1, 2)
    if m is None:
        m = int(edges.max()) + 1 if edges.size else 1
    return Graph(m, edges)


def write_propensities(fh, graph: Graph, p) -> None:
    fh.write("node,degree,p_hat\n")
    for i, (d, v) in enumerate(zip(graph.degrees, p)):
        fh.write(f"{i},{d},{v:.10g}\n")

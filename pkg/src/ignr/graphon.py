"""Closed-form graphons, graph sampling and synthetic datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputDomainError

N_BENCHMARKS = 13

S1_ALPHA_RANGE = (0.1, 0.5)
S2_ALPHA_RANGE = (0.05, 0.15)
S1_SIZES = (50, 79)
S2_SIZES = (50, 59)

# graph sizes used for every single-graphon trial
SINGLE_GRAPHON_SIZES = (50, 77, 105, 133, 161, 188, 216, 244, 272, 300)

_RING_COEF = math.sqrt(2.0) / 2.0


@dataclass(frozen=True)
class GraphonSpec:
    """Identifier of a closed-form graphon.

    ``kind`` is one of ``"benchmark"`` (``index`` in 0..12), ``"two_block"``
    or ``"noisy_ring"`` (both parameterized by ``alpha``).
    """

    kind: str
    index: Optional[int] = None
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind == "benchmark":
            if self.index is None or not 0 <= int(self.index) < N_BENCHMARKS:
                raise InputDomainError(f"benchmark index must be in 0..12, got {self.index}")
        elif self.kind == "two_block":
            _check_alpha(self.alpha, S1_ALPHA_RANGE)
        elif self.kind == "noisy_ring":
            _check_alpha(self.alpha, S2_ALPHA_RANGE)
        else:
            raise InputDomainError(f"unknown graphon kind {self.kind!r}")

    @classmethod
    def benchmark(cls, index: int) -> "GraphonSpec":
        return cls("benchmark", index=int(index))

    @classmethod
    def two_block(cls, alpha: float) -> "GraphonSpec":
        return cls("two_block", alpha=float(alpha))

    @classmethod
    def noisy_ring(cls, alpha: float) -> "GraphonSpec":
        return cls("noisy_ring", alpha=float(alpha))

    @classmethod
    def parse(cls, text: str) -> "GraphonSpec":
        """Parse ``benchmark:3``, ``two_block:0.3`` or ``noisy_ring:0.1``."""
        kind, _, arg = text.partition(":")
        if not arg:
            raise InputDomainError(f"cannot parse graphon spec {text!r}")
        if kind == "benchmark":
            return cls.benchmark(int(arg))
        if kind in ("two_block", "s1"):
            return cls.two_block(float(arg))
        if kind in ("noisy_ring", "s2"):
            return cls.noisy_ring(float(arg))
        raise InputDomainError(f"cannot parse graphon spec {text!r}")

    def __str__(self):
        if self.kind == "benchmark":
            return f"benchmark:{self.index}"
        return f"{self.kind}:{self.alpha!r}"

    def __call__(self, x, y):
        return graphon_values(self, x, y)


def _check_alpha(alpha, bounds):
    lo, hi = bounds
    if alpha is None or not (lo <= alpha <= hi):
        raise InputDomainError(f"alpha must lie in [{lo}, {hi}], got {alpha}")


def graphon_values(spec: GraphonSpec, x, y) -> np.ndarray:
    """Vectorized graphon evaluation; ``x`` and ``y`` broadcast together.

    Every formula is written so that swapping ``x`` and ``y`` yields a
    bit-identical result (only commutative operations combine the two).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any((x < 0) | (x > 1) | (y < 0) | (y > 1)) or np.any(np.isnan(x) | np.isnan(y)):
        raise InputDomainError("graphon coordinates must lie in [0, 1]")
    x, y = np.broadcast_arrays(x, y)
    if spec.kind == "benchmark":
        w = _BENCHMARKS[spec.index](x, y)
    elif spec.kind == "two_block":
        w = _two_block(x, y, spec.alpha)
    else:
        w = _noisy_ring(x, y, spec.alpha)
    return np.clip(w, 0.0, 1.0)


def eval_graphon(spec: GraphonSpec, x: float, y: float) -> float:
    """Evaluate ``W(x, y)`` at a single point."""
    return float(graphon_values(spec, x, y))


def _block(x):
    # half-open blocks [0, 1/2) and [1/2, 1]
    return (x >= 0.5).astype(np.int8)


_BENCHMARKS = [
    lambda x, y: x * y,
    lambda x, y: np.exp(-(x**0.7 + y**0.7)),
    lambda x, y: 0.25 * ((x**2 + y**2) + (np.sqrt(x) + np.sqrt(y))),
    lambda x, y: 0.5 * (x + y),
    lambda x, y: 1.0 / (1.0 + np.exp(-2.0 * (x**2 + y**2))),
    lambda x, y: 1.0 / (1.0 + np.exp(-np.maximum(x, y) ** 2 - np.minimum(x, y) ** 4)),
    lambda x, y: np.exp(-np.maximum(x, y) ** 0.75),
    lambda x, y: np.exp(-0.5 * (np.minimum(x, y) + (np.sqrt(x) + np.sqrt(y)))),
    lambda x, y: np.log1p(np.maximum(x, y)),
    lambda x, y: np.abs(x - y),
    lambda x, y: 1.0 - np.abs(x - y),
    lambda x, y: np.where(_block(x) == _block(y), 0.8, 0.0),
    lambda x, y: np.where(_block(x) != _block(y), 0.8, 0.0),
]


def _two_block(x, y, alpha):
    # first block [0, alpha), second [1 - alpha, 1]; disjoint even at alpha = 1/2
    low = (x < alpha) & (y < alpha)
    high = (x >= 1.0 - alpha) & (y >= 1.0 - alpha)
    return 0.8 * low + 0.8 * high + 0.1


def _noisy_ring(x, y, alpha):
    a2 = alpha * alpha
    corner_a = np.exp(-(x**2 + (y - 1.0) ** 2) / a2)
    corner_b = np.exp(-((x - 1.0) ** 2 + y**2) / a2)
    band = np.exp(-((_RING_COEF * np.abs(x - y)) / alpha) ** 2)
    return 0.9 * (corner_a + corner_b) + 0.9 * band


def grid_points(n: int) -> np.ndarray:
    """The ``n`` regular node positions ``(p - 1) / n``, p = 1..n."""
    if int(n) != n or n < 1:
        raise InputDomainError(f"grid size must be a positive integer, got {n}")
    return np.arange(n, dtype=np.float64) / n


def coordinate_grid(n: int) -> np.ndarray:
    """All ``n * n`` coordinate pairs of the regular grid, row-major.

    Returns an array of shape ``(n * n, 2)``; row ``p * n + q`` holds
    ``(x_p, y_q)``.
    """
    pts = grid_points(n)
    xx, yy = np.meshgrid(pts, pts, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


@dataclass
class GraphonGrid:
    """A ``K x K`` discretization of a graphon on the regular grid."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise InputDomainError("graphon grid must be a square matrix")

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    def symmetrized(self) -> "GraphonGrid":
        return GraphonGrid(0.5 * (self.values + self.values.T))


def sample_grid(spec: GraphonSpec, k: int) -> GraphonGrid:
    pts = grid_points(k)
    return GraphonGrid(graphon_values(spec, pts[:, None], pts[None, :]))


@dataclass
class Graph:
    """Adjacency matrix plus node histogram (uniform unless given)."""

    adj: np.ndarray
    hist: Optional[np.ndarray] = None

    def __post_init__(self):
        self.adj = np.asarray(self.adj, dtype=np.float64)
        if self.adj.ndim != 2 or self.adj.shape[0] != self.adj.shape[1]:
            raise InputDomainError("adjacency must be square")
        if self.hist is None:
            self.hist = np.full(self.n, 1.0 / self.n)
        else:
            self.hist = np.asarray(self.hist, dtype=np.float64)
            if self.hist.shape != (self.n,) or np.any(self.hist < 0) \
                    or abs(self.hist.sum() - 1.0) > 1e-12:
                raise InputDomainError("histogram must be a probability vector of length n")

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    def edges(self) -> np.ndarray:
        """Edge list ``(i, j)`` with ``i < j`` (nonzero upper-triangular entries)."""
        i, j = np.nonzero(np.triu(self.adj, k=1))
        return np.stack([i, j], axis=1)

    def density(self) -> float:
        if self.n < 2:
            return 0.0
        return float(np.triu(self.adj, 1).sum() / (self.n * (self.n - 1) / 2))

    def permuted(self, perm) -> "Graph":
        perm = np.asarray(perm)
        return Graph(self.adj[np.ix_(perm, perm)], self.hist[perm])

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        adj = np.zeros((n, n))
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise InputDomainError("edge endpoint out of range")
        adj[edges[:, 0], edges[:, 1]] = 1.0
        adj[edges[:, 1], edges[:, 0]] = 1.0
        return cls(adj)


def sample_adjacency(prob: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli-sample the strict upper triangle of ``prob`` and mirror it."""
    n = prob.shape[0]
    iu = np.triu_indices(n, k=1)
    draws = rng.random(len(iu[0])) < prob[iu]
    adj = np.zeros((n, n))
    adj[iu] = draws
    return adj + adj.T


def node_positions(n: int, mode: str, rng: np.random.Generator) -> np.ndarray:
    if mode == "deterministic":
        return grid_points(n)
    if mode == "stochastic":
        return rng.random(n)
    raise InputDomainError(f"sampling mode must be 'stochastic' or 'deterministic', got {mode!r}")


def sample_graph(spec: GraphonSpec, n: int, mode: str = "stochastic", rng_seed: int = 0) -> Graph:
    """Sample an undirected, loop-free graph of ``n`` nodes from ``spec``."""
    if int(n) != n or n < 1:
        raise InputDomainError(f"graph size must be a positive integer, got {n}")
    rng = np.random.default_rng(rng_seed)
    v = node_positions(n, mode, rng)
    prob = graphon_values(spec, v[:, None], v[None, :])
    return Graph(sample_adjacency(prob, rng))


@dataclass
class Dataset:
    graphs: list
    labels: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.labels and len(self.labels) != len(self.graphs):
            raise InputDomainError("labels must align 1:1 with graphs")

    def __len__(self):
        return len(self.graphs)

    @property
    def alphas(self) -> list:
        return [lab.get("alpha") for lab in self.labels]

    def subset(self, idx) -> "Dataset":
        idx = list(idx)
        labels = [self.labels[i] for i in idx] if self.labels else []
        return Dataset([self.graphs[i] for i in idx], labels, dict(self.provenance))

    def split(self, n_train: int) -> tuple:
        """First ``n_train`` graphs for training, the rest for testing."""
        return self.subset(range(n_train)), self.subset(range(n_train, len(self)))


def make_dataset_single(spec: GraphonSpec, sizes: Sequence[int], rng_seed: int = 0) -> Dataset:
    if len(sizes) == 0:
        raise InputDomainError("sizes must be nonempty")
    graphs, labels = [], []
    for i, n in enumerate(sizes):
        seed = int(rng_seed) + i
        graphs.append(sample_graph(spec, int(n), "stochastic", seed))
        labels.append({"alpha": spec.alpha, "seed": seed})
    prov = {"spec": str(spec), "mode": "stochastic", "seed": int(rng_seed)}
    return Dataset(graphs, labels, prov)


FAMILIES = {
    "s1": (GraphonSpec.two_block, S1_ALPHA_RANGE, S1_SIZES),
    "s2": (GraphonSpec.noisy_ring, S2_ALPHA_RANGE, S2_SIZES),
}


def family_spec(family: str, alpha: float) -> GraphonSpec:
    try:
        return FAMILIES[family][0](alpha)
    except KeyError:
        raise InputDomainError(f"unknown family {family!r}") from None


def make_dataset_family(family: str, m: int, rng_seed: int = 0) -> Dataset:
    """Graphs from a parameterized family, deterministic node grid.

    ``s1``: two-block graphons, alpha ~ U[0.1, 0.5], sizes uniform in 50..79.
    ``s2``: noisy rings, alpha ~ U[0.05, 0.15], sizes uniform in 50..59.
    """
    if family not in FAMILIES:
        raise InputDomainError(f"unknown family {family!r}")
    if m < 1:
        raise InputDomainError("dataset size must be positive")
    make, (alo, ahi), (nlo, nhi) = FAMILIES[family]
    rng = np.random.default_rng(rng_seed)
    alphas = rng.uniform(alo, ahi, size=m)
    sizes = rng.integers(nlo, nhi + 1, size=m)
    graphs, labels = [], []
    for i in range(m):
        seed = int(rng_seed) + i
        graphs.append(sample_graph(make(float(alphas[i])), int(sizes[i]), "deterministic", seed))
        labels.append({"alpha": float(alphas[i]), "seed": seed})
    return Dataset(graphs, labels, {"family": family, "mode": "deterministic", "seed": int(rng_seed)})

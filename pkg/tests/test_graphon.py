import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ignr import graphon
from ignr.errors import InputDomainError
from ignr.graphon import GraphonSpec, coordinate_grid, eval_graphon, sample_graph, sample_grid


def _blk(v):
    return 0 if v < 0.5 else 1


# straight scalar re-statement of the benchmark table, used as the oracle
TABLE = [
    lambda x, y: x * y,
    lambda x, y: math.exp(-(x ** 0.7 + y ** 0.7)),
    lambda x, y: 0.25 * (x * x + y * y + math.sqrt(x) + math.sqrt(y)),
    lambda x, y: 0.5 * (x + y),
    lambda x, y: 1 / (1 + math.exp(-2 * (x * x + y * y))),
    lambda x, y: 1 / (1 + math.exp(-max(x, y) ** 2 - min(x, y) ** 4)),
    lambda x, y: math.exp(-max(x, y) ** 0.75),
    lambda x, y: math.exp(-0.5 * (min(x, y) + math.sqrt(x) + math.sqrt(y))),
    lambda x, y: math.log(1 + max(x, y)),
    lambda x, y: abs(x - y),
    lambda x, y: 1 - abs(x - y),
    lambda x, y: 0.8 if _blk(x) == _blk(y) else 0.0,
    lambda x, y: 0.8 if _blk(x) != _blk(y) else 0.0,
]


def ring_oracle(x, y, a):
    s, c = math.sin(0.75 * math.pi), math.cos(0.75 * math.pi)
    v = (0.9 * math.exp((-y * y - (x - 1) ** 2) / a ** 2)
         + 0.9 * math.exp((-(y - 1) ** 2 - x * x) / a ** 2)
         + 0.9 * math.exp(-((s * x + c * y) / a) ** 2))
    return min(max(v, 0.0), 1.0)


def two_block_oracle(x, y, a):
    v = 0.1
    if x < a and y < a:
        v += 0.8
    if x >= 1 - a and y >= 1 - a:
        v += 0.8
    return v


@pytest.mark.parametrize("index", range(13))
def test_benchmarks_match_table(index):
    spec = GraphonSpec.benchmark(index)
    pts = np.linspace(0, 1, 23)
    for x in pts:
        for y in pts:
            assert eval_graphon(spec, x, y) == pytest.approx(TABLE[index](x, y), abs=1e-14)


def test_spec_examples():
    assert eval_graphon(GraphonSpec.benchmark(0), 0.3, 0.7) == pytest.approx(0.21)
    assert eval_graphon(GraphonSpec.benchmark(9), 0.5, 0.5) == 0.0
    assert eval_graphon(GraphonSpec.two_block(0.3), 0.1, 0.1) == pytest.approx(0.9)
    assert eval_graphon(GraphonSpec.benchmark(11), 0.25, 0.75) == 0.0
    # x = 1/2 belongs to the second block
    assert eval_graphon(GraphonSpec.benchmark(11), 0.5, 0.75) == 0.8
    assert eval_graphon(GraphonSpec.benchmark(12), 0.5, 0.25) == 0.8


@pytest.mark.parametrize("alpha", [0.05, 0.08, 0.1, 0.15])
def test_noisy_ring_matches_formula(alpha):
    spec = GraphonSpec.noisy_ring(alpha)
    for x in np.linspace(0, 1, 17):
        for y in np.linspace(0, 1, 17):
            assert eval_graphon(spec, x, y) == pytest.approx(ring_oracle(x, y, alpha), abs=1e-12)


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.5])
def test_two_block_matches_formula(alpha):
    spec = GraphonSpec.two_block(alpha)
    for x in np.linspace(0, 1, 21):
        for y in np.linspace(0, 1, 21):
            assert eval_graphon(spec, x, y) == pytest.approx(two_block_oracle(x, y, alpha))


def _all_specs():
    specs = [GraphonSpec.benchmark(i) for i in range(13)]
    specs += [GraphonSpec.two_block(a) for a in (0.1, 0.33, 0.5)]
    specs += [GraphonSpec.noisy_ring(a) for a in (0.05, 0.1, 0.15)]
    return specs


@pytest.mark.parametrize("spec", _all_specs(), ids=str)
def test_range_and_exact_symmetry_on_probe_grid(spec):
    v = sample_grid(spec, 101).values
    g = np.linspace(0, 1, 101)
    w = spec(g[:, None], g[None, :])
    assert np.all((w >= 0) & (w <= 1))
    assert np.array_equal(w, w.T)
    assert np.all((v >= 0) & (v <= 1))


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 12))
def test_symmetry_property(x, y, k):
    spec = GraphonSpec.benchmark(k)
    assert eval_graphon(spec, x, y) == eval_graphon(spec, y, x)


def test_domain_errors():
    with pytest.raises(InputDomainError):
        eval_graphon(GraphonSpec.benchmark(0), 1.2, 0.5)
    with pytest.raises(InputDomainError):
        eval_graphon(GraphonSpec.benchmark(0), -0.1, 0.5)
    with pytest.raises(InputDomainError):
        GraphonSpec.two_block(0.6)
    with pytest.raises(InputDomainError):
        GraphonSpec.noisy_ring(0.01)
    with pytest.raises(InputDomainError):
        GraphonSpec.benchmark(13)
    with pytest.raises(InputDomainError):
        coordinate_grid(0)


def test_parse_roundtrip():
    for spec in _all_specs():
        assert GraphonSpec.parse(str(spec)) == spec
    assert GraphonSpec.parse("s1:0.2") == GraphonSpec.two_block(0.2)
    with pytest.raises(InputDomainError):
        GraphonSpec.parse("benchmark")


def test_coordinate_grid_examples():
    assert coordinate_grid(1).tolist() == [[0.0, 0.0]]
    assert coordinate_grid(2).tolist() == [[0, 0], [0, 0.5], [0.5, 0], [0.5, 0.5]]
    # element (3, 2), 1-based, of the 4-grid
    assert tuple(coordinate_grid(4)[(3 - 1) * 4 + (2 - 1)]) == (0.5, 0.25)


def test_sample_grid_examples():
    assert sample_grid(GraphonSpec.benchmark(0), 2).values.tolist() == [[0, 0], [0, 0.25]]
    assert sample_grid(GraphonSpec.benchmark(3), 2).values.tolist() == [[0, 0.25], [0.25, 0.5]]
    assert sample_grid(GraphonSpec.benchmark(10), 2).values.tolist() == [[1, 0.5], [0.5, 1]]


def test_sample_graph_examples():
    g = sample_graph(GraphonSpec.benchmark(11), 2, "deterministic", 0)
    assert g.adj.tolist() == [[0, 0], [0, 0]]
    assert sample_graph(GraphonSpec.benchmark(10), 1, "stochastic", 3).adj.tolist() == [[0]]


def test_two_block_density_monte_carlo():
    g = sample_graph(GraphonSpec.two_block(0.5), 2000, "stochastic", 11)
    assert abs(g.density() - 0.5) <= 0.02


@pytest.mark.parametrize("mode", ["stochastic", "deterministic"])
def test_graph_invariants(mode):
    g = sample_graph(GraphonSpec.benchmark(4), 40, mode, 5)
    assert np.array_equal(g.adj, g.adj.T)
    assert np.all(np.diag(g.adj) == 0)
    assert set(np.unique(g.adj)) <= {0.0, 1.0}
    assert g.hist.sum() == pytest.approx(1.0, abs=1e-12)
    again = sample_graph(GraphonSpec.benchmark(4), 40, mode, 5)
    assert again.adj.tobytes() == g.adj.tobytes()


def test_deterministic_positions_match_grid():
    rng = np.random.default_rng(0)
    pos = graphon.node_positions(7, "deterministic", rng)
    assert np.array_equal(pos, coordinate_grid(7)[::7, 0])


def test_hoeffding_convergence_of_edge_frequencies():
    n, reps = 20, 2000
    spec = GraphonSpec.benchmark(2)
    v = graphon.grid_points(n)
    prob = spec(v[:, None], v[None, :])
    rng = np.random.default_rng(123)
    acc = np.zeros((n, n))
    for _ in range(reps):
        acc += graphon.sample_adjacency(prob, rng)
    off = ~np.eye(n, dtype=bool)
    dev = np.abs(acc / reps - prob)[off].max()
    assert dev <= 4 * math.sqrt(math.log(2 * n * n) / (2 * reps))


def test_make_dataset_single():
    sizes = list(graphon.SINGLE_GRAPHON_SIZES)
    ds = graphon.make_dataset_single(GraphonSpec.benchmark(0), sizes, 7)
    assert [g.n for g in ds.graphs] == sizes
    assert ds.provenance["spec"] == "benchmark:0"
    one = graphon.make_dataset_single(GraphonSpec.benchmark(0), [1], 7)
    assert one.graphs[0].adj.tolist() == [[0]]
    a = graphon.make_dataset_single(GraphonSpec.benchmark(4), [50, 50], 0)
    assert not np.array_equal(a.graphs[0].adj, a.graphs[1].adj)
    with pytest.raises(InputDomainError):
        graphon.make_dataset_single(GraphonSpec.benchmark(0), [], 0)


@pytest.mark.parametrize("family,m,lo,hi,alo,ahi", [
    ("s1", 600, 50, 79, 0.1, 0.5), ("s2", 100, 50, 59, 0.05, 0.15)])
def test_make_dataset_family(family, m, lo, hi, alo, ahi):
    ds = graphon.make_dataset_family(family, m, 2)
    assert len(ds) == m
    sizes = [g.n for g in ds.graphs]
    assert min(sizes) >= lo and max(sizes) <= hi
    assert all(alo <= a <= ahi for a in ds.alphas)
    assert len(ds.labels) == len(ds.graphs)
    single = graphon.make_dataset_family(family, 1, 9)
    assert alo <= single.alphas[0] <= ahi


def test_dataset_split_and_labels():
    ds = graphon.make_dataset_family("s2", 10, 0)
    tr, te = ds.split(8)
    assert len(tr) == 8 and len(te) == 2
    assert te.alphas == ds.alphas[8:]
    with pytest.raises(InputDomainError):
        graphon.Dataset([graphon.Graph(np.zeros((2, 2)))], [{}, {}])


def test_graph_from_edges_roundtrip():
    g = sample_graph(GraphonSpec.benchmark(3), 15, "stochastic", 1)
    h = graphon.Graph.from_edges(15, g.edges())
    assert np.array_equal(g.adj, h.adj)
    assert np.all(g.edges()[:, 0] < g.edges()[:, 1])

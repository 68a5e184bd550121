import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ignr import evaluate, graphon, gw, nn, train
from ignr.errors import InputDomainError
from ignr.evaluate import (degree_function, degree_sorted, graphon_error_gw, graphon_error_mse_sorted,
                           latent_alpha_correlation, upsample_linear)
from ignr.graphon import Dataset, GraphonSpec, sample_grid


def rand_grid(rng, r):
    a = rng.random((r, r))
    return 0.5 * (a + a.T)


# ---------------------------------------------------------------------------
# GW error


@pytest.mark.parametrize("seed", range(20))
def test_gw_error_of_grid_with_itself(seed):
    rng = np.random.default_rng(seed)
    g = rand_grid(rng, int(rng.integers(2, 65)))
    assert graphon_error_gw(g, g) <= 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_gw_error_under_permutation_with_warm_start(seed):
    rng = np.random.default_rng(100 + seed)
    g = rand_grid(rng, 30)
    perm = rng.permutation(30)
    h = g[np.ix_(perm, perm)]
    # h[j, l] = g[perm[j], perm[l]], so T[perm[j], j] = 1/R is exact
    t0 = np.zeros((30, 30))
    t0[perm, np.arange(30)] = 1 / 30
    opts = gw.GwSolverOptions(init=t0)
    assert gw.solve_cg(g, h, opts=opts).cost <= 1e-6
    assert graphon_error_gw(g, g[np.ix_(perm, perm)]) <= gw.gw_cost(g, h, np.full((30, 30), 1 / 900))


def test_constant_versus_two_block_closed_form():
    # against a constant grid every coupling costs mean_{j,l} (c - B_jl)^2
    truth = sample_grid(GraphonSpec.benchmark(11), 64).values
    const = np.full((64, 64), 0.5)
    closed = float(np.mean((0.5 - truth) ** 2))
    assert closed == pytest.approx(0.5 * 0.3 ** 2 + 0.5 * 0.5 ** 2)
    assert graphon_error_gw(const, truth) == pytest.approx(closed, abs=1e-12)
    assert graphon_error_gw(const, truth, solver="pg") == pytest.approx(closed, abs=1e-9)
    t = np.full((64, 64), 1 / 64 ** 2)
    assert gw.gw_cost(const, truth, t) == pytest.approx(closed, abs=1e-12)


@pytest.mark.parametrize("i", range(10))
def test_gw_error_symmetric_in_arguments(i):
    a = sample_grid(GraphonSpec.benchmark(i), 40).values
    b = sample_grid(GraphonSpec.benchmark(i + 1), 40).values
    assert abs(graphon_error_gw(a, b) - graphon_error_gw(b, a)) <= 1e-4


def test_resolution_mismatch():
    with pytest.raises(InputDomainError):
        graphon_error_gw(np.zeros((3, 3)), np.zeros((4, 4)))
    with pytest.raises(InputDomainError):
        graphon_error_mse_sorted(np.zeros((3, 3)), np.zeros((4, 4)))


# ---------------------------------------------------------------------------
# degree utilities and sorted MSE


def test_degree_function_examples():
    assert degree_function(sample_grid(GraphonSpec.benchmark(3), 2)).tolist() == [0.125, 0.375]
    assert np.all(degree_function(np.full((5, 5), 0.3)) == pytest.approx(0.3))
    g = rand_grid(np.random.default_rng(0), 7)
    assert np.allclose(degree_function(g), g.mean(axis=0), rtol=0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(0, 1)))
def test_degree_sorting_postcondition(a):
    a = 0.5 * (a + a.T)
    d = degree_function(degree_sorted(a))
    assert np.all(np.diff(d) >= -1e-12)


def test_sorted_mse_examples():
    g = sample_grid(GraphonSpec.benchmark(0), 20).values
    assert graphon_error_mse_sorted(g, g) == 0.0
    perm = np.random.default_rng(1).permutation(20)
    assert graphon_error_mse_sorted(g[np.ix_(perm, perm)], g) == pytest.approx(0.0, abs=1e-24)
    c1, c2 = np.full((8, 8), 0.2), np.full((8, 8), 0.7)
    assert graphon_error_mse_sorted(c1, c2, scaled=False) == pytest.approx(0.25)
    assert graphon_error_mse_sorted(c1, c2) == pytest.approx(0.25 * evaluate.MSE_SCALE)


# ---------------------------------------------------------------------------
# upsampling


def test_upsample_examples():
    g = rand_grid(np.random.default_rng(2), 5)
    assert np.array_equal(upsample_linear(g, 5), g)
    assert np.all(upsample_linear(np.full((3, 3), 0.4), 11) == 0.4)
    out = upsample_linear(np.array([[0.0, 1.0], [1.0, 0.0]]), 3)
    assert out[1, 1] == pytest.approx(0.5)
    assert np.all(upsample_linear(np.array([[0.7]]), 4) == 0.7)
    with pytest.raises(InputDomainError):
        upsample_linear(g, 4)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(0, 1)), st.integers(4, 30))
def test_upsample_stays_in_range(a, r):
    out = upsample_linear(a, r)
    assert out.shape == (r, r)
    assert out.min() >= a.min() and out.max() <= a.max()


def test_upsample_preserves_symmetry():
    g = rand_grid(np.random.default_rng(3), 6)
    out = upsample_linear(g, 17)
    assert np.array_equal(out, out.T)


# ---------------------------------------------------------------------------
# checkpoint-level evaluation


def test_truth_decoder_scores_zero(monkeypatch):
    test = graphon.make_dataset_family("s2", 3, 4)
    ck = train.fit(test, train.TrainConfig(objective="cignr", epochs=0, latent_dim=2))
    codes = train.encode_dataset(ck, test)
    by_code = {z.tobytes(): a for z, a in zip(codes, test.alphas)}
    # decode each code to the exact truth of the graph it came from
    monkeypatch.setattr(evaluate, "estimate_for",
                        lambda ck, z, r: sample_grid(GraphonSpec.noisy_ring(by_code[z.tobytes()]), r))
    rep = evaluate.evaluate_family(ck, test, r=32)
    assert max(rep.errors) <= 1e-6


def test_evaluate_single_resolution_one_is_finite():
    ck = train.Checkpoint({"decoder": nn.init_siren(0)}, train.TrainConfig(epochs=0))
    rep = evaluate.evaluate_single(ck, GraphonSpec.benchmark(0), 1)
    y = nn.siren_forward(ck.decoder, np.zeros((1, 2)))[0]
    assert rep.errors[0] == pytest.approx((y - 0.0) ** 2, abs=1e-15)
    assert rep.resolution == 1 and np.isfinite(rep.mean)


def test_evaluate_family_requires_test_graphs():
    ck = train.fit(graphon.make_dataset_family("s1", 2, 0),
                   train.TrainConfig(objective="cignr", epochs=0, latent_dim=2))
    with pytest.raises(InputDomainError):
        evaluate.evaluate_family(ck, Dataset([]), "s1", 8)
    rep = evaluate.evaluate_family(ck, graphon.make_dataset_family("s1", 3, 1), r=16)
    assert len(rep.errors) == 3
    assert rep.mean == pytest.approx(np.mean(rep.errors), abs=1e-12)
    assert rep.std == pytest.approx(np.std(rep.errors), abs=1e-12)
    assert rep.to_dict()["errors"] == rep.errors


def test_trained_model_beats_fresh_initialization():
    spec = GraphonSpec.benchmark(0)
    for seed in range(5):
        ds = graphon.make_dataset_single(spec, [30, 45, 60], seed)
        cfg = train.TrainConfig(objective="ignr", epochs=8, lr=1e-2, solver="pg",
                                max_outer_iters=10, seed=seed)
        fresh = train.Checkpoint(train.build_networks(cfg), cfg)
        trained = train.fit(ds, cfg)
        e_fresh = evaluate.evaluate_single(fresh, spec, 48).mean
        e_trained = evaluate.evaluate_single(trained, spec, 48).mean
        assert e_trained < e_fresh


# ---------------------------------------------------------------------------
# latent diagnostics


def test_principal_projection_matches_svd():
    x = np.random.default_rng(4).standard_normal((50, 4)) * [3.0, 1.0, 0.5, 0.1]
    proj = evaluate.first_principal_projection(x)
    xc = x - x.mean(axis=0)
    ref = xc @ np.linalg.svd(xc, full_matrices=False)[2][0]
    assert np.allclose(np.abs(proj), np.abs(ref), atol=1e-8)


def test_latent_correlation_examples():
    alphas = np.linspace(0.1, 0.5, 30)
    codes = np.stack([alphas, np.zeros(30)], axis=1)
    assert latent_alpha_correlation(codes, alphas) == pytest.approx(1.0)
    assert latent_alpha_correlation(-codes, alphas) == pytest.approx(1.0)
    with pytest.raises(InputDomainError):
        latent_alpha_correlation(codes[:3], alphas)


def _avg_ranks(v):
    v = np.asarray(v)
    out = np.empty(len(v))
    for i, x in enumerate(v):
        out[i] = np.sum(v < x) + (np.sum(v == x) + 1) / 2
    return out


def test_latent_correlation_ties_use_average_ranks():
    alphas = np.array([0.1, 0.1, 0.2, 0.3, 0.3, 0.3, 0.4])
    codes = np.array([[0.0, 0], [1, 0], [0.5, 0], [3, 0], [2, 0], [6, 0], [5, 0]])
    ra, rb = _avg_ranks(alphas), _avg_ranks(codes[:, 0])
    expected = abs(np.corrcoef(ra, rb)[0, 1])
    assert latent_alpha_correlation(codes, alphas) == pytest.approx(expected, abs=1e-12)


def test_latent_correlation_of_unrelated_codes():
    rng = np.random.default_rng(5)
    alphas = rng.uniform(0.1, 0.5, 100)
    # permutation oracle: the null distribution of |rho| for n=100
    null = [abs(np.corrcoef(rng.permutation(100), np.arange(100))[0, 1]) for _ in range(2000)]
    assert np.quantile(null, 0.99) <= 0.3
    hits = sum(latent_alpha_correlation(rng.standard_normal((100, 3)), alphas) <= 0.3
               for _ in range(50))
    assert hits >= 48


# ---------------------------------------------------------------------------
# spectral bipartition


def test_two_means_matches_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(20):
        v = rng.standard_normal(int(rng.integers(2, 15)))
        best = min(
            (np.var(v[v <= t]) * np.sum(v <= t) + np.var(v[v > t]) * np.sum(v > t), t)
            for t in np.sort(v)[:-1])
        mask = evaluate.two_means_1d(v)
        assert np.array_equal(mask, v > best[1])


def test_block_fraction_of_noise_free_two_block_grids():
    for a in (0.1, 0.2, 0.3, 0.4, 0.5):
        p = sample_grid(GraphonSpec.two_block(a), 100).values
        assert evaluate.spectral_block_fraction(p, tau=0.0) == pytest.approx(a, abs=0.011)


def test_block_fraction_of_disconnected_cliques():
    adj = np.zeros((10, 10))
    adj[:3, :3] = 1
    adj[3:, 3:] = 1
    np.fill_diagonal(adj, 0)
    assert evaluate.spectral_block_fraction(adj) == pytest.approx(0.3)
    with pytest.raises(InputDomainError):
        evaluate.spectral_block_fraction(np.zeros((1, 1)))

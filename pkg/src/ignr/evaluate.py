"""Graphon-estimation error metrics and latent-space diagnostics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.stats import spearmanr

from . import gw
from .errors import InputDomainError
from .graphon import GraphonGrid, GraphonSpec, family_spec, sample_grid

# sorted-MSE is reported multiplied by this factor
MSE_SCALE = 1e3

DEFAULT_EVAL_RESOLUTION = 300


@dataclass
class EvalReport:
    errors: list = field(default_factory=list)
    mse_sorted: list = field(default_factory=list)
    resolution: int = DEFAULT_EVAL_RESOLUTION
    seconds: float = 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def std(self) -> float:
        return float(np.std(self.errors))

    def to_dict(self) -> dict:
        return {"errors": list(map(float, self.errors)), "mse_sorted": list(map(float, self.mse_sorted)),
                "mean": self.mean, "std": self.std, "resolution": self.resolution,
                "seconds": self.seconds}


def _values(grid):
    return grid.values if isinstance(grid, GraphonGrid) else np.asarray(grid, dtype=np.float64)


def _same_resolution(a, b):
    if a.shape != b.shape:
        raise InputDomainError(f"resolution mismatch: {a.shape} vs {b.shape}")


def graphon_error_gw(estimate, truth, solver: str = "cg",
                     opts: Optional[gw.GwSolverOptions] = None) -> float:
    """Squared GW distance between two equal-resolution grids.

    Both grids live on the same coordinate grid, so the identity coupling
    is the natural starting point; a second solve from the product
    coupling guards against a poor basin and the lower cost is kept.
    """
    est, tru = _values(estimate), _values(truth)
    _same_resolution(est, tru)
    opts = opts or gw.GwSolverOptions()
    costs = []
    for init in ("identity", "product"):
        costs.append(gw.solve(est, tru, opts=opts.with_init(init), method=solver).cost)
    return float(min(costs))


def degree_function(grid) -> np.ndarray:
    """Row means: Riemann sums of ``d(u) = int W(u, v) dv`` on the grid."""
    return _values(grid).mean(axis=1)


def degree_sorted(grid) -> np.ndarray:
    v = _values(grid)
    order = np.argsort(degree_function(v), kind="stable")
    return v[np.ix_(order, order)]


def graphon_error_mse_sorted(estimate, truth, scaled: bool = True) -> float:
    """Mean squared difference after sorting each grid by its own degrees."""
    est, tru = _values(estimate), _values(truth)
    _same_resolution(est, tru)
    mse = float(np.mean((degree_sorted(est) - degree_sorted(tru)) ** 2))
    return mse * MSE_SCALE if scaled else mse


def upsample_linear(grid, r: int) -> np.ndarray:
    """Bilinear interpolation of a ``K x K`` grid onto ``R x R``.

    Each grid value is taken to sit at its cell center ``(p + 1/2) / size``;
    targets outside the span of the source centers are clamped to the edge
    values.
    """
    v = _values(grid)
    k = v.shape[0]
    if r < k:
        raise InputDomainError("target resolution must be at least the source resolution")
    if r == k:
        return v.copy()
    if k == 1:
        return np.full((r, r), v[0, 0])
    src = (np.arange(k) + 0.5) / k
    dst = np.clip((np.arange(r) + 0.5) / r, src[0], src[-1])
    interp = RegularGridInterpolator((src, src), v, method="linear")
    xx, yy = np.meshgrid(dst, dst, indexing="ij")
    out = interp(np.stack([xx.ravel(), yy.ravel()], axis=1)).reshape(r, r)
    if np.array_equal(v, v.T):
        # exact in exact arithmetic; removes interpolation roundoff
        out = 0.5 * (out + out.T)
    return np.clip(out, v.min(), v.max())


def estimate_for(ck, z, r: int) -> np.ndarray:
    from .train import estimate_grid
    return estimate_grid(ck.decoder, r, z)


def evaluate_single(ck, spec: GraphonSpec, r: int = DEFAULT_EVAL_RESOLUTION,
                    solver: str = "cg", with_mse: Optional[bool] = None) -> EvalReport:
    """Error of a single-graphon checkpoint against ``spec`` at resolution ``r``."""
    t0 = time.perf_counter()
    est = estimate_for(ck, None, r)
    truth = sample_grid(spec, r)
    err = graphon_error_gw(est, truth, solver)
    if with_mse is None:
        with_mse = spec.kind == "benchmark" and spec.index <= 8
    mse = [graphon_error_mse_sorted(est, truth)] if with_mse else []
    return EvalReport([err], mse, r, time.perf_counter() - t0)


def evaluate_family(ck, test_ds, family: Optional[str] = None, r: int = DEFAULT_EVAL_RESOLUTION,
                    solver: str = "cg", jobs: int = 1) -> EvalReport:
    """Mean GW error between each test graph's decoded graphon and its truth."""
    from .train import encode_dataset
    if len(test_ds) == 0:
        raise InputDomainError("empty test set")
    family = family or test_ds.provenance.get("family")
    t0 = time.perf_counter()
    codes = encode_dataset(ck, test_ds)
    pairs = [(estimate_for(ck, z, r), sample_grid(family_spec(family, a), r))
             for z, a in zip(codes, test_ds.alphas)]
    errors = _map(lambda p: graphon_error_gw(p[0], p[1], solver), pairs, jobs)
    return EvalReport(errors, [], r, time.perf_counter() - t0)


def _map(fn, items, jobs):
    if jobs <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def first_principal_projection(codes, iters: int = 500, seed: int = 0) -> np.ndarray:
    """Projection of centered codes onto their leading principal axis (power iteration)."""
    x = np.asarray(codes, dtype=np.float64)
    x = x - x.mean(axis=0)
    cov = x.T @ x
    v = np.random.default_rng(seed).standard_normal(x.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = cov @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            break
        w /= nrm
        if np.allclose(w, v, rtol=0, atol=1e-14):
            v = w
            break
        v = w
    return x @ v


def latent_alpha_correlation(codes, alphas) -> float:
    """``|Spearman rho|`` between alphas and the first principal projection.

    Ties get average ranks.
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    if len(alphas) != len(codes) or len(alphas) < 2:
        raise InputDomainError("need at least two codes with matching alphas")
    proj = first_principal_projection(codes)
    if np.ptp(proj) == 0 or np.ptp(alphas) == 0:
        return 0.0
    rho = spearmanr(alphas, proj).statistic
    return float(abs(rho))


def two_means_1d(values) -> np.ndarray:
    """Exact 2-means on a line: boolean mask of the cluster above the best cut."""
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[0]
    if n < 2:
        return np.zeros(n, dtype=bool)
    order = np.argsort(v, kind="stable")
    s = v[order]
    cs, cs2 = np.cumsum(s), np.cumsum(s * s)
    k = np.arange(1, n)
    left = cs2[:-1] - cs[:-1] ** 2 / k
    right = (cs2[-1] - cs2[:-1]) - (cs[-1] - cs[:-1]) ** 2 / (n - k)
    cut = int(np.argmin(left + right)) + 1
    mask = np.zeros(n, dtype=bool)
    mask[order[cut:]] = True
    return mask


def fiedler_vector(adj, tau: Optional[float] = None) -> np.ndarray:
    """Second eigenvector of the degree-regularized normalized adjacency.

    ``tau`` is added to every degree (default: the mean degree), which keeps
    sparse low-degree nodes from dominating the embedding.  The returned
    vector is rescaled by ``(d + tau)^(-1/2)`` (random-walk convention).
    """
    a = np.asarray(adj, dtype=np.float64)
    d = a.sum(axis=1)
    tau = float(d.mean()) if tau is None else float(tau)
    s = 1.0 / np.sqrt(np.maximum(d + tau, 1e-300))
    _, vecs = np.linalg.eigh(s[:, None] * a * s[None, :])
    return vecs[:, -2] * s


def spectral_block_fraction(adj, tau: Optional[float] = None) -> float:
    """Size of the smaller side of a spectral bipartition, as a fraction of nodes.

    The bipartition is exact 2-means on :func:`fiedler_vector`.
    """
    a = np.asarray(adj, dtype=np.float64)
    n = a.shape[0]
    if n < 2:
        raise InputDomainError("bipartition needs at least two nodes")
    side = two_means_1d(fiedler_vector(a, tau))
    return min(int(side.sum()), n - int(side.sum())) / n

"""Alternating coupling / parameter optimization under the GW loss.

One step per training graph: decode a reconstruction on the regular grid,
solve for the coupling with the parameters frozen, then hold the coupling
fixed and take one Adam step along the gradient of the GW cost.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import gw, nn
from .errors import InputDomainError, NumericalError
from .graphon import Graph, grid_points, sample_adjacency

log = logging.getLogger(__name__)

OBJECTIVES = ("ignr", "cignr", "discrete")
LATENT_DIMS = (2, 3, 16, 32, 64)


@dataclass
class TrainConfig:
    objective: str = "ignr"
    epochs: Optional[int] = None
    lr: float = 1e-3
    solver: str = "cg"
    max_outer_iters: int = 200
    tol: float = 1e-9
    pg_epsilon: float = 0.01
    pg_inner_iters: int = 50
    latent_dim: int = 16
    seed: int = 0
    shuffle: bool = True
    # "match_input" reconstructs at N_i; "cap:K" at min(N_i, K)
    recon_size_policy: str = "match_input"
    widths: Optional[tuple] = None
    omega0: float = nn.DEFAULT_OMEGA0
    gin_feature: str = "degree"
    gin_aggregation: str = "normalized"
    discrete_resolution: int = 24
    discrete_hidden: tuple = (32, 64)

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise InputDomainError(f"objective must be one of {OBJECTIVES}")
        if self.epochs is None:
            self.epochs = 300 if self.objective == "ignr" else 200
        if self.widths is None:
            self.widths = nn.IGNR_WIDTHS if self.objective == "ignr" else nn.CIGNR_WIDTHS
        self.widths = tuple(int(w) for w in self.widths)
        self.discrete_hidden = tuple(int(w) for w in self.discrete_hidden)
        if self.epochs < 0 or not self.lr >= 0:
            raise InputDomainError("epochs and lr must be nonnegative")
        if self.solver not in gw.SOLVERS:
            raise InputDomainError(f"solver must be one of {tuple(gw.SOLVERS)}")
        if self.objective != "ignr" and self.latent_dim < 1:
            raise InputDomainError("latent_dim must be at least 1")
        recon_size(self.recon_size_policy, 1)

    def solver_options(self, init="product") -> gw.GwSolverOptions:
        return gw.GwSolverOptions(self.max_outer_iters, self.tol, self.pg_epsilon,
                                  self.pg_inner_iters, init)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["discrete_hidden"] = list(self.discrete_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InputDomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def recon_size(policy: str, n: int) -> int:
    if policy == "match_input":
        return n
    if policy.startswith("cap:"):
        try:
            cap = int(policy[4:])
        except ValueError:
            cap = 0
        if cap >= 1:
            return min(n, cap)
    raise InputDomainError(f"unknown recon_size_policy {policy!r}")


@dataclass
class Checkpoint:
    networks: dict
    config: TrainConfig
    loss_history: list = field(default_factory=list)
    rng_digest: str = ""

    @property
    def decoder(self):
        return self.networks["decoder"]

    @property
    def encoder(self):
        return self.networks.get("encoder")


# ---------------------------------------------------------------------------
# decoders: latent (or nothing) -> symmetric reconstruction, and its backward


def _grid(n):
    return nn.GridCoords(grid_points(n))


def decode(params, z, n: int):
    """Symmetric ``n x n`` reconstruction plus a trace for :func:`decode_backward`.

    Coordinate networks are sampled on the regular grid and symmetrized as
    ``(F + F^T) / 2``; the discrete decoder ignores ``n`` (fixed resolution).
    """
    if isinstance(params, nn.SirenParams):
        coords = _grid(n)
        y, tr = nn.siren_forward(params, coords, return_trace=True)
    elif isinstance(params, nn.ModSirenParams):
        coords = _grid(n)
        y, tr = nn.modsiren_forward(params, z, coords, return_trace=True)
    elif isinstance(params, nn.DiscreteDecoderParams):
        m, tr = nn.discrete_decode(params, z, return_trace=True)
        return m, tr
    else:
        raise InputDomainError(f"not a decoder: {type(params).__name__}")
    f = y.reshape(n, n)
    tr["coords"] = coords
    return 0.5 * (f + f.T), tr


def decode_backward(params, z, trace, grad_matrix):
    """Push ``dL/dS`` back to ``(parameter grads, dL/dz or None)``."""
    if isinstance(params, nn.DiscreteDecoderParams):
        return nn.discrete_backward(params, z, grad_matrix, trace)
    g_f = 0.5 * (grad_matrix + grad_matrix.T)
    if isinstance(params, nn.SirenParams):
        return nn.siren_backward(params, trace["coords"], g_f.ravel(), trace), None
    return nn.modsiren_backward(params, z, trace["coords"], g_f.ravel(), trace)


def estimate_grid(params, n: int, z=None) -> np.ndarray:
    """The learned graphon sampled on the ``n``-point grid, symmetrized."""
    if isinstance(params, nn.DiscreteDecoderParams):
        from .evaluate import upsample_linear
        return upsample_linear(nn.discrete_decode(params, z), n)
    return decode(params, z, n)[0]


def build_networks(cfg: TrainConfig) -> dict:
    seed = cfg.seed
    if cfg.objective == "ignr":
        return {"decoder": nn.init_siren(seed, cfg.widths, cfg.omega0)}
    enc = nn.init_gin(seed + 1, cfg.latent_dim, feature=cfg.gin_feature,
                      aggregation=cfg.gin_aggregation)
    if cfg.objective == "cignr":
        dec = nn.init_modsiren(seed, cfg.latent_dim, cfg.widths, cfg.omega0)
    else:
        dec = nn.init_discrete(seed, cfg.latent_dim, cfg.discrete_resolution, cfg.discrete_hidden)
    return {"encoder": enc, "decoder": dec}


# ---------------------------------------------------------------------------
# training


def _graph_loss_step(nets, adj, cfg, init, state=None):
    """Cost, coupling and (optionally) parameter gradients for one graph."""
    enc, dec = nets.get("encoder"), nets["decoder"]
    z = etr = None
    if enc is not None:
        z, etr = nn.gin_encode(enc, adj, return_trace=True)
    m = recon_size(cfg.recon_size_policy, adj.shape[0])
    recon, dtr = decode(dec, z, m)
    res = gw.solve(recon, adj, opts=cfg.solver_options(init), method=cfg.solver)
    if state is None:
        return res, None, None
    d_recon = gw.gw_grad_first(recon, adj, res.coupling)
    g_dec, g_z = decode_backward(dec, z, dtr, d_recon)
    g_enc = nn.gin_backward(enc, adj, etr, g_z) if enc is not None else None
    return res, g_dec, g_enc


def _check_dataset(ds):
    graphs = getattr(ds, "graphs", ds)
    if len(graphs) == 0:
        raise InputDomainError("cannot train on an empty dataset")
    return [g if isinstance(g, Graph) else Graph(g) for g in graphs]


def fit(ds, cfg: TrainConfig, callback=None) -> Checkpoint:
    """Train the networks selected by ``cfg.objective`` on ``ds``.

    ``callback(epoch, mean_loss)`` is called after every epoch.
    """
    graphs = _check_dataset(ds)
    nets = build_networks(cfg)
    states = {name: nn.AdamState(lr=cfg.lr) for name in nets}
    rng = np.random.default_rng(cfg.seed)
    warm = [None] * len(graphs)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(graphs)) if cfg.shuffle else np.arange(len(graphs))
        costs = np.zeros(len(graphs))
        for i in order:
            init = warm[i] if (cfg.solver == "pg" and warm[i] is not None) else "product"
            try:
                res, g_dec, g_enc = _graph_loss_step(nets, graphs[i].adj, cfg, init, state=True)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, graph {i}: {exc}") from exc
            if cfg.solver == "pg":
                warm[i] = res.coupling
            costs[i] = res.cost
            nn.adam_step(states["decoder"], nets["decoder"].tensors, g_dec)
            if g_enc is not None:
                nn.adam_step(states["encoder"], nets["encoder"].tensors, g_enc)
        mean = float(costs.mean())
        if not np.isfinite(mean):
            raise NumericalError(f"non-finite training loss at epoch {epoch}")
        history.append(mean)
        log.debug("epoch %d mean GW2 %.6g", epoch, mean)
        if callback is not None:
            callback(epoch, mean)
    digest = hashlib.sha256(json.dumps(rng.bit_generator.state, sort_keys=True,
                                       default=str).encode()).hexdigest()[:16]
    return Checkpoint(nets, cfg, history, digest)


def train_ignr(ds, cfg: TrainConfig):
    """Fit a single coordinate network; returns ``(SirenParams, loss_history)``."""
    if cfg.objective != "ignr":
        raise InputDomainError("train_ignr needs objective='ignr'")
    ck = fit(ds, cfg)
    return ck.decoder, ck.loss_history


def train_cignr(ds, cfg: TrainConfig):
    if cfg.objective != "cignr":
        raise InputDomainError("train_cignr needs objective='cignr'")
    ck = fit(ds, cfg)
    return ck.encoder, ck.decoder, ck.loss_history


def train_discrete_baseline(ds, cfg: TrainConfig):
    if cfg.objective != "discrete":
        raise InputDomainError("train_discrete_baseline needs objective='discrete'")
    ck = fit(ds, cfg)
    return ck.encoder, ck.decoder, ck.loss_history


def objective(ck: Checkpoint, ds) -> float:
    """Mean per-graph GW cost of the checkpoint's model, solved afresh."""
    graphs = _check_dataset(ds)
    costs = [_graph_loss_step(ck.networks, g.adj, ck.config, "product")[0].cost for g in graphs]
    return float(np.mean(costs))


def encode_dataset(ck: Checkpoint, ds) -> np.ndarray:
    if ck.encoder is None:
        raise InputDomainError("checkpoint has no encoder")
    return np.stack([nn.gin_encode(ck.encoder, g.adj) for g in _check_dataset(ds)])


def generate_graph(params, z=None, n: int = 50, mode: str = "deterministic", seed: int = 0,
                   return_prob: bool = False):
    """Sample a graph of ``n`` nodes from a trained (conditional) network.

    Deterministic mode places nodes on the regular grid; stochastic mode
    draws them uniformly.  Edges are Bernoulli draws on the upper triangle.
    """
    if n < 1:
        raise InputDomainError("graph size must be positive")
    if isinstance(params, nn.ModSirenParams) and z is None:
        raise InputDomainError("a latent code is required for a conditional network")
    rng = np.random.default_rng(seed)
    if mode == "deterministic":
        v = grid_points(n)
    elif mode == "stochastic":
        v = rng.random(n)
    else:
        raise InputDomainError(f"unknown sampling mode {mode!r}")
    xx, yy = np.meshgrid(v, v, indexing="ij")
    coords = np.stack([xx.ravel(), yy.ravel()], axis=1)
    if isinstance(params, nn.ModSirenParams):
        f = nn.modsiren_forward(params, z, coords).reshape(n, n)
    elif isinstance(params, nn.SirenParams):
        f = nn.siren_forward(params, coords).reshape(n, n)
    else:
        raise InputDomainError("graph generation needs a coordinate network")
    prob = 0.5 * (f + f.T)
    g = Graph(sample_adjacency(prob, rng))
    return (g, prob) if return_prob else g


def timed_fit(ds, cfg):
    t0 = time.perf_counter()
    ck = fit(ds, cfg)
    return ck, time.perf_counter() - t0

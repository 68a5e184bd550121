"""Small dense networks with hand-written backward passes.

Parameters live in flat ``{name: ndarray}`` dictionaries so the optimizer,
the checkpoint format and the finite-difference oracle can treat every
network the same way.  All math is float64.

Networks
--------
- SIREN: sine-activated coordinate MLP ``[0,1]^2 -> (0,1)``.
- Modulated SIREN: SIREN whose hidden activations are gated elementwise by
  the outputs of a ReLU modulation MLP driven by a latent code.
- GIN: three-layer graph isomorphism network with mean-pool readout.
- Discrete decoder: ReLU MLP from a latent code to a symmetric ``K x K``
  matrix (fixed-resolution baseline).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import InputDomainError

DEFAULT_OMEGA0 = 30.0
IGNR_WIDTHS = (20, 20, 20)
CIGNR_WIDTHS = (48, 36, 24)
GIN_WIDTH = 32
GIN_LAYERS = 3


def sigmoid(x):
    # split by sign so large |x| never overflows exp
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(x, 0.0)


@dataclass
class ParamSet:
    """Named tensors plus the architecture settings needed to use them."""

    tensors: dict

    kind = "base"

    def copy(self):
        return copy.deepcopy(self)

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def n_params(self, include_bias: bool = True) -> int:
        """Number of scalars; ``include_bias=False`` counts weight matrices only."""
        return sum(v.size for k, v in self.tensors.items()
                   if include_bias or not _is_bias(k))

    def config(self) -> dict:
        return {}


def _is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1] in ("b", "b1", "b2", "eps")


# ---------------------------------------------------------------------------
# SIREN


@dataclass
class SirenParams(ParamSet):
    omega0: float = DEFAULT_OMEGA0
    kind = "siren"

    @property
    def widths(self) -> list:
        return [self.tensors[f"layers.{i}.W"].shape[0] for i in range(self.depth)]

    @property
    def depth(self) -> int:
        return sum(1 for k in self.tensors if k.startswith("layers.") and k.endswith(".W"))

    def config(self) -> dict:
        return {"widths": self.widths, "omega0": self.omega0}


class GridCoords:
    """The ``n x n`` product grid ``{(x_p, x_q)}`` in row-major order.

    Networks exploit the product structure in their first layer: the
    pre-activation splits as ``A[p] + B[q]``, so its sine and cosine come
    from angle-addition on ``O(n)`` trig evaluations.
    """

    def __init__(self, points):
        self.points = np.asarray(points, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.n * self.n

    @property
    def array(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.points, self.points, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)


def _first_layer_grid(w, b, omega0, grid):
    a = omega0 * (np.outer(grid.points, w[:, 0]) + b)
    c = omega0 * np.outer(grid.points, w[:, 1])
    sa, ca, sc, cc = np.sin(a), np.cos(a), np.sin(c), np.cos(c)
    s = sa[:, None, :] * cc[None, :, :]
    s += ca[:, None, :] * sc[None, :, :]
    return s.reshape(grid.n * grid.n, -1), (sa, ca, sc, cc)


def _first_layer_cos(parts, n):
    sa, ca, sc, cc = parts
    cos = ca[:, None, :] * cc[None, :, :]
    cos -= sa[:, None, :] * sc[None, :, :]
    return cos.reshape(n * n, -1)


def _sine_stack(tensors, prefix, coords, omega0, gates=None):
    """Hidden sine layers.

    Returns per-layer pre-activations, activations and (gated stacks
    only) the ungated sines.  For grid inputs
    the first entry of the pre-activation list holds the separable trig
    factors instead of the (never materialized) pre-activation.
    """
    pres, acts, sines = [], [], []
    h = coords
    i = 0
    while f"{prefix}layers.{i}.W" in tensors:
        w = tensors[f"{prefix}layers.{i}.W"]
        b = tensors[f"{prefix}layers.{i}.b"]
        if i == 0 and isinstance(coords, GridCoords):
            s, pre = _first_layer_grid(w, b, omega0, coords)
        else:
            pre = h @ w.T
            pre += b
            if i == 0:
                pre *= omega0
            s = np.sin(pre)
        if gates is not None:
            sines.append(s)
            s = s * gates[i]
        h = s
        pres.append(pre)
        acts.append(h)
        i += 1
    return pres, acts, sines


def _sine_stack_backward(tensors, prefix, coords, omega0, pres, acts, g_out, grads,
                         gates=None, sines=None):
    """Backprop ``g_out`` (per-coordinate gradient of the logit) through the stack.

    Fills ``grads`` for the stack and the output layer; returns the
    gradients of the gates (``None`` when ungated).
    """
    w_out = tensors[f"{prefix}out.W"]
    depth = len(pres)
    grads[f"{prefix}out.W"] = (g_out @ acts[-1])[None, :]
    grads[f"{prefix}out.b"] = np.array([g_out.sum()])
    g_h = np.outer(g_out, w_out[0])
    g_gates = [None] * depth
    on_grid = isinstance(coords, GridCoords)
    for i in range(depth - 1, -1, -1):
        if i == 0 and on_grid:
            cos = _first_layer_cos(pres[0], coords.n)
        else:
            cos = np.cos(pres[i])
        if gates is not None:
            g_gates[i] = np.einsum("pk,pk->k", g_h, sines[i])
            cos *= gates[i]
        g_pre = g_h
        g_pre *= cos
        if i == 0:
            if on_grid:
                n = coords.n
                g3 = g_pre.reshape(n, n, -1)
                row = g3.sum(axis=1)
                col = g3.sum(axis=0)
                gw_ = np.stack([coords.points @ row, coords.points @ col], axis=1)
                grads[f"{prefix}layers.0.W"] = omega0 * gw_
                grads[f"{prefix}layers.0.b"] = omega0 * row.sum(axis=0)
            else:
                grads[f"{prefix}layers.0.W"] = omega0 * (g_pre.T @ coords)
                grads[f"{prefix}layers.0.b"] = omega0 * g_pre.sum(axis=0)
        else:
            grads[f"{prefix}layers.{i}.W"] = g_pre.T @ acts[i - 1]
            grads[f"{prefix}layers.{i}.b"] = g_pre.sum(axis=0)
            g_h = g_pre @ tensors[f"{prefix}layers.{i}.W"]
    return g_gates


def _coords(coords):
    if isinstance(coords, GridCoords):
        return coords
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise InputDomainError("coordinates must have shape (P, 2)")
    return coords


def siren_forward(p: SirenParams, coords, return_trace: bool = False):
    """Evaluate the coordinate network at ``coords`` (shape ``(P, 2)``).

    The first layer computes ``sin(omega0 * (W x + b))``, later layers
    ``sin(W h + b)``, and the output is ``sigmoid(W h + b)``.
    """
    coords = _coords(coords)
    pres, acts, _ = _sine_stack(p.tensors, "", coords, p.omega0)
    logit = acts[-1] @ p.tensors["out.W"][0] + p.tensors["out.b"][0]
    y = sigmoid(logit)
    if return_trace:
        return y, {"pres": pres, "acts": acts, "y": y}
    return y


def siren_backward(p: SirenParams, coords, upstream, trace=None) -> dict:
    """Gradients of ``sum_k upstream[k] * f(coords[k])`` for every tensor."""
    coords = _coords(coords)
    upstream = np.asarray(upstream, dtype=np.float64).ravel()
    if upstream.shape[0] != len(coords):
        raise InputDomainError("upstream length must equal the number of coordinates")
    if trace is None:
        _, trace = siren_forward(p, coords, return_trace=True)
    y = trace["y"]
    g_out = upstream * y * (1.0 - y)
    grads = {}
    _sine_stack_backward(p.tensors, "", coords, p.omega0, trace["pres"], trace["acts"], g_out, grads)
    return grads


# ---------------------------------------------------------------------------
# Modulated SIREN


@dataclass
class ModSirenParams(ParamSet):
    latent_dim: int = 16
    omega0: float = DEFAULT_OMEGA0
    kind = "modsiren"

    @property
    def widths(self) -> list:
        i, out = 0, []
        while f"synthesis.layers.{i}.W" in self.tensors:
            out.append(self.tensors[f"synthesis.layers.{i}.W"].shape[0])
            i += 1
        return out

    def config(self) -> dict:
        return {"widths": self.widths, "latent_dim": self.latent_dim, "omega0": self.omega0}


def _check_latent(z, d):
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.shape[0] != d:
        raise InputDomainError(f"latent code has dimension {z.shape[0]}, expected {d}")
    return z


def modulation_forward(p: ModSirenParams, z):
    """Gates ``a_i`` for every synthesis layer plus the pre-activations.

    ``a_1 = relu(W'_0 z + b'_0)`` and ``a_i = relu(W'_i [a_{i-1}; z] + b'_i)``.
    """
    z = _check_latent(z, p.latent_dim)
    gates, pres = [], []
    inp = z
    for i in range(len(p.widths)):
        pre = p.tensors[f"modulation.layers.{i}.W"] @ inp + p.tensors[f"modulation.layers.{i}.b"]
        a = relu(pre)
        pres.append(pre)
        gates.append(a)
        inp = np.concatenate([a, z])
    return gates, pres


def modsiren_forward(p: ModSirenParams, z, coords, return_trace: bool = False):
    coords = _coords(coords)
    gates, mod_pres = modulation_forward(p, z)
    pres, acts, sines = _sine_stack(p.tensors, "synthesis.", coords, p.omega0, gates)
    logit = acts[-1] @ p.tensors["synthesis.out.W"][0] + p.tensors["synthesis.out.b"][0]
    y = sigmoid(logit)
    if return_trace:
        return y, {"pres": pres, "acts": acts, "sines": sines, "y": y, "gates": gates,
                   "mod_pres": mod_pres}
    return y


def modsiren_backward(p: ModSirenParams, z, coords, upstream, trace=None):
    """Returns ``(parameter gradients, gradient with respect to z)``."""
    coords = _coords(coords)
    z = _check_latent(z, p.latent_dim)
    upstream = np.asarray(upstream, dtype=np.float64).ravel()
    if upstream.shape[0] != len(coords):
        raise InputDomainError("upstream length must equal the number of coordinates")
    if trace is None:
        _, trace = modsiren_forward(p, z, coords, return_trace=True)
    y = trace["y"]
    g_out = upstream * y * (1.0 - y)
    grads = {}
    g_gates = _sine_stack_backward(p.tensors, "synthesis.", coords, p.omega0, trace["pres"],
                                   trace["acts"], g_out, grads, gates=trace["gates"],
                                   sines=trace["sines"])
    gates, mod_pres = trace["gates"], trace["mod_pres"]
    d = p.latent_dim
    g_z = np.zeros(d)
    g_a = np.zeros_like(gates[-1])
    for i in range(len(gates) - 1, -1, -1):
        g_pre = (g_gates[i] + g_a) * (mod_pres[i] > 0)
        inp = z if i == 0 else np.concatenate([gates[i - 1], z])
        w = p.tensors[f"modulation.layers.{i}.W"]
        grads[f"modulation.layers.{i}.W"] = np.outer(g_pre, inp)
        grads[f"modulation.layers.{i}.b"] = g_pre
        g_inp = w.T @ g_pre
        if i == 0:
            g_z += g_inp
        else:
            g_a = g_inp[:-d]
            g_z += g_inp[-d:]
    return grads, g_z


# ---------------------------------------------------------------------------
# GIN encoder


@dataclass
class GinParams(ParamSet):
    latent_dim: int = 16
    # "degree" -> degree / n, "constant" -> 1
    feature: str = "degree"
    # "sum" aggregates sum_u h_u over neighbors; "normalized" divides that sum by n
    aggregation: str = "sum"
    kind = "gin"

    @property
    def depth(self) -> int:
        return sum(1 for k in self.tensors if k.endswith(".eps"))

    def config(self) -> dict:
        return {"latent_dim": self.latent_dim, "feature": self.feature,
                "aggregation": self.aggregation, "width": self.tensors["layers.0.W1"].shape[0], "depth": self.depth}


def node_features(adj, feature="degree"):
    n = adj.shape[0]
    if feature == "degree":
        return (adj.sum(axis=1) / n)[:, None]
    if feature == "constant":
        return np.ones((n, 1))
    raise InputDomainError(f"unknown node feature {feature!r}")


GIN_AGGREGATIONS = ("sum", "normalized")


def _neighbor_scale(p: GinParams, n: int) -> float:
    if p.aggregation == "sum":
        return 1.0
    if p.aggregation == "normalized":
        return 1.0 / n
    raise InputDomainError(f"unknown GIN aggregation {p.aggregation!r}")


def gin_encode(p: GinParams, g, return_trace: bool = False):
    """Graph-level latent code: GIN layers, mean pooling, linear readout.

    ``g`` may be a :class:`~ignr.graphon.Graph` or an adjacency matrix.
    """
    adj = np.asarray(getattr(g, "adj", g), dtype=np.float64)
    if adj.shape[0] < 1:
        raise InputDomainError("cannot encode an empty graph")
    h = node_features(adj, p.feature)
    c = _neighbor_scale(p, adj.shape[0])
    layers = []
    for i in range(p.depth):
        t = p.tensors
        agg = (1.0 + t[f"layers.{i}.eps"][0]) * h + c * (adj @ h)
        z1 = agg @ t[f"layers.{i}.W1"].T + t[f"layers.{i}.b1"]
        r1 = relu(z1)
        z2 = r1 @ t[f"layers.{i}.W2"].T + t[f"layers.{i}.b2"]
        layers.append({"h_in": h, "agg": agg, "z1": z1, "r1": r1, "z2": z2})
        h = relu(z2)
    pooled = h.mean(axis=0)
    z = p.tensors["readout.W"] @ pooled + p.tensors["readout.b"]
    if return_trace:
        return z, {"adj": adj, "layers": layers, "h_out": h, "pooled": pooled}
    return z


def gin_backward(p: GinParams, g, trace, g_z) -> dict:
    if trace is None:
        _, trace = gin_encode(p, g, return_trace=True)
    g_z = np.asarray(g_z, dtype=np.float64).ravel()
    adj = trace["adj"]
    n = adj.shape[0]
    t = p.tensors
    c = _neighbor_scale(p, n)
    grads = {"readout.W": np.outer(g_z, trace["pooled"]), "readout.b": g_z.copy()}
    g_h = np.tile(t["readout.W"].T @ g_z / n, (n, 1))
    for i in range(p.depth - 1, -1, -1):
        lay = trace["layers"][i]
        g_z2 = g_h * (lay["z2"] > 0)
        grads[f"layers.{i}.W2"] = g_z2.T @ lay["r1"]
        grads[f"layers.{i}.b2"] = g_z2.sum(axis=0)
        g_z1 = (g_z2 @ t[f"layers.{i}.W2"]) * (lay["z1"] > 0)
        grads[f"layers.{i}.W1"] = g_z1.T @ lay["agg"]
        grads[f"layers.{i}.b1"] = g_z1.sum(axis=0)
        g_agg = g_z1 @ t[f"layers.{i}.W1"]
        grads[f"layers.{i}.eps"] = np.array([np.sum(g_agg * lay["h_in"])])
        g_h = (1.0 + t[f"layers.{i}.eps"][0]) * g_agg + c * (adj.T @ g_agg)
    return grads


# ---------------------------------------------------------------------------
# Discrete baseline decoder


@dataclass
class DiscreteDecoderParams(ParamSet):
    latent_dim: int = 16
    resolution: int = 24
    kind = "discrete"

    @property
    def hidden(self) -> list:
        i, out = 0, []
        while f"layers.{i}.W" in self.tensors:
            out.append(self.tensors[f"layers.{i}.W"].shape[0])
            i += 1
        return out

    def config(self) -> dict:
        return {"latent_dim": self.latent_dim, "resolution": self.resolution, "hidden": self.hidden}


def _fill_diagonal(m):
    """Diagonal entry = mean of its in-row neighbours ``m[i, i-1]``, ``m[i, i+1]``."""
    k = m.shape[0]
    off = np.zeros(k)
    cnt = np.zeros(k)
    idx = np.arange(k)
    off[1:] += m[idx[1:], idx[1:] - 1]
    cnt[1:] += 1
    off[:-1] += m[idx[:-1], idx[:-1] + 1]
    cnt[:-1] += 1
    m[idx, idx] = off / cnt
    return m


def discrete_decode(p: DiscreteDecoderParams, z, return_trace: bool = False):
    """Decode ``z`` to a symmetric ``K x K`` matrix in ``(0, 1)``.

    The MLP emits the ``K(K-1)/2`` strictly-upper entries; they are mirrored
    and the diagonal is filled from the adjacent off-diagonal entries.
    """
    z = _check_latent(z, p.latent_dim)
    k = p.resolution
    h = z
    pres, acts = [], [z]
    for i in range(len(p.hidden)):
        pre = p.tensors[f"layers.{i}.W"] @ h + p.tensors[f"layers.{i}.b"]
        h = relu(pre)
        pres.append(pre)
        acts.append(h)
    logit = p.tensors["out.W"] @ h + p.tensors["out.b"]
    vals = sigmoid(logit)
    m = np.zeros((k, k))
    iu = np.triu_indices(k, 1)
    m[iu] = vals
    m = m + m.T
    m = _fill_diagonal(m)
    if return_trace:
        return m, {"pres": pres, "acts": acts, "vals": vals}
    return m


def discrete_backward(p: DiscreteDecoderParams, z, upstream, trace=None):
    """Gradients of ``sum(upstream * decode(z))``; returns ``(grads, dL/dz)``."""
    z = _check_latent(z, p.latent_dim)
    if trace is None:
        _, trace = discrete_decode(p, z, return_trace=True)
    k = p.resolution
    up = np.asarray(upstream, dtype=np.float64).reshape(k, k)
    idx = np.arange(k)
    diag = up[idx, idx]
    cnt = np.where((idx == 0) | (idx == k - 1), 1.0, 2.0)
    g_m = up.copy()
    g_m[idx, idx] = 0.0
    # diagonal entry i reads m[i, i-1] and m[i, i+1]
    g_m[idx[1:], idx[1:] - 1] += diag[1:] / cnt[1:]
    g_m[idx[:-1], idx[:-1] + 1] += diag[:-1] / cnt[:-1]
    iu = np.triu_indices(k, 1)
    g_vals = g_m[iu] + g_m.T[iu]
    vals = trace["vals"]
    g_logit = g_vals * vals * (1.0 - vals)
    grads = {"out.W": np.outer(g_logit, trace["acts"][-1]), "out.b": g_logit}
    g_h = p.tensors["out.W"].T @ g_logit
    for i in range(len(p.hidden) - 1, -1, -1):
        g_pre = g_h * (trace["pres"][i] > 0)
        grads[f"layers.{i}.W"] = np.outer(g_pre, trace["acts"][i])
        grads[f"layers.{i}.b"] = g_pre
        g_h = p.tensors[f"layers.{i}.W"].T @ g_pre
    return grads, g_h


# ---------------------------------------------------------------------------
# Initialization


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape)


def _sine_layers(rng, prefix, widths, omega0, in_dim=2):
    t = {}
    fan = in_dim
    for i, w in enumerate(widths):
        # first layer: U(-1/fan, 1/fan) (omega0 applied in forward); later: U(-sqrt(6/fan), ..)
        bound = 1.0 / fan if i == 0 else np.sqrt(6.0 / fan)
        t[f"{prefix}layers.{i}.W"] = _uniform(rng, bound, (w, fan))
        t[f"{prefix}layers.{i}.b"] = _uniform(rng, 1.0 / fan if i == 0 else 1.0 / np.sqrt(fan), (w,))
        fan = w
    t[f"{prefix}out.W"] = _uniform(rng, np.sqrt(6.0 / fan) / 4.0, (1, fan))
    t[f"{prefix}out.b"] = np.zeros(1)
    return t


def _he(rng, fan_out, fan_in):
    return _uniform(rng, np.sqrt(6.0 / fan_in), (fan_out, fan_in))


def init_siren(seed: int, widths=IGNR_WIDTHS, omega0: float = DEFAULT_OMEGA0) -> SirenParams:
    rng = np.random.default_rng(seed)
    return SirenParams(_sine_layers(rng, "", list(widths), omega0), omega0=float(omega0))


def init_modsiren(seed: int, latent_dim: int, widths=CIGNR_WIDTHS,
                  omega0: float = DEFAULT_OMEGA0) -> ModSirenParams:
    rng = np.random.default_rng(seed)
    t = _sine_layers(rng, "synthesis.", list(widths), omega0)
    fan = latent_dim
    for i, w in enumerate(widths):
        t[f"modulation.layers.{i}.W"] = _he(rng, w, fan)
        # positive bias keeps the gates open at initialization
        t[f"modulation.layers.{i}.b"] = np.full(w, 1.0)
        fan = w + latent_dim
    return ModSirenParams(t, latent_dim=int(latent_dim), omega0=float(omega0))


def init_gin(seed: int, latent_dim: int, width: int = GIN_WIDTH, depth: int = GIN_LAYERS,
             feature: str = "degree", aggregation: str = "sum") -> GinParams:
    rng = np.random.default_rng(seed)
    t = {}
    fan = 1
    for i in range(depth):
        t[f"layers.{i}.eps"] = np.zeros(1)
        t[f"layers.{i}.W1"] = _he(rng, width, fan)
        t[f"layers.{i}.b1"] = np.zeros(width)
        t[f"layers.{i}.W2"] = _he(rng, width, width)
        t[f"layers.{i}.b2"] = np.zeros(width)
        fan = width
    t["readout.W"] = _uniform(rng, np.sqrt(3.0 / width), (latent_dim, width))
    t["readout.b"] = np.zeros(latent_dim)
    if aggregation not in GIN_AGGREGATIONS:
        raise InputDomainError(f"unknown GIN aggregation {aggregation!r}")
    return GinParams(t, latent_dim=int(latent_dim), feature=feature, aggregation=aggregation)


def init_discrete(seed: int, latent_dim: int, resolution: int, hidden=(32, 64)) -> DiscreteDecoderParams:
    if resolution < 2:
        raise InputDomainError("discrete decoder resolution must be at least 2")
    rng = np.random.default_rng(seed)
    t = {}
    fan = latent_dim
    for i, w in enumerate(hidden):
        t[f"layers.{i}.W"] = _he(rng, w, fan)
        t[f"layers.{i}.b"] = np.zeros(w)
        fan = w
    n_out = resolution * (resolution - 1) // 2
    t["out.W"] = _uniform(rng, np.sqrt(6.0 / fan) / 4.0, (n_out, fan))
    t["out.b"] = np.zeros(n_out)
    return DiscreteDecoderParams(t, latent_dim=int(latent_dim), resolution=int(resolution))


def init_params(kind: str, seed: int, **config) -> ParamSet:
    """Seeded initialization for ``kind`` in siren/modsiren/gin/discrete."""
    builders = {"siren": init_siren, "modsiren": init_modsiren, "gin": init_gin,
                "discrete": init_discrete}
    if kind not in builders:
        raise InputDomainError(f"unknown network kind {kind!r}")
    return builders[kind](seed, **config)


PARAM_TYPES = {cls.kind: cls for cls in (SirenParams, ModSirenParams, GinParams, DiscreteDecoderParams)}


# ---------------------------------------------------------------------------
# Optimizer and gradient oracle


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict) -> None:
    """In-place Adam update of ``params`` (a name -> array dict)."""
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            continue
        if g.shape != p.shape:
            raise InputDomainError(f"gradient for {k} has shape {g.shape}, expected {p.shape}")
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def finite_diff_grad(f, params: dict, step: float = 1e-6, keys=None) -> dict:
    """Central-difference gradient of scalar ``f(params)``, one scalar at a time."""
    if step <= 0:
        raise InputDomainError("finite-difference step must be positive")
    out = {}
    for k in (keys or list(params)):
        arr = params[k]
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + step
            fp = f(params)
            flat[j] = old - step
            fm = f(params)
            flat[j] = old
            gflat[j] = (fp - fm) / (2.0 * step)
        out[k] = g
    return out

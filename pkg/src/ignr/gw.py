"""Squared Gromov-Wasserstein discrepancy between weighted graphs.

The objective between ``(A1, h1)`` and ``(A2, h2)`` is

    sum_{i,k,j,l} (A1[i,k] - A2[j,l])**2 T[i,j] T[k,l]

minimized over couplings ``T`` with marginals ``h1`` and ``h2``.  For the
square loss it splits into a coupling-independent part fixed by the
marginals and a bilinear cross term ``-2 <A1 T A2^T, T>``, which is what
every routine below works with.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .errors import InputDomainError, NumericalError

for _key in ("JAX", "PYTORCH", "TENSORFLOW", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_key}", "1")
import ot  # noqa: E402

MARGINAL_TOL = 1e-8


@dataclass
class GwSolverOptions:
    max_outer_iters: int = 200
    tol: float = 1e-9
    pg_epsilon: float = 0.01
    pg_inner_iters: int = 50
    # "product", "identity", or a warm-start coupling
    init: Union[str, np.ndarray] = "product"

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.pg_inner_iters < 1:
            raise InputDomainError("iteration counts must be positive")
        if not self.pg_epsilon > 0:
            raise InputDomainError("pg_epsilon must be positive")
        if isinstance(self.init, str) and self.init not in ("product", "identity"):
            raise InputDomainError(f"unknown init {self.init!r}")

    def with_init(self, init) -> "GwSolverOptions":
        return GwSolverOptions(self.max_outer_iters, self.tol, self.pg_epsilon,
                               self.pg_inner_iters, init)

    def to_dict(self) -> dict:
        return {"max_outer_iters": self.max_outer_iters, "tol": self.tol,
                "pg_epsilon": self.pg_epsilon, "pg_inner_iters": self.pg_inner_iters}


@dataclass
class GwResult:
    cost: float
    coupling: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    rel_decrease: float = float("nan")


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _as_square(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputDomainError(f"{name} must be a square matrix, got shape {a.shape}")
    return a


def _check_hist(h, n, name):
    h = uniform(n) if h is None else np.asarray(h, dtype=np.float64)
    if h.shape != (n,):
        raise InputDomainError(f"{name} has length {h.shape}, expected {n}")
    if np.any(h <= 0):
        raise InputDomainError(f"{name} must be strictly positive")
    if abs(h.sum() - 1.0) > 1e-10:
        raise InputDomainError(f"{name} must sum to one")
    return h


def _check_coupling(a1, a2, t):
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (a1.shape[0], a2.shape[0]):
        raise InputDomainError(
            f"coupling shape {t.shape} does not match graphs ({a1.shape[0]}, {a2.shape[0]})")
    return t


def _constant_part(a1, a2, h1, h2) -> float:
    return float(h1 @ (a1 * a1) @ h1 + h2 @ (a2 * a2) @ h2)


def _cross(a1, a2, t) -> np.ndarray:
    return a1 @ t @ a2.T


def gw_cost(a1, a2, t) -> float:
    """Squared GW objective at coupling ``t`` (marginals read off ``t``)."""
    a1 = _as_square(a1, "a1")
    a2 = _as_square(a2, "a2")
    t = _check_coupling(a1, a2, t)
    h1, h2 = t.sum(axis=1), t.sum(axis=0)
    return _constant_part(a1, a2, h1, h2) - 2.0 * float(np.sum(_cross(a1, a2, t) * t))


def gw_grad_first(a1, a2, t) -> np.ndarray:
    """Gradient of :func:`gw_cost` with respect to the entries of ``a1``."""
    a1 = _as_square(a1, "a1")
    a2 = _as_square(a2, "a2")
    t = _check_coupling(a1, a2, t)
    h1 = t.sum(axis=1)
    return 2.0 * (a1 * np.outer(h1, h1) - t @ a2 @ t.T)


def linearized_cost(a1, a2, h1, h2, t) -> np.ndarray:
    """``L(A1, A2) (x) T``: the cost matrix of the linearized problem.

    The gradient of the objective at ``t`` is ``2 *`` this matrix for
    symmetric inputs; rows/columns shifts that are constant over the
    coupling polytope are kept so values are interpretable.
    """
    c1 = (a1 * a1) @ h1
    c2 = (a2 * a2) @ h2
    return c1[:, None] + c2[None, :] - 2.0 * _cross(a1, a2, t)


def emd(h1, h2, cost) -> np.ndarray:
    """Exact linear optimal transport.

    Equal-size uniform marginals reduce to an assignment problem whose
    optimum is a scaled permutation; everything else goes through the
    network simplex.
    """
    n1, n2 = cost.shape
    if n1 == n2 and np.all(h1 == h1[0]) and np.all(h2 == h2[0]):
        rows, cols = linear_sum_assignment(cost)
        t = np.zeros((n1, n2))
        t[rows, cols] = 1.0 / n1
        return t
    t = ot.emd(h1, h2, np.ascontiguousarray(cost), numItermax=1_000_000)
    return np.asarray(t, dtype=np.float64)


def _init_coupling(init, h1, h2):
    n1, n2 = len(h1), len(h2)
    if isinstance(init, str):
        if init == "identity" and n1 == n2 and np.allclose(h1, h2, rtol=0, atol=1e-15):
            return np.diag(h1)
        return np.outer(h1, h2)
    t = np.asarray(init, dtype=np.float64)
    if t.shape != (n1, n2):
        raise InputDomainError(f"warm-start coupling has shape {t.shape}, expected {(n1, n2)}")
    if np.any(t < 0) or np.abs(t.sum(1) - h1).max() > 1e-6 or np.abs(t.sum(0) - h2).max() > 1e-6:
        raise InputDomainError("warm-start coupling is not feasible")
    return round_to_marginals(t, h1, h2)


def round_to_marginals(t, h1, h2) -> np.ndarray:
    """Project a nonnegative matrix onto the coupling polytope.

    Rows and columns that carry too much mass are scaled down, and the
    missing mass is restored with a rank-one correction, which gives a
    coupling whose marginals match up to rounding.
    """
    t = np.asarray(t, dtype=np.float64)
    r = t.sum(axis=1)
    x = np.minimum(1.0, np.divide(h1, r, out=np.ones_like(r), where=r > 0))
    t = t * x[:, None]
    c = t.sum(axis=0)
    y = np.minimum(1.0, np.divide(h2, c, out=np.ones_like(c), where=c > 0))
    t = t * y[None, :]
    err_r = h1 - t.sum(axis=1)
    err_c = h2 - t.sum(axis=0)
    mass = err_r.sum()
    if mass > 0:
        t = t + np.outer(err_r, err_c) / mass
    return np.maximum(t, 0.0)


def _prep(a1, a2, h1, h2):
    a1 = _as_square(a1, "a1")
    a2 = _as_square(a2, "a2")
    h1 = _check_hist(h1, a1.shape[0], "h1")
    h2 = _check_hist(h2, a2.shape[0], "h2")
    return a1, a2, h1, h2


def _stopped(prev, new, tol):
    return prev - new <= tol * max(abs(prev), 1e-300)


def solve_cg(a1, a2, h1=None, h2=None, opts: Optional[GwSolverOptions] = None) -> GwResult:
    """Conditional-gradient (Frank-Wolfe) GW solver with exact line search.

    Each iteration solves the linearized problem exactly, then moves along
    the segment towards its solution by the step that minimizes the
    quadratic objective in closed form.  Steps that would not decrease the
    objective are rejected, so the recorded history is non-increasing.
    """
    opts = opts or GwSolverOptions()
    a1, a2, h1, h2 = _prep(a1, a2, h1, h2)
    const = _constant_part(a1, a2, h1, h2)
    t = _init_coupling(opts.init, h1, h2)
    cross_t = _cross(a1, a2, t)
    f = const - 2.0 * float(np.sum(cross_t * t))
    history = [f]
    converged = False
    rel = float("nan")
    it = 0
    for it in range(1, opts.max_outer_iters + 1):
        grad_dir = linearized_cost(a1, a2, h1, h2, t)
        s = emd(h1, h2, grad_dir)
        delta = s - t
        cross_d = _cross(a1, a2, delta)
        # f(t + g d) = f(t) + b g + a g^2
        a = -2.0 * float(np.sum(cross_d * delta))
        b = -2.0 * (float(np.sum(cross_d * t)) + float(np.sum(cross_t * delta)))
        if a > 0:
            gamma = min(1.0, max(0.0, -b / (2.0 * a)))
        else:
            gamma = 1.0 if a + b < 0 else 0.0
        if gamma == 0.0:
            converged = True
            rel = 0.0
            break
        t_new = t + gamma * delta
        cross_new = cross_t + gamma * cross_d
        f_new = const - 2.0 * float(np.sum(cross_new * t_new))
        if not np.isfinite(f_new):
            raise NumericalError(f"conditional gradient produced a non-finite cost at iteration {it}")
        if f_new > f:
            converged = True
            rel = 0.0
            break
        rel = (f - f_new) / max(abs(f), 1e-300)
        stop = _stopped(f, f_new, opts.tol)
        t, cross_t, f = t_new, cross_new, f_new
        history.append(f)
        if stop:
            converged = True
            break
    return GwResult(max(f, 0.0), t, it, converged, history, rel)


def _sinkhorn_log(log_k, h1, h2, iters):
    log_h1, log_h2 = np.log(h1), np.log(h2)
    f = np.zeros(len(h1))
    g = np.zeros(len(h2))
    for _ in range(iters):
        f = log_h1 - logsumexp(log_k + g[None, :], axis=1)
        g = log_h2 - logsumexp(log_k + f[:, None], axis=0)
    return np.exp(log_k + f[:, None] + g[None, :])


def _sinkhorn(log_k, h1, h2, iters):
    # row-normalized kernel: every row keeps an entry equal to one
    log_k = log_k - log_k.max(axis=1, keepdims=True)
    k = np.exp(log_k)
    u = np.ones(len(h1))
    v = np.ones(len(h2))
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for _ in range(iters):
            u = h1 / (k @ v)
            v = h2 / (k.T @ u)
        t = u[:, None] * k * v[None, :]
    if np.all(np.isfinite(t)) and np.all(np.isfinite(u)) and np.all(np.isfinite(v)):
        return t
    return _sinkhorn_log(log_k, h1, h2, iters)


def solve_pg(a1, a2, h1=None, h2=None, opts: Optional[GwSolverOptions] = None) -> GwResult:
    """Proximal-point GW solver with a KL proximity term.

    Each outer iteration solves ``min <L (x) T_n, T> + eps KL(T | T_n)``
    over couplings by Sinkhorn scaling of the kernel ``T_n exp(-L (x) T_n / eps)``.
    The scaled iterate is rounded onto the coupling polytope, so every
    iterate (and the returned coupling) is feasible.  The reported cost is
    the unregularized objective.
    """
    opts = opts or GwSolverOptions()
    a1, a2, h1, h2 = _prep(a1, a2, h1, h2)
    eps = opts.pg_epsilon
    const = _constant_part(a1, a2, h1, h2)
    t = _init_coupling(opts.init, h1, h2)
    f = const - 2.0 * float(np.sum(_cross(a1, a2, t) * t))
    history = [f]
    converged = False
    rel = float("nan")
    it = 0
    for it in range(1, opts.max_outer_iters + 1):
        cost = linearized_cost(a1, a2, h1, h2, t)
        with np.errstate(divide="ignore"):
            log_k = np.log(t) - cost / eps
        t_new = _sinkhorn(log_k, h1, h2, opts.pg_inner_iters)
        if not np.all(np.isfinite(t_new)):
            raise NumericalError(
                f"proximal Sinkhorn scaling diverged at outer iteration {it} (eps={eps})")
        t_new = round_to_marginals(t_new, h1, h2)
        f_new = const - 2.0 * float(np.sum(_cross(a1, a2, t_new) * t_new))
        rel = (f - f_new) / max(abs(f), 1e-300)
        stop = abs(f - f_new) <= opts.tol * max(abs(f), 1e-300)
        t, f = t_new, f_new
        history.append(f)
        if stop:
            converged = True
            break
    return GwResult(max(f, 0.0), t, it, converged, history, rel)


SOLVERS = {"cg": solve_cg, "pg": solve_pg}


def solve(a1, a2, h1=None, h2=None, opts=None, method: str = "cg") -> GwResult:
    try:
        fn = SOLVERS[method]
    except KeyError:
        raise InputDomainError(f"unknown GW solver {method!r}") from None
    return fn(a1, a2, h1, h2, opts)

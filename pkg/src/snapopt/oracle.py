"""Objective oracles and the problem zoo.

Every problem exposes value, gradient and Hessian-vector product in closed
form.  Factorization variables are the row-major flattening of the factor
stack, e.g. ``x = [W.ravel(), H.ravel()]`` for NMF.

Lipschitz estimates
-------------------
Quadratics report exact constants (``L1 = ||Q||_2``; ``L2`` is replaced by
machine epsilon).  The quartic and sigmoid objectives have no global
constants, so each kind provides ``lipschitz(radius)``: bounds valid on the
Frobenius ball ``||x|| <= radius``.

* nmf:  ``L1 = 3 r^2 + 2 ||M||``, ``L2 = 6 r``
* penalized-nmf:  nmf bound plus ``rho * max(k - 1, 1)`` on ``L1``
* sym-nmf-simplex:  ``L1 = 12 r^2 + 4 ||M||``, ``L2 = 24 r``
* two-layer-nn:  with ``a = s + r xi / 4``, ``b2 = xi / 2 + c2 r xi^2``,
  ``b3 = 3 c2 xi^2 + r xi^3 / 8``, ``res = r s + ||Y||``:
  ``L1 = 2 a^2 + 2 res b2``, ``L2 = 6 a b2 + 2 res b3``, where
  ``xi = ||X||``, ``s = sqrt(hidden * n)`` bounds ``||sigmoid(.)||`` and
  ``c2 = 1 / (6 sqrt 3)`` bounds ``|sigmoid''|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from snapopt.errors import ParameterError
from snapopt.poly import Polyhedron, project_feasible

MACHINE_FLOOR = float(np.finfo(float).eps)
_SIG2 = 1.0 / (6.0 * np.sqrt(3.0))

KINDS = ("nmf", "sym-nmf-simplex", "penalized-nmf", "two-layer-nn", "box-qp", "random-qp")


@dataclass(frozen=True)
class ObjectiveOracle:
    f: Callable
    grad: Callable
    hess_vec: Callable | None
    L1: float
    L2: float
    lipschitz: Callable | None = None

    def lipschitz_at(self, radius):
        if self.lipschitz is None:
            return self.L1, self.L2
        return self.lipschitz(radius)


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    oracle: ObjectiveOracle
    feasible: Polyhedron
    known_optimum: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if "dim" in self.meta and self.meta["dim"] != self.feasible.d:
            raise ParameterError("oracle and feasible-set dimensions disagree")

    @property
    def dim(self):
        return self.feasible.d


# -- quadratics ----------------------------------------------------------

def _quadratic(Q, c):
    Q = np.array(Q, dtype=float)
    c = np.array(c, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or c.shape != (Q.shape[0],):
        raise ParameterError("quadratic needs square Q and matching c")
    if not np.allclose(Q, Q.T, atol=1e-12):
        raise ParameterError("Q must be symmetric")
    Q.setflags(write=False)
    c.setflags(write=False)
    L1 = max(float(np.linalg.norm(Q, 2)), MACHINE_FLOOR)
    return ObjectiveOracle(
        f=lambda x: float(0.5 * x @ Q @ x + c @ x),
        grad=lambda x: Q @ x + c,
        hess_vec=lambda x, v: Q @ v,
        L1=L1,
        L2=MACHINE_FLOOR,
    )


def _random_symmetric(rng, d, convex):
    B = rng.standard_normal((d, d))
    if convex:
        return B @ B.T / d + 0.1 * np.eye(d)
    return (B + B.T) / 2.0


def _box_qp(params, rng):
    if "Q" in params:
        Q = np.asarray(params["Q"], dtype=float)
        d = Q.shape[0]
    else:
        d = int(params["d"])
        Q = _random_symmetric(rng, d, params.get("convex", False))
    c = np.asarray(params["c"], dtype=float) if "c" in params else rng.standard_normal(d)
    lower = np.broadcast_to(np.asarray(params.get("lower", 0.0), dtype=float), (d,))
    upper = np.broadcast_to(np.asarray(params.get("upper", 1.0), dtype=float), (d,))
    poly = Polyhedron.box(lower, upper)
    return _quadratic(Q, c), poly, {"Q": Q, "c": c}


def _random_qp(params, rng):
    d = int(params["d"])
    m = int(params.get("m", 2 * d))
    Q = _random_symmetric(rng, d, params.get("convex", False))
    c = rng.standard_normal(d)
    A = rng.standard_normal((m, d))
    b = rng.uniform(0.5, 1.5, size=m)
    # bounding box keeps the set compact
    A = np.vstack([A, np.eye(d), -np.eye(d)])
    b = np.concatenate([b, np.full(2 * d, 2.0)])
    return _quadratic(Q, c), Polyhedron(A, b), {"Q": Q, "c": c}


# -- factorization objectives --------------------------------------------

def _nmf_oracle(M, k, rho=0.0):
    n, m = M.shape
    split = n * k
    normM = float(np.linalg.norm(M))

    def unpack(x):
        return x[:split].reshape(n, k), x[split:].reshape(m, k)

    def f(x):
        W, H = unpack(x)
        val = float(np.sum((W @ H.T - M) ** 2))
        if rho:
            s = H.sum(axis=1)
            val += 0.5 * rho * float(np.sum(s**2) - np.sum(H**2))
        return val

    def grad(x):
        W, H = unpack(x)
        R = W @ H.T - M
        gW = 2.0 * R @ H
        gH = 2.0 * R.T @ W
        if rho:
            gH += rho * (H.sum(axis=1, keepdims=True) - H)
        return np.concatenate([gW.ravel(), gH.ravel()])

    def hess_vec(x, v):
        W, H = unpack(x)
        U, V = unpack(v)
        R = W @ H.T - M
        dR = U @ H.T + W @ V.T
        hW = 2.0 * (dR @ H + R @ V)
        hH = 2.0 * (dR.T @ W + R.T @ U)
        if rho:
            hH += rho * (V.sum(axis=1, keepdims=True) - V)
        return np.concatenate([hW.ravel(), hH.ravel()])

    def lipschitz(radius):
        L1 = 3.0 * radius**2 + 2.0 * normM + rho * max(k - 1, 1)
        return L1, max(6.0 * radius, MACHINE_FLOOR)

    return f, grad, hess_vec, lipschitz


def _nmf(params, rng, penalized=False):
    k = int(params["k"])
    if "M" in params:
        M = np.asarray(params["M"], dtype=float)
        n, m = M.shape
        W0 = H0 = None
    else:
        n, m = int(params["n"]), int(params["m"])
        W0 = rng.uniform(size=(n, k))
        H0 = rng.uniform(size=(m, k))
        M = W0 @ H0.T
        zero_frac = float(params.get("zero_frac", 0.0))
        if zero_frac > 0:
            M[rng.uniform(size=M.shape) < zero_frac] = 0.0
    rho = float(params.get("rho", 0.0)) if penalized else 0.0
    f, grad, hess_vec, lipschitz = _nmf_oracle(M, k, rho)
    ref = float(np.sqrt(np.sum(W0**2) + np.sum(H0**2))) if W0 is not None else float(np.sqrt(np.linalg.norm(M)))
    L1, L2 = lipschitz(ref)
    oracle = ObjectiveOracle(f, grad, hess_vec, L1, L2, lipschitz)
    meta = {"M": M, "n": n, "m": m, "k": k, "rho": rho, "W0": W0, "H0": H0,
            "layout": "W (n x k) then H (m x k), row-major"}
    return oracle, Polyhedron.nonneg_orthant((n + m) * k), meta


def _sym_simplex(params, rng):
    k = int(params["k"])
    if "M" in params:
        M = np.asarray(params["M"], dtype=float)
        n = M.shape[0]
        H0 = None
    else:
        n = int(params["n"])
        H0 = rng.uniform(size=(n, k))
        H0 /= H0.sum(axis=0, keepdims=True)
        M = H0 @ H0.T
        zero_frac = float(params.get("zero_frac", 0.0))
        if zero_frac > 0:
            mask = np.triu(rng.uniform(size=M.shape) < zero_frac)
            mask |= mask.T
            M[mask] = 0.0
    if not np.allclose(M, M.T):
        raise ParameterError("sym-nmf-simplex needs a symmetric M")
    normM = float(np.linalg.norm(M))

    def f(x):
        H = x.reshape(n, k)
        return float(np.sum((H @ H.T - M) ** 2))

    def grad(x):
        H = x.reshape(n, k)
        return (4.0 * (H @ H.T - M) @ H).ravel()

    def hess_vec(x, v):
        H = x.reshape(n, k)
        V = v.reshape(n, k)
        dR = V @ H.T + H @ V.T
        return (4.0 * (dR @ H + (H @ H.T - M) @ V)).ravel()

    def lipschitz(radius):
        return 12.0 * radius**2 + 4.0 * normM, max(24.0 * radius, MACHINE_FLOOR)

    L1, L2 = lipschitz(float(np.sqrt(k)))
    groups = [np.arange(j, n * k, k) for j in range(k)]
    meta = {"M": M, "n": n, "k": k, "H0": H0, "layout": "H (n x k) row-major; columns on the simplex"}
    return ObjectiveOracle(f, grad, hess_vec, L1, L2, lipschitz), Polyhedron.simplex(n * k, groups), meta


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _two_layer_nn(params, rng):
    n = int(params.get("n", 100))
    m = int(params.get("m", 50))
    k = int(params.get("k", 10))
    h = int(params.get("hidden", 15))
    X = rng.uniform(size=(m, n))
    W0 = rng.uniform(size=(k, h))
    H0 = rng.uniform(size=(m, h))
    Y = W0 @ _sigmoid(H0.T @ X)
    split = k * h
    xi = float(np.linalg.norm(X))
    ynorm = float(np.linalg.norm(Y))
    s_bound = float(np.sqrt(h * n))

    def unpack(x):
        return x[:split].reshape(k, h), x[split:].reshape(m, h)

    def f(x):
        W, H = unpack(x)
        return float(np.sum((W @ _sigmoid(H.T @ X) - Y) ** 2))

    def grad(x):
        W, H = unpack(x)
        S = _sigmoid(H.T @ X)
        R = W @ S - Y
        G = (2.0 * W.T @ R) * S * (1.0 - S)
        return np.concatenate([(2.0 * R @ S.T).ravel(), (X @ G.T).ravel()])

    def hess_vec(x, v):
        W, H = unpack(x)
        U, V = unpack(v)
        S = _sigmoid(H.T @ X)
        S1 = S * (1.0 - S)
        S2 = S1 * (1.0 - 2.0 * S)
        R = W @ S - Y
        dZ = V.T @ X
        dS = S1 * dZ
        dR = U @ S + W @ dS
        hW = 2.0 * (dR @ S.T + R @ dS.T)
        dG = (2.0 * (U.T @ R + W.T @ dR)) * S1 + (2.0 * W.T @ R) * S2 * dZ
        return np.concatenate([hW.ravel(), (X @ dG.T).ravel()])

    def lipschitz(radius):
        a = s_bound + radius * xi / 4.0
        b2 = xi / 2.0 + _SIG2 * radius * xi**2
        b3 = 3.0 * _SIG2 * xi**2 + radius * xi**3 / 8.0
        res = radius * s_bound + ynorm
        return 2.0 * a**2 + 2.0 * res * b2, 6.0 * a * b2 + 2.0 * res * b3

    L1, L2 = lipschitz(float(np.sqrt(np.sum(W0**2) + np.sum(H0**2))))
    meta = {"X": X, "Y": Y, "W0": W0, "H0": H0, "n": n, "m": m, "k": k, "hidden": h,
            "layout": "W (k x hidden) then H (m x hidden), row-major"}
    return ObjectiveOracle(f, grad, hess_vec, L1, L2, lipschitz), Polyhedron.nonneg_orthant(split + m * h), meta


def make_problem(kind, params=None, seed=0, name=None):
    """Build a :class:`ProblemInstance` of the given kind.

    Parameters
    ----------
    kind : str
        One of ``nmf``, ``sym-nmf-simplex``, ``penalized-nmf``,
        ``two-layer-nn``, ``box-qp``, ``random-qp``.
    params : dict
        Kind-specific shapes and data.  Matrices not given are drawn from
        ``seed``.
    seed : int
    """
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    try:
        if kind == "nmf":
            oracle, poly, meta = _nmf(params, rng)
        elif kind == "penalized-nmf":
            oracle, poly, meta = _nmf(params, rng, penalized=True)
        elif kind == "sym-nmf-simplex":
            oracle, poly, meta = _sym_simplex(params, rng)
        elif kind == "two-layer-nn":
            oracle, poly, meta = _two_layer_nn(params, rng)
        elif kind == "box-qp":
            oracle, poly, meta = _box_qp(params, rng)
        elif kind == "random-qp":
            oracle, poly, meta = _random_qp(params, rng)
        else:
            raise ParameterError(f"unknown problem kind {kind!r}; expected one of {', '.join(KINDS)}")
    except (KeyError, ValueError) as exc:
        raise ParameterError(f"bad parameters for {kind}: {exc}") from exc
    meta.update(kind=kind, seed=seed, dim=poly.d)
    return ProblemInstance(name or kind, oracle, poly, params.get("known_optimum"), meta)


def example1():
    """Box-constrained concave quadratic ``-x1^2 - x2^2`` on ``[0, 1]^2``."""
    return make_problem("box-qp", {"Q": -2.0 * np.eye(2), "c": np.zeros(2)}, name="example1")


def perturb_linear(problem, q_scale, seed=0, q=None):
    """Add a random linear term ``q^T x`` to the objective.

    ``q`` is standard normal, rescaled to norm ``q_scale``; pass ``q``
    explicitly to use a fixed vector instead.
    """
    if q is None:
        if q_scale < 0:
            raise ParameterError("q_scale must be nonnegative")
        if q_scale == 0:
            return problem
        g = np.random.default_rng(seed).standard_normal(problem.dim)
        q = g * (q_scale / np.linalg.norm(g))
    q = np.array(q, dtype=float)
    q.setflags(write=False)
    base = problem.oracle
    oracle = replace(
        base,
        f=lambda x: base.f(x) + float(q @ x),
        grad=lambda x: base.grad(x) + q,
    )
    meta = dict(problem.meta, q=q)
    return replace(problem, oracle=oracle, meta=meta, name=problem.name + "+q")


def initial_point(problem, c, seed=0):
    """``c`` times the projection of a standard normal draw, made feasible."""
    g = np.random.default_rng(seed).standard_normal(problem.dim)
    x = c * project_feasible(problem.feasible, g)
    return project_feasible(problem.feasible, x)


@dataclass(frozen=True)
class FDReport:
    grad_rel_err: float
    hess_rel_err: float | None
    n_points: int


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300))


def fd_verify(problem, n_points=5, h=1e-6, seed=0, scale=1.0):
    """Compare analytic derivatives with central finite differences.

    Points are standard normal draws times ``scale``, projected onto the
    feasible set.  Failures are reported, never raised.
    """
    rng = np.random.default_rng(seed)
    oracle = problem.oracle
    d = problem.dim
    g_err, h_err = 0.0, 0.0 if oracle.hess_vec is not None else None
    for _ in range(n_points):
        x = project_feasible(problem.feasible, scale * rng.standard_normal(d))
        g = oracle.grad(x)
        g_fd = np.empty(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            g_fd[i] = (oracle.f(x + e) - oracle.f(x - e)) / (2 * h)
        g_err = max(g_err, _rel(g, g_fd))
        if oracle.hess_vec is not None:
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            hv = oracle.hess_vec(x, v)
            hv_fd = (oracle.grad(x + h * v) - oracle.grad(x - h * v)) / (2 * h)
            h_err = max(h_err, _rel(hv, hv_fd))
    return FDReport(g_err, h_err, n_points)


PROBLEM_PRESETS = {
    "example1": ("box-qp", {"Q": [[-2.0, 0.0], [0.0, -2.0]], "c": [0.0, 0.0]}),
    "nmf-small": ("nmf", {"n": 50, "m": 20, "k": 10, "zero_frac": 0.05}),
    "nn-small": ("two-layer-nn", {"n": 100, "m": 50, "k": 10, "hidden": 15}),
    "simplex-small": ("sym-nmf-simplex", {"n": 100, "k": 5, "zero_frac": 0.05}),
    "pnmf-small": ("penalized-nmf", {"n": 40, "m": 100, "k": 5, "rho": 0.1}),
}


def load_preset(name, seed=0):
    """Problem preset by name; data drawn from ``seed``."""
    try:
        kind, params = PROBLEM_PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; known: {', '.join(PROBLEM_PRESETS)}") from None
    return make_problem(kind, params, seed=seed, name=name)

"""Optimality measurements and certificates.

First-order gap via the proximal gradient, the restricted Hessian spectrum
on the free space, KKT multipliers with strict complementarity, and a
brute-force checker for the second-kind conditions on tiny problems.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, nnls

from snapopt.errors import CapabilityError
from snapopt.poly import (
    DEFAULT_ACTIVE_TOL,
    DEFAULT_RANK_TOL,
    active_set,
    free_space_basis,
    project_feasible,
)

SOSP2_MAX_DIM = 4
_GRID_BUDGET = 2_000_000


def prox_gradient(problem, x, alpha=None):
    """``(proj(x - alpha grad f(x)) - x) / alpha``; alpha defaults to 1/L1."""
    if alpha is None:
        alpha = 1.0 / problem.oracle.L1
    x = np.asarray(x, dtype=float)
    step = project_feasible(problem.feasible, x - alpha * problem.oracle.grad(x))
    return (step - x) / alpha


def projected_gradient(problem, basis, x):
    """Gradient projected onto the free space at ``x``."""
    return basis.lift(basis.reduce(problem.oracle.grad(np.asarray(x, dtype=float))))


def restricted_hessian(problem, basis, x):
    """Dense ``Z^T H(x) Z`` assembled column by column from Hessian-vector products."""
    hv = problem.oracle.hess_vec
    if hv is None:
        raise CapabilityError("no Hessian-vector oracle; use the SP-GD oracle instead")
    k = basis.k
    x = np.asarray(x, dtype=float)
    cols = np.empty((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = 1.0
        cols[:, j] = basis.reduce(hv(x, basis.lift(e)))
    return 0.5 * (cols + cols.T)


def restricted_min_eig(problem, basis, x):
    """Smallest eigenpair of the Hessian restricted to the free space.

    Returns ``(None, zeros)`` when the free space is trivial; the
    second-order condition then holds vacuously.
    """
    if basis.k == 0:
        return None, np.zeros(basis.d)
    Hr = restricted_hessian(problem, basis, x)
    w, V = np.linalg.eigh(Hr)
    return float(w[0]), basis.lift(V[:, 0])


def kkt_and_sc(problem, x, aset, kkt_tol=1e-6, sc_tol=1e-8):
    """Recover multipliers on the active rows and test strict complementarity.

    Multipliers are the nonnegative least-squares fit of ``-grad f(x)`` by
    the active rows.  Returns ``(multipliers, kkt_residual, sc_holds)``.
    """
    g = problem.oracle.grad(np.asarray(x, dtype=float))
    if len(aset.active) == 0:
        resid = float(np.linalg.norm(g))
        return np.zeros(0), resid, resid <= kkt_tol
    At = problem.feasible.A[aset.active].T
    mu, resid = nnls(At, -g)
    resid = float(np.linalg.norm(g + At @ mu))
    return mu, resid, bool(resid <= kkt_tol and mu.min() > sc_tol)


@dataclass
class StationarityReport:
    fosp1_gap: float
    restricted_min_eig: float | None
    free_dim: int
    sosp1: bool
    multipliers: np.ndarray
    kkt_residual: float
    sc_holds: bool
    min_active_multiplier: float | None
    active: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    kkt_tol: float = 1e-6

    CSV_FIELDS = ("fosp1_gap", "restricted_min_eig", "free_dim", "sosp1", "kkt_residual",
                  "sc_holds", "min_active_multiplier", "active_count")

    @property
    def is_kkt(self):
        return self.kkt_residual <= self.kkt_tol

    def csv_row(self):
        eig = "vacuous" if self.restricted_min_eig is None else repr(self.restricted_min_eig)
        mu = "" if self.min_active_multiplier is None else repr(self.min_active_multiplier)
        vals = [repr(self.fosp1_gap), eig, str(self.free_dim), str(self.sosp1),
                repr(self.kkt_residual), str(self.sc_holds), mu, str(len(self.active))]
        return ",".join(vals)

    def to_text(self):
        eig = "vacuous (empty free space)" if self.restricted_min_eig is None else f"{self.restricted_min_eig:.6g}"
        lines = [
            f"FOSP1 gap ||g_pi||      : {self.fosp1_gap:.6g}",
            f"restricted min eig      : {eig}",
            f"free-space dimension    : {self.free_dim}",
            f"SOSP1                   : {self.sosp1}",
            f"active constraints      : {list(map(int, self.active))}",
        ]
        if self.is_kkt:
            lines.append(f"multipliers             : {np.array2string(self.multipliers, precision=6)}")
        lines += [
            f"KKT residual            : {self.kkt_residual:.6g}",
            f"strict complementarity  : {self.sc_holds}",
        ]
        return "\n".join(lines)


def check_sosp1(problem, x, eps_G, eps_H, alpha=None, kkt_tol=1e-6, sc_tol=1e-8,
                active_tol=DEFAULT_ACTIVE_TOL, rank_tol=DEFAULT_RANK_TOL):
    """Full first-kind stationarity report at ``x``."""
    x = np.asarray(x, dtype=float)
    aset = active_set(problem.feasible, x, active_tol)
    basis = free_space_basis(problem.feasible, aset, rank_tol)
    gap = float(np.linalg.norm(prox_gradient(problem, x, alpha)))
    lam, _ = restricted_min_eig(problem, basis, x)
    second = lam is None or lam >= -eps_H
    mu, resid, sc = kkt_and_sc(problem, x, aset, kkt_tol, sc_tol)
    return StationarityReport(
        fosp1_gap=gap,
        restricted_min_eig=lam,
        free_dim=basis.k,
        sosp1=bool(gap <= eps_G and second),
        multipliers=mu if resid <= kkt_tol else np.zeros(0),
        kkt_residual=resid,
        sc_holds=sc,
        min_active_multiplier=float(mu.min()) if mu.size else None,
        active=aset.active,
        kkt_tol=kkt_tol,
    )


@dataclass
class Sosp2Result:
    fosp2: bool
    sosp2: bool
    witness: np.ndarray | None
    min_linear: float
    min_form: float
    n_candidates: int


def _vertices(A, b, tol=1e-9):
    m, d = A.shape
    out = []
    for rows in itertools.combinations(range(m), d):
        As = A[list(rows)]
        if abs(np.linalg.det(As)) < 1e-12:
            continue
        v = np.linalg.solve(As, b[list(rows)])
        if np.all(A @ v <= b + tol * (1 + np.abs(b))):
            out.append(v)
    return np.array(out).reshape(-1, d)


def _bounding_box(A, b, center, cap):
    d = A.shape[1]
    lo, hi = center - cap, center + cap
    for i in range(d):
        c = np.zeros(d)
        c[i] = 1.0
        for sign in (1.0, -1.0):
            res = linprog(sign * c, A_ub=A, b_ub=b, bounds=[(None, None)] * d, method="highs")
            if res.status == 0:
                if sign > 0:
                    lo[i] = res.x[i]
                else:
                    hi[i] = res.x[i]
    return lo, hi


def check_sosp2_bruteforce(problem, x, eps_G, eps_H, grid_n=64, ortho_tol=None, radius_cap=10.0):
    """Grid-and-vertex check of the second-kind conditions (d <= 4).

    First order: ``grad^T (y - x) >= -eps_G`` for feasible ``y`` within
    unit distance.  Second order: ``(y - x)^T H (y - x) >= -eps_H`` for
    feasible ``y`` with ``|grad^T (y - x)| <= ortho_tol``.  Candidates are a
    regular grid over the bounding box of the feasible set (clipped to
    ``radius_cap`` around ``x`` when unbounded) plus all vertices.  This is
    a heuristic oracle: exact certification is NP-hard in general.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    if d > SOSP2_MAX_DIM:
        raise CapabilityError(f"brute-force SOSP2 is limited to d <= {SOSP2_MAX_DIM}")
    hv = problem.oracle.hess_vec
    if hv is None:
        raise CapabilityError("brute-force SOSP2 needs Hessian-vector products")
    H = np.column_stack([hv(x, e) for e in np.eye(d)])
    H = 0.5 * (H + H.T)
    g = problem.oracle.grad(x)
    if ortho_tol is None:
        ortho_tol = 1e-3 * float(np.linalg.norm(g)) + 1e-9
    A, b = problem.feasible.A, problem.feasible.b

    n_axis = min(grid_n, int(_GRID_BUDGET ** (1.0 / d)))
    if A.shape[0]:
        lo, hi = _bounding_box(A, b, x, radius_cap)
        verts = _vertices(A, b)
    else:
        lo, hi = x - radius_cap, x + radius_cap
        verts = np.zeros((0, d))
    axes = [np.linspace(lo[i], hi[i], n_axis) for i in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    cand = np.vstack([grid, verts, x[None, :]])
    if A.shape[0]:
        cand = cand[np.all(cand @ A.T - b <= 1e-12 * (1 + np.abs(b)), axis=1)]
    delta = cand - x
    lin = delta @ g
    form = np.einsum("ij,jk,ik->i", delta, H, delta)

    in_ball = np.linalg.norm(delta, axis=1) <= 1.0
    min_linear = float(lin[in_ball].min())
    fosp2 = min_linear >= -eps_G

    on_slice = np.abs(lin) <= ortho_tol
    j = int(np.argmin(np.where(on_slice, form, np.inf)))
    min_form = float(form[j])
    second = min_form >= -eps_H
    witness = None if second else cand[j].copy()
    return Sosp2Result(fosp2, bool(fosp2 and second), witness, min_linear, min_form, len(cand))

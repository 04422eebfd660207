"""Polyhedral feasible sets ``{x : A x <= b}``.

Active sets, orthonormal free-space bases (null space of the active rows),
Euclidean projection onto the polyhedron and the maximal feasible step
along a direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import nnls

from snapopt.errors import ContractError, FeasibilityError, ParameterError, ProjectionError

TAGS = ("generic", "nonneg-orthant", "box", "simplex")

DEFAULT_ACTIVE_TOL = 1e-9
DEFAULT_RANK_TOL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """Feasible set ``{x : A x <= b}``.

    The structural ``tag`` only selects a closed-form projection; it is
    checked against ``(A, b)`` on construction.  Use the ``nonneg_orthant``,
    ``box`` and ``simplex`` constructors rather than building tagged
    instances by hand.

    Parameters
    ----------
    A : (m, d) array
    b : (m,) array
    tag : str
        One of ``generic``, ``nonneg-orthant``, ``box``, ``simplex``.
    lower, upper : (d,) arrays, box only
    groups : tuple of index arrays, simplex only
        Each group of coordinates is constrained to the unit simplex; all
        coordinates are nonnegative.
    """

    A: np.ndarray
    b: np.ndarray
    tag: str = "generic"
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    groups: tuple = ()
    row_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.size == 0:
            A = A.reshape(0, A.shape[-1])
        if A.shape[0] != b.shape[0]:
            raise ParameterError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        if A.shape[1] < 1:
            raise ParameterError("dimension d must be at least 1")
        if self.tag not in TAGS:
            raise ParameterError(f"unknown structural tag {self.tag!r}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "row_norms", _frozen(np.linalg.norm(A, axis=1)))
        if self.lower is not None:
            object.__setattr__(self, "lower", _frozen(self.lower))
        if self.upper is not None:
            object.__setattr__(self, "upper", _frozen(self.upper))
        object.__setattr__(self, "groups", tuple(np.asarray(g, dtype=int) for g in self.groups))
        if self.tag != "generic":
            A_ref, b_ref = _canonical_rows(self.tag, self.d, self.lower, self.upper, self.groups)
            if A_ref.shape != A.shape or not (np.array_equal(A_ref, A) and np.array_equal(b_ref, b)):
                raise ParameterError(f"(A, b) do not match the {self.tag!r} structure")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    # -- constructors -------------------------------------------------
    @classmethod
    def unconstrained(cls, d):
        return cls(np.zeros((0, d)), np.zeros(0))

    @classmethod
    def nonneg_orthant(cls, d):
        A, b = _canonical_rows("nonneg-orthant", d, None, None, ())
        return cls(A, b, tag="nonneg-orthant")

    @classmethod
    def box(cls, lower, upper):
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.broadcast_to(np.asarray(upper, dtype=float), lower.shape).copy()
        if np.any(lower > upper):
            raise ParameterError("box lower bound exceeds upper bound")
        A, b = _canonical_rows("box", lower.size, lower, upper, ())
        return cls(A, b, tag="box", lower=lower, upper=upper)

    @classmethod
    def simplex(cls, d, groups=None):
        """Nonnegative vectors whose coordinate ``groups`` each sum to one."""
        groups = (np.arange(d),) if groups is None else tuple(np.asarray(g, dtype=int) for g in groups)
        seen = np.concatenate(groups) if groups else np.zeros(0, dtype=int)
        if len(np.unique(seen)) != len(seen) or (len(seen) and (seen.min() < 0 or seen.max() >= d)):
            raise ParameterError("simplex groups must be disjoint coordinate subsets of range(d)")
        A, b = _canonical_rows("simplex", d, None, None, groups)
        return cls(A, b, tag="simplex", groups=groups)

    def residual(self, x):
        """``A x - b``, without the dense product for orthants and boxes."""
        x = np.asarray(x, dtype=float)
        if self.tag == "nonneg-orthant":
            return -x
        if self.tag == "box":
            return np.concatenate([self.lower - x, x - self.upper])
        if self.tag == "simplex":
            sums = np.array([x[g].sum() for g in self.groups]) - 1.0
            return np.concatenate([np.column_stack([sums, -sums]).ravel(), -x])
        return self.A @ x - self.b

    def snap_to_row(self, x, j):
        """Put ``x`` exactly on row ``j`` when that row bounds a single coordinate."""
        row = self.A[j]
        nz = np.flatnonzero(row)
        if nz.size == 1:
            i = int(nz[0])
            x = np.array(x, dtype=float)
            x[i] = self.b[j] / row[i]
        return x

    def is_feasible(self, x, tol=1e-8):
        if self.m == 0:
            return True
        return bool(np.all(self.residual(x) <= tol * (1.0 + np.abs(self.b))))


def _canonical_rows(tag, d, lower, upper, groups):
    eye = np.eye(d)
    if tag == "nonneg-orthant":
        return -eye, np.zeros(d)
    if tag == "box":
        if lower is None or upper is None:
            raise ParameterError("box tag needs lower and upper bounds")
        return np.vstack([-eye, eye]), np.concatenate([-np.asarray(lower), np.asarray(upper)])
    if tag == "simplex":
        rows, rhs = [], []
        for g in groups:
            ind = np.zeros(d)
            ind[g] = 1.0
            rows += [ind, -ind]
            rhs += [1.0, -1.0]
        A = np.vstack(rows + [-eye]) if rows else -eye
        return A, np.concatenate([np.asarray(rhs, dtype=float), np.zeros(d)])
    raise ParameterError(f"no canonical rows for tag {tag!r}")


@dataclass(frozen=True)
class ActiveSet:
    active: np.ndarray
    inactive: np.ndarray
    tol: float

    def __len__(self):
        return len(self.active)


class FreeSpaceBasis:
    """Orthonormal basis ``Z`` (d x k) of the null space of the active rows.

    ``coords`` is set when the free space is spanned by coordinate axes, in
    which case projections are index selections and ``Z`` is only built on
    request.
    """

    def __init__(self, Z, rank_tol, coords=None, d=None):
        self._Z = Z
        self.rank_tol = rank_tol
        self.coords = coords
        self._d = Z.shape[0] if Z is not None else d

    @classmethod
    def from_coords(cls, d, coords, rank_tol):
        return cls(None, rank_tol, coords=np.asarray(coords, dtype=int), d=d)

    @property
    def Z(self):
        if self._Z is None:
            self._Z = np.eye(self._d)[:, self.coords]
        return self._Z

    @property
    def k(self):
        return len(self.coords) if self.coords is not None else self._Z.shape[1]

    @property
    def d(self):
        return self._d

    def projector(self):
        return self.Z @ self.Z.T

    def reduce(self, v):
        """Coordinates ``Z^T v`` of ``v`` in the basis."""
        if self.coords is not None:
            return np.asarray(v)[self.coords]
        return self.Z.T @ v

    def lift(self, y):
        """Map basis coordinates back to R^d."""
        if self.coords is not None:
            out = np.zeros(self.d)
            out[self.coords] = y
            return out
        return self.Z @ y


class GroupSumBasis(FreeSpaceBasis):
    """Free space of a simplex-tagged set: per group, the sum-zero vectors
    supported on the group's nonzero coordinates.

    Each group uses the Householder reflector that maps ``e_1`` to the
    normalized all-ones vector; its remaining columns span the sum-zero
    subspace, so ``reduce`` and ``lift`` cost O(d).
    """

    def __init__(self, d, solo, blocks, rank_tol):
        super().__init__(None, rank_tol, coords=None, d=d)
        self.solo = solo
        self.blocks = blocks  # list of (free coords, householder vector)
        self._k = len(solo) + sum(len(F) - 1 for F, _ in blocks)

    @property
    def Z(self):
        if self._Z is None:
            self._Z = np.column_stack([self.lift(e) for e in np.eye(self._k)]) if self._k else np.zeros((self._d, 0))
        return self._Z

    @property
    def k(self):
        return self._k

    def reduce(self, v):
        v = np.asarray(v, dtype=float)
        parts = [v[self.solo]]
        for F, u in self.blocks:
            w = v[F]
            parts.append((w - 2.0 * u * (u @ w))[1:])
        return np.concatenate(parts)

    def lift(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(self._d)
        n = len(self.solo)
        out[self.solo] = y[:n]
        for F, u in self.blocks:
            t = np.zeros(len(F))
            t[1:] = y[n:n + len(F) - 1]
            n += len(F) - 1
            out[F] = t - 2.0 * u * (u @ t)
        return out


def _group_sum_basis(poly, aset, rank_tol):
    d = poly.d
    n_eq = 2 * len(poly.groups)
    act = aset.active
    if np.count_nonzero(act < n_eq) != n_eq:
        return None
    zero = np.zeros(d, dtype=bool)
    zero[act[act >= n_eq] - n_eq] = True
    grouped = np.zeros(d, dtype=bool)
    blocks = []
    for g in poly.groups:
        grouped[g] = True
        F = g[~zero[g]]
        p = len(F)
        if p < 2:
            continue
        u = -np.full(p, 1.0 / np.sqrt(p))
        u[0] += 1.0
        u /= np.linalg.norm(u)
        blocks.append((F, u))
    solo = np.flatnonzero(~grouped & ~zero)
    return GroupSumBasis(d, solo, blocks, rank_tol)


@dataclass(frozen=True)
class MaxStep:
    alpha_max: float
    hit: int | None
    bounded: bool


def active_set(poly, x, tol=DEFAULT_ACTIVE_TOL):
    """Partition constraint indices into active and inactive at ``x``.

    A constraint is active when ``|A_j x - b_j| <= tol * (1 + |b_j|)``.

    Raises
    ------
    FeasibilityError
        If some constraint is violated by more than the same threshold.
    """
    x = np.asarray(x, dtype=float)
    if poly.m == 0:
        return ActiveSet(np.zeros(0, dtype=int), np.zeros(0, dtype=int), tol)
    r = poly.residual(x)
    thresh = tol * (1.0 + np.abs(poly.b))
    excess = r - thresh
    worst = int(np.argmax(excess))
    if excess[worst] > 0:
        raise FeasibilityError(
            f"point violates constraint {worst} by {r[worst]:.3e}", index=worst, violation=float(r[worst])
        )
    mask = np.abs(r) <= thresh
    return ActiveSet(np.flatnonzero(mask), np.flatnonzero(~mask), tol)


def free_space_basis(poly, aset, rank_tol=DEFAULT_RANK_TOL):
    """Orthonormal basis of Null(A'(x)) for the rows in ``aset.active``.

    Duplicate or dependent active rows do not reduce the dimension twice:
    the basis comes from an SVD with singular values below
    ``rank_tol * sigma_max`` treated as zero.
    """
    d = poly.d
    if len(aset.active) == 0:
        return FreeSpaceBasis.from_coords(d, np.arange(d), rank_tol)
    if poly.tag in ("nonneg-orthant", "box"):
        # row j bounds coordinate j mod d
        hit = np.zeros(d, dtype=bool)
        hit[aset.active % d] = True
        coords = np.flatnonzero(~hit)
        return FreeSpaceBasis.from_coords(d, coords, rank_tol)
    if poly.tag == "simplex":
        basis = _group_sum_basis(poly, aset, rank_tol)
        if basis is not None:
            return basis
    Ap = poly.A[aset.active]
    nnz = np.count_nonzero(Ap, axis=1)
    if np.all(nnz == 1):
        hit = np.zeros(d, dtype=bool)
        hit[np.nonzero(Ap)[1]] = True
        coords = np.flatnonzero(~hit)
        return FreeSpaceBasis.from_coords(d, coords, rank_tol)
    _, s, vt = np.linalg.svd(Ap, full_matrices=True)
    rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
    return FreeSpaceBasis(np.ascontiguousarray(vt[rank:].T), rank_tol)


def project_free(basis, v):
    """Orthogonal projection of ``v`` onto the free space, ``Z Z^T v``."""
    return basis.lift(basis.reduce(np.asarray(v, dtype=float)))


def _proj_simplex(v):
    # sort-based projection onto {w >= 0, sum w = 1}
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_feasible(poly, v, tol=1e-12, max_sweeps=None):
    """Euclidean projection of ``v`` onto the polyhedron.

    Closed forms are used for the orthant, box and simplex tags.  Generic
    polyhedra use dual coordinate ascent on the constraint multipliers
    (Hildreth's method); every few sweeps the current support is polished
    by an equality-constrained solve that is accepted only if it passes an
    exact KKT check.

    Raises
    ------
    ProjectionError
        If the sweep cap is exhausted, which usually means the set is empty.
    """
    v = np.asarray(v, dtype=float)
    if poly.m == 0:
        return v.copy()
    if poly.tag == "nonneg-orthant":
        return np.maximum(v, 0.0)
    if poly.tag == "box":
        return np.clip(v, poly.lower, poly.upper)
    if poly.tag == "simplex":
        w = np.maximum(v, 0.0)
        for g in poly.groups:
            w[g] = _proj_simplex(v[g])
        return w
    return _project_generic(poly, v, tol, max_sweeps)


def _project_generic(poly, v, tol, max_sweeps):
    A, b = poly.A, poly.b
    m, d = A.shape
    norms2 = poly.row_norms**2
    usable = norms2 > 0
    if np.any(~usable & (b < -tol)):
        raise ProjectionError("a zero row with negative right-hand side makes the set empty")
    if max_sweeps is None:
        max_sweeps = int(math.ceil(10 * m * d * max(1.0, -math.log10(tol))))
    scale = 1.0 + np.abs(b)
    lam = np.zeros(m)
    w = v.copy()
    if np.all(A @ w - b <= tol * scale):
        return w
    for sweep in range(1, max_sweeps + 1):
        for j in range(m):
            if not usable[j]:
                continue
            step = max(-lam[j], (A[j] @ w - b[j]) / norms2[j])
            if step != 0.0:
                lam[j] += step
                w -= step * A[j]
        if sweep % 5 == 0 or sweep == 1:
            polished = _polish(A, b, v, w, lam, tol, scale)
            if polished is not None:
                return polished
        r = A @ w - b
        if np.all(r <= tol * scale) and np.all(np.abs(lam * r) <= tol * scale):
            return w
    # slow geometry (nearly parallel rows): finish with an exact solve
    cand = _project_ldp(A, b, v)
    if cand is None or np.any(A @ cand - b > 1e-8 * scale):
        raise ProjectionError(f"projection did not converge in {max_sweeps} sweeps; the set may be empty")
    return cand


def _project_ldp(A, b, v):
    """Projection as a least-distance problem, solved through one NNLS.

    ``min |y|`` subject to ``-A y >= A v - b`` has solution ``y = -r[:d] / r[d]``
    where ``r = E u - e`` is the residual of ``min |E u - e|, u >= 0`` with
    ``E = [-A^T; (A v - b)^T]`` and ``e`` the last unit vector.
    """
    m, d = A.shape
    h = A @ v - b
    E = np.vstack([-A.T, h[None, :]])
    e = np.zeros(d + 1)
    e[d] = 1.0
    u, _ = nnls(E, e, maxiter=50 * (m + d))
    r = E @ u - e
    if abs(r[d]) < 1e-14:
        return None
    return v - r[:d] / r[d]


def _polish(A, b, v, w, lam, tol, scale):
    r = A @ w - b
    tight = np.abs(r) <= 1e3 * tol * scale
    # rows carrying weight but no longer tight are usually redundant copies
    for support in (np.flatnonzero(tight), np.flatnonzero((lam > 0) | tight)):
        if support.size:
            cand = _polish_support(A, b, v, support, tol, scale)
            if cand is not None:
                return cand
    return None


def _polish_support(A, b, v, support, tol, scale):
    As = A[support]
    mu, *_ = np.linalg.lstsq(As @ As.T, As @ v - b[support], rcond=None)
    cand = v - As.T @ mu
    if np.any(A @ cand - b > tol * scale):
        return None
    # exact KKT certificate: v - cand must lie in the cone of the support rows
    mu_pos, resid = nnls(As.T, v - cand)
    if resid > max(tol, 1e-10) * max(1.0, np.linalg.norm(v - cand)):
        return None
    if np.any(np.abs(As @ cand - b[support])[mu_pos > 0] > 1e3 * tol * scale[support][mu_pos > 0]):
        return None
    return cand


def max_step(poly, aset, x, direction, L1, tol=1e-8):
    """Largest feasible step along ``direction`` from ``x``.

    Returns the smallest positive ratio ``(b_i - A_i x) / (A_i d)`` over
    inactive rows with ``A_i d > 0`` (lowest index on ties).  When no
    inactive row blocks the ray the step falls back to ``1 / L1`` and
    ``bounded`` is False.

    Raises
    ------
    ContractError
        If ``direction`` has a component outside the free space.
    """
    x = np.asarray(x, dtype=float)
    direction = np.asarray(direction, dtype=float)
    dnorm = float(np.linalg.norm(direction))
    if len(aset.active):
        leak = float(np.linalg.norm(poly.A[aset.active] @ direction))
        if leak > tol * max(1.0, dnorm):
            raise ContractError(f"direction leaves the free space (|A' d| = {leak:.3e})")
    idx = aset.inactive
    if idx.size and dnorm > 0:
        Ad = poly.A[idx] @ direction
        slack = poly.b[idx] - poly.A[idx] @ x
        moving = Ad > 1e-14 * poly.row_norms[idx] * dnorm
        if np.any(moving):
            ratios = np.full(idx.size, np.inf)
            ratios[moving] = slack[moving] / Ad[moving]
            ratios[ratios <= 0] = np.inf
            j = int(np.argmin(ratios))
            if np.isfinite(ratios[j]):
                return MaxStep(float(ratios[j]), int(idx[j]), True)
    return MaxStep(1.0 / L1, None, False)


# -- plain-text matrix format --------------------------------------------

def read_matrix_file(path):
    """Read the ``m d`` header format: m rows of d + 1 numbers (row, rhs).

    Blank lines and ``#`` comments are ignored.  Returns ``(M, rhs)``.
    """
    lines = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise ParameterError(f"{path}: empty matrix file")
    try:
        m, d = (int(t) for t in lines[0].split())
        rows = [[float(t) for t in ln.replace(",", " ").split()] for ln in lines[1:]]
    except ValueError as exc:
        raise ParameterError(f"{path}: malformed matrix file ({exc})") from exc
    if len(rows) != m or any(len(r) != d + 1 for r in rows):
        raise ParameterError(f"{path}: expected {m} rows of {d + 1} numbers")
    data = np.array(rows, dtype=float).reshape(m, d + 1)
    return data[:, :d], data[:, d]


def write_matrix_file(path, M, rhs):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rhs = np.asarray(rhs, dtype=float).reshape(-1)
    out = [f"{M.shape[0]} {M.shape[1]}"]
    for row, r in zip(M, rhs):
        out.append(" ".join(repr(float(t)) for t in row) + " " + repr(float(r)))
    Path(path).write_text("\n".join(out) + "\n")


def read_polyhedron(path):
    A, b = read_matrix_file(path)
    return Polyhedron(A, b)


def write_polyhedron(poly, path):
    write_matrix_file(path, poly.A, poly.b)

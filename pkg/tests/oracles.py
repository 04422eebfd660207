"""Independent reference computations used to freeze expected values.

Everything here is deliberately naive: enumeration instead of iteration,
dense linear algebra instead of structure.
"""

import itertools

import numpy as np


def random_polyhedron(rng, d, m, radius=1.0):
    """Random ``{A x <= b}`` containing a ball of ``radius`` around a random center."""
    A = rng.standard_normal((m, d))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    center = rng.standard_normal(d)
    b = A @ center + radius * rng.uniform(0.2, 1.5, size=m)
    return A, b, center


def project_bruteforce(A, b, v, tol=1e-9):
    """Euclidean projection by enumerating every subset of rows held tight.

    For each subset ``S`` solve ``min |y - v|`` subject to ``A_S y = b_S``
    (least squares through the pseudo-inverse), keep the feasible
    candidates, return the closest.
    """
    m, d = A.shape
    best, best_dist = None, np.inf
    for r in range(min(m, d) + 1):
        for S in itertools.combinations(range(m), r):
            S = list(S)
            if S:
                As = A[S]
                # KKT system [[I, As^T], [As, 0]] [y; lam] = [v; b_S]
                K = np.block([[np.eye(d), As.T], [As, np.zeros((r, r))]])
                sol = np.linalg.lstsq(K, np.concatenate([v, b[S]]), rcond=None)[0]
                y = sol[:d]
                if np.linalg.norm(As @ y - b[S]) > 1e-8:
                    continue
            else:
                y = v.copy()
            if np.all(A @ y <= b + tol):
                dist = np.linalg.norm(y - v)
                if dist < best_dist:
                    best, best_dist = y, dist
    return best


def simplex_projection_sort(v):
    """Projection onto the unit simplex via the sorted-threshold formula."""
    n = v.size
    u = sorted(v, reverse=True)
    total, theta = 0.0, 0.0
    for j in range(n):
        total += u[j]
        t = (total - 1.0) / (j + 1)
        if u[j] - t > 0:
            theta = t
    return np.array([max(x - theta, 0.0) for x in v])


def box_qp_min(Q, c, lower, upper):
    """Global minimum of ``0.5 x'Qx + c'x`` on a box by face enumeration.

    Each coordinate is fixed at a bound or left free; the free block is
    solved as a stationary point.  Valid for any Q when d is small.
    """
    d = len(c)
    best, best_f = None, np.inf
    for state in itertools.product((0, 1, 2), repeat=d):
        x = np.zeros(d)
        free = [i for i in range(d) if state[i] == 2]
        for i in range(d):
            if state[i] == 0:
                x[i] = lower[i]
            elif state[i] == 1:
                x[i] = upper[i]
        if free:
            fixed = [i for i in range(d) if state[i] != 2]
            Qff = Q[np.ix_(free, free)]
            rhs = -c[free] - Q[np.ix_(free, fixed)] @ x[fixed]
            try:
                x[free] = np.linalg.solve(Qff, rhs)
            except np.linalg.LinAlgError:
                continue
        if np.all(x >= lower - 1e-12) and np.all(x <= upper + 1e-12):
            fx = 0.5 * x @ Q @ x + c @ x
            if fx < best_f:
                best, best_f = x, fx
    return best, best_f


def null_basis_svd(rows, d):
    """Orthonormal null-space basis from a full SVD."""
    if len(rows) == 0:
        return np.eye(d)
    _, s, vt = np.linalg.svd(np.atleast_2d(rows), full_matrices=True)
    rank = int(np.sum(s > 1e-10 * s.max())) if s.size else 0
    return vt[rank:].T


def fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g

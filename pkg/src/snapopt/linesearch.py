"""Feasible step selection along a descent direction.

The first trial is the longest feasible step; if it already decreases
``f`` it is taken outright (the boundary branch).  Otherwise the step is
halved until a sufficient-descent test with a direction-dependent
``rho(alpha)`` passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from snapopt.eigen import Flag
from snapopt.errors import LineSearchError, ParameterError
from snapopt.poly import max_step

KINDS = ("gradient", "curvature")
STEP_FLOOR = 1e-16


@dataclass(frozen=True)
class LineSearchOutcome:
    x_next: np.ndarray
    flag_alpha: Flag
    alpha_used: float
    f_next: float
    evals: int
    alpha_max: float = float("nan")
    hit: int | None = None

    @property
    def boundary_hit(self):
        """True when the accepted step ran into a previously inactive row."""
        return self.flag_alpha is Flag.FOUND and self.hit is not None


def compute_rho(kind, alpha, q_norm_sq, eps_H_prime):
    """Sufficient-descent target ``rho(alpha)``.

    ``-alpha |q|^2`` for gradient steps, ``-alpha^2 eps' / 4`` for
    curvature steps.
    """
    if alpha < 0:
        raise ParameterError("alpha must be nonnegative")
    if kind == "gradient":
        return -alpha * q_norm_sq
    if kind == "curvature":
        return -alpha * alpha * eps_H_prime / 4.0
    raise ParameterError(f"unknown direction kind {kind!r}")


def line_search(problem, poly, aset, x, d_dir, kind, eps_H_prime, L1, f_x=None):
    """Take one step from ``x`` along ``d_dir``.

    Parameters
    ----------
    problem : ProblemInstance
    poly : Polyhedron
        Feasible set; ``aset`` is its active set at ``x``.
    d_dir : ndarray
        ``-q`` for ``kind="gradient"``, a unit free-space vector for
        ``kind="curvature"``.
    eps_H_prime : float
        Magnitude of the oracle's curvature estimate.
    L1 : float
        Gradient Lipschitz estimate; ``1/L1`` is the step when no
        constraint blocks the ray.
    f_x : float, optional
        Cached ``f(x)``.

    Raises
    ------
    LineSearchError
        If halving reaches ``1e-16 * alpha_max`` without sufficient descent.
    """
    if kind not in KINDS:
        raise ParameterError(f"unknown direction kind {kind!r}")
    x = np.asarray(x, dtype=float)
    d_dir = np.asarray(d_dir, dtype=float)
    f = problem.oracle.f
    evals = 0
    if f_x is None:
        f_x = f(x)
        evals += 1
    ms = max_step(poly, aset, x, d_dir, L1)
    a_max = ms.alpha_max
    x_try = x + a_max * d_dir
    f_try = f(x_try)
    evals += 1
    if f_try < f_x:
        if ms.hit is not None:
            # remove rounding so the hit row reads as exactly active
            x_try = poly.snap_to_row(x_try, ms.hit)
            f_try = f(x_try)
            evals += 1
        return LineSearchOutcome(x_try, Flag.FOUND, a_max, f_try, evals, a_max, ms.hit)

    q_norm_sq = float(d_dir @ d_dir) if kind == "gradient" else 0.0
    floor = STEP_FLOOR * a_max
    alpha = a_max
    while True:
        alpha /= 2
        if alpha < floor:
            raise LineSearchError(
                f"no sufficient descent down to alpha = {alpha:.3e} ({kind} step); "
                "the Lipschitz estimates are probably too small"
            )
        x_try = x + alpha * d_dir
        f_try = f(x_try)
        evals += 1
        if f_try <= f_x + 0.5 * compute_rho(kind, alpha, q_norm_sq, eps_H_prime):
            return LineSearchOutcome(x_try, Flag.NONE, alpha, f_try, evals, a_max, None)

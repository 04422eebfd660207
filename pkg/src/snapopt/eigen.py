"""Negative-curvature oracles.

Two ways to find a unit direction of negative curvature inside the free
space: shifted power iteration on the restricted Hessian (needs
Hessian-vector products), and SP-GD, which only differences gradients
around the anchor point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from snapopt.errors import CapabilityError, ParameterError

POWER_ITER_CAP = 20_000
MAX_RESTARTS = 30
STALL_TOL = 1e-9
PROBE_POLICIES = ("shrink", "ignore")


class Flag(str, enum.Enum):
    """Outcome marker shared by the oracles and the line search."""

    FOUND = "◇"
    NONE = "∅"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class EigenPairResult:
    flag: Flag
    direction: np.ndarray
    curvature_estimate: float
    evals_used: int

    @property
    def found(self):
        return self.flag is Flag.FOUND


def _none(d, evals):
    return EigenPairResult(Flag.NONE, np.zeros(d), 0.0, evals)


@dataclass(frozen=True)
class SpGdConfig:
    """Constants of the gradient-difference escape procedure.

    Parameters
    ----------
    T : int
        Number of perturbed gradient iterations.
    script_F : float
        Required decrease of the second-order model, tested as ``-1.5 F``.
    script_R : float
        Radius of the initial perturbation.
    beta : float
        Step size, at most ``1 / L1``.
    c_hat : float
        Universal constant of the guarantee (at least 51 unless overridden).
    eps_H, delta : float
        Curvature target and failure probability.
    practical_override : bool
        True when ``T``, ``F`` and ``R`` were set by hand rather than by the
        worst-case formulas.  The reported curvature estimate is then
        heuristic.
    probe_policy : {"shrink", "ignore"}
        What to do when a probe ``x + z`` leaves the feasible set: restart
        with half the radius, or carry on (only sensible when ``f`` is
        defined outside the feasible set).
    """

    T: int
    script_F: float
    script_R: float
    beta: float
    c_hat: float = 51.0
    eps_H: float = 1e-2
    delta: float = 0.1
    practical_override: bool = False
    probe_policy: str = "shrink"

    def __post_init__(self):
        if self.T < 1:
            raise ParameterError("SP-GD needs T >= 1")
        if not (self.beta > 0 and self.script_R > 0 and self.script_F > 0):
            raise ParameterError("beta, R and F must be positive")
        if not self.practical_override and self.c_hat < 51:
            raise ParameterError("c_hat must be at least 51 outside practical mode")
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1)")
        if self.eps_H <= 0:
            raise ParameterError("eps_H must be positive")
        if self.probe_policy not in PROBE_POLICIES:
            raise ParameterError(f"probe_policy must be one of {PROBE_POLICIES}")

    def validate_step(self, L1):
        if self.beta * L1 > 1 + 1e-12:
            raise ParameterError(f"beta * L1 = {self.beta * L1:.4g} exceeds 1")

    def log_term(self, d, L1):
        return max(math.log(d * L1 / (self.eps_H * self.delta)), 1.0)

    def curvature_estimate(self, d, L1):
        return -self.eps_H / (4.0 * self.c_hat * self.log_term(d, L1))


def default_spgd_config(L1, L2, d, eps_H, delta):
    """Worst-case constants: ``beta = 1/L1``, ``c_hat = 51``.

    With ``iota = log(d L1 / (eps_H delta))``:
    ``T = ceil(c_hat iota / (beta eps_H) + 1)``,
    ``F = eps_H^3 / (L2^2 c_hat^5 iota^3)``,
    ``R = eps_H^2 / (L1 L2 c_hat^4 iota^2)``.
    """
    if eps_H > L1:
        raise ParameterError(f"eps_H = {eps_H} exceeds L1 = {L1}")
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    c = 51.0
    beta = 1.0 / L1
    iota = math.log(d * L1 / (eps_H * delta))
    T = math.ceil(c * iota / (beta * eps_H) + 1)
    F = eps_H**3 / (L2**2 * c**5 * iota**3)
    R = eps_H**2 / (L1 * L2 * c**4 * iota**2)
    return SpGdConfig(T=T, script_F=F, script_R=R, beta=beta, c_hat=c, eps_H=eps_H, delta=delta)


def power_iterations(L1, eps_H, k, delta):
    """Iteration count ``ceil((8 L1 / eps_H) ln(k / delta))``, at least 1."""
    return max(1, math.ceil(8.0 * L1 / eps_H * math.log(max(k, 1) / delta)))


def negative_eigen_pair_hessian(problem, x, basis, eps_H, delta, rng, L1=None,
                                cap=POWER_ITER_CAP):
    """Shifted power iteration on the restricted Hessian.

    Iterates with ``L1 I - Z^T H Z``, whose dominant eigenvector is the
    most negative curvature direction of ``Z^T H Z``.  Accepts when the
    final Rayleigh quotient is at most ``-eps_H / 2``.  The loop stops
    early once the eigen-residual is negligible, or once an accepting
    quotient changes by less than ``1e-9 L1`` per step, and never runs
    more than ``cap`` steps.
    """
    d, k = basis.d, basis.k
    if k == 0:
        return _none(d, 0)
    hv = problem.oracle.hess_vec
    if hv is None:
        raise CapabilityError("Hessian oracle needs Hessian-vector products")
    if L1 is None:
        L1 = problem.oracle.L1
    x = np.asarray(x, dtype=float)
    n_iter = min(power_iterations(L1, eps_H, k, delta), cap)

    def op(y):
        return basis.reduce(hv(x, basis.lift(y)))

    y = rng.standard_normal(k)
    y /= np.linalg.norm(y)
    My = op(y)
    evals = 1
    lam = float(y @ My)
    for _ in range(n_iter):
        w = L1 * y - My
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        y = w / nw
        My = op(y)
        evals += 1
        lam_prev, lam = lam, float(y @ My)
        if np.linalg.norm(My - lam * y) <= 1e-12 * max(L1, 1.0):
            break
        # an accepted quotient that has stopped moving is a valid answer;
        # only a rejection needs the full iteration count
        if lam <= -eps_H / 2 and lam_prev - lam <= STALL_TOL * max(L1, 1.0):
            break
    if lam <= -eps_H / 2:
        v = basis.lift(y)
        return EigenPairResult(Flag.FOUND, v / np.linalg.norm(v), lam, evals)
    return _none(d, evals)


def _inactive_ok(poly, inactive, p, tol=1e-12):
    if inactive.size == 0:
        return True
    r = poly.A[inactive] @ p - poly.b[inactive]
    return bool(np.all(r <= tol * (1 + np.abs(poly.b[inactive]))))


def sp_gd(problem, x, basis, cfg, rng, aset=None, L1=None, check_step=True):
    """Perturbed gradient-difference search for negative curvature.

    Starting from a point on the radius-``R`` sphere of the free space,
    iterates ``z <- z - beta (P grad f(x + z) - q)`` with ``q = P grad f(x)``
    and ``P`` fixed at ``x``.  Success means the second-order model
    decreased by at least ``1.5 F``.

    When ``cfg.probe_policy == "shrink"`` and ``aset`` is given, a probe
    that violates an inactive constraint triggers a restart with half the
    radius, at most 30 times.  ``check_step=False`` skips the
    ``beta * L1 <= 1`` test, for objectives whose ``L1`` is only a loose
    local bound.
    """
    d, k = basis.d, basis.k
    if k == 0:
        return _none(d, 0)
    if L1 is None:
        L1 = problem.oracle.L1
    if check_step:
        cfg.validate_step(L1)
    oracle = problem.oracle
    x = np.asarray(x, dtype=float)
    f0 = oracle.f(x)
    q0 = basis.reduce(oracle.grad(x))
    evals = 2
    check = cfg.probe_policy == "shrink" and aset is not None
    inactive = aset.inactive if aset is not None else np.zeros(0, dtype=int)
    radius = cfg.script_R
    for _ in range(MAX_RESTARTS + 1):
        y = rng.standard_normal(k)
        y *= radius / np.linalg.norm(y)
        ok = True
        for _ in range(cfg.T):
            if check and not _inactive_ok(problem.feasible, inactive, x + basis.lift(y)):
                ok = False
                break
            y = y - cfg.beta * (basis.reduce(oracle.grad(x + basis.lift(y))) - q0)
            evals += 1
        if ok and check and not _inactive_ok(problem.feasible, inactive, x + basis.lift(y)):
            ok = False
        if ok:
            break
        radius /= 2
    else:
        return _none(d, evals)
    z = basis.lift(y)
    nz = np.linalg.norm(z)
    evals += 1
    if not np.isfinite(nz) or nz == 0:
        return _none(d, evals)
    model = oracle.f(x + z) - f0 - float(q0 @ y)
    if model <= -1.5 * cfg.script_F:
        return EigenPairResult(Flag.FOUND, z / nz, cfg.curvature_estimate(d, L1), evals)
    return _none(d, evals)

"""Second-order solvers and first-order baselines.

``solve`` runs one of four variants:

* ``snap``: projected gradient steps until the proximal-gradient gap is
  small, then a negative-curvature oracle call; a found direction is
  followed by a line search, no direction means the point is certified.
* ``snap-simplified``: same loop, but always steps along the curvature
  direction and consults the oracle whenever the gap is small.
* ``pgd``: fixed-step projected gradient.
* ``pgd-ls``: projected gradient with Armijo backtracking.

Every iterate is recorded in a ``TraceRecord``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from snapopt.eigen import (
    Flag,
    SpGdConfig,
    negative_eigen_pair_hessian,
    sp_gd,
)
from snapopt.errors import LineSearchError, ParameterError
from snapopt.linesearch import line_search
from snapopt.poly import (
    DEFAULT_ACTIVE_TOL,
    DEFAULT_RANK_TOL,
    active_set,
    free_space_basis,
    project_feasible,
)
from snapopt.stationarity import check_sosp1

VARIANTS = ("snap", "snap-simplified", "pgd", "pgd-ls")
ORACLES = ("hessian", "spgd")
STEP_KINDS = ("init", "PGD", "NCD-grad", "NCD-curv", "boundary", "oracle-call")
STATUSES = ("SOSP1-certified", "oracle-miss", "FOSP1-reached", "max-iter", "line-search-failure")
ARMIJO_C = 1e-4


def practical_spgd_config(L1, eps_H, delta=0.1, T=200, R=1e-4, probe_policy="shrink"):
    """Hand-set escape constants: ``beta = 1/L1`` and ``F = R^2 eps_H / 8``."""
    return SpGdConfig(T=T, script_F=R * R * eps_H / 8.0, script_R=R, beta=1.0 / L1,
                      eps_H=eps_H, delta=delta, practical_override=True,
                      probe_policy=probe_policy)


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``eps_H`` defaults to ``sqrt(eps_G)`` and ``alpha_pi`` to ``1/L1``.
    With ``spgd=None`` the SP-GD oracle uses ``practical_spgd_config``.
    ``no_stop`` keeps iterating to ``max_iter`` instead of returning at a
    certified point (baselines ignore the gap test).
    """

    eps_G: float = 1e-3
    eps_H: float | None = None
    alpha_pi: float | None = None
    delta: float = 0.1
    r_th: int = 10
    max_iter: int = 100_000
    oracle_kind: str = "hessian"
    variant: str = "snap"
    spgd: SpGdConfig | None = None
    seed: int = 0
    active_tol: float = DEFAULT_ACTIVE_TOL
    rank_tol: float = DEFAULT_RANK_TOL
    feas_tol: float = 1e-8
    no_stop: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {VARIANTS}")
        if self.oracle_kind not in ORACLES:
            raise ParameterError(f"oracle_kind must be one of {ORACLES}")
        if not self.eps_G > 0 or (self.eps_H is not None and not self.eps_H > 0):
            raise ParameterError("eps_G and eps_H must be positive")
        if self.alpha_pi is not None and not self.alpha_pi > 0:
            raise ParameterError("alpha_pi must be positive")
        if self.r_th < 0 or self.max_iter < 0:
            raise ParameterError("r_th and max_iter must be nonnegative")
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1)")

    @property
    def eps_H_value(self):
        return float(np.sqrt(self.eps_G)) if self.eps_H is None else self.eps_H


@dataclass
class TraceRecord:
    """State after ``iter`` steps and the step that produced it.

    ``curvature_est`` is set when the oracle was consulted for this step.
    The fields after ``free_dim`` are diagnostics kept out of the CSV.
    """

    iter: int
    elapsed_s: float
    f: float
    fosp1_gap: float
    step_kind: str
    alpha: float
    curvature_est: float | None
    active_count: int
    free_dim: int
    flag_alpha: str = ""
    oracle_flag: str = ""
    dir_norm: float | None = None
    dir_leak: float | None = None
    max_violation: float = 0.0

    CSV_FIELDS = ("iter", "elapsed_s", "f", "fosp1_gap", "step_kind", "alpha",
                  "curvature_est", "active_count", "free_dim")

    def csv_row(self, canonical=False):
        def num(v):
            return "%.17g" % v

        return [
            str(self.iter),
            "0" if canonical else num(self.elapsed_s),
            num(self.f),
            num(self.fosp1_gap),
            self.step_kind,
            num(self.alpha),
            "" if self.curvature_est is None else num(self.curvature_est),
            str(self.active_count),
            str(self.free_dim),
        ]


@dataclass
class SolveResult:
    x_final: np.ndarray
    status: str
    trace: list = field(default_factory=list)
    oracle_calls: int = 0
    wall_time: float = 0.0
    f_final: float = float("nan")
    certificate: object = None
    message: str = ""

    def summary(self):
        last = self.trace[-1] if self.trace else None
        return {
            "status": self.status,
            "f_final": self.f_final,
            "iterations": last.iter if last else 0,
            "fosp1_gap": last.fosp1_gap if last else float("nan"),
            "oracle_calls": self.oracle_calls,
            "wall_time": self.wall_time,
        }


def pgd_step(problem, poly, x, alpha_pi):
    """``proj(x - alpha_pi grad f(x))``."""
    x = np.asarray(x, dtype=float)
    return project_feasible(poly, x - alpha_pi * problem.oracle.grad(x))


def select_direction(q_pi, v, eps_H_prime, L1, L2):
    """Pick between the projected gradient and the curvature direction.

    ``v`` is first oriented so that ``q_pi^T v <= 0``.  The gradient
    direction ``-q_pi`` wins when
    ``(L1 eps'/L2) q_pi^T v - 63 L1 eps'^3 / (128 L2^2) >= -|q_pi|^2``.

    Returns
    -------
    direction : ndarray
    kind : {"gradient", "curvature"}
    """
    q_pi = np.asarray(q_pi, dtype=float)
    v = np.asarray(v, dtype=float)
    qv = float(q_pi @ v)
    if qv > 0:
        v, qv = -v, -qv
    lhs = (L1 * eps_H_prime / L2) * qv - 63.0 * L1 * eps_H_prime**3 / (128.0 * L2 * L2)
    if lhs >= -float(q_pi @ q_pi):
        return -q_pi, "gradient"
    return v, "curvature"


class _Lipschitz:
    # Global constants when the oracle has them, otherwise bounds on a ball
    # around the origin that doubles whenever an iterate leaves it.
    def __init__(self, oracle, x):
        self.oracle = oracle
        self.adaptive = oracle.lipschitz is not None
        self.radius = max(2.0 * float(np.linalg.norm(x)), 1.0)
        self._refresh()

    def _refresh(self):
        self.L1, self.L2 = self.oracle.lipschitz_at(self.radius)

    def update(self, x):
        if not self.adaptive:
            return False
        nx = float(np.linalg.norm(x))
        if nx <= self.radius:
            return False
        self.radius = 2.0 * nx
        self._refresh()
        return True


class _State:
    # Everything the loop needs at the current iterate.
    __slots__ = ("x", "f", "g", "x_pgd", "gap", "aset", "basis")

    def __init__(self, problem, cfg, x, f, alpha):
        poly = problem.feasible
        self.x = x
        self.f = f
        self.g = problem.oracle.grad(x)
        self.x_pgd = project_feasible(poly, x - alpha * self.g)
        self.gap = float(np.linalg.norm(self.x_pgd - x)) / alpha
        self.aset = active_set(poly, x, cfg.active_tol)
        self.basis = free_space_basis(poly, self.aset, cfg.rank_tol)


def _violation(poly, x):
    if poly.m == 0:
        return 0.0
    return float(max(np.max(poly.residual(x)), 0.0)) + 0.0  # no negative zero


def _pgd_ls(problem, st, f, c=ARMIJO_C):
    # Armijo backtracking on the projection arc, halving from alpha = 1.
    alpha = 1.0
    while alpha >= 1e-16:
        xn = project_feasible(problem.feasible, st.x - alpha * st.g)
        gp = (xn - st.x) / alpha
        fn = f(xn)
        if fn <= st.f - c * alpha * float(gp @ gp):
            return xn, fn, alpha
        alpha /= 2
    raise LineSearchError("Armijo backtracking reached its step floor")


def solve(problem, x1, cfg=None):
    """Run the configured variant from ``x1``.

    An infeasible ``x1`` is projected first.  Returns a ``SolveResult``
    whose trace starts with the initial point.  A certified status is
    always re-checked with an independent ``check_sosp1``; if that check
    disagrees the status becomes ``oracle-miss``.
    """
    cfg = cfg or SolverConfig()
    oracle, poly = problem.oracle, problem.feasible
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    x = np.asarray(x1, dtype=float).copy()
    if not poly.is_feasible(x, cfg.feas_tol):
        x = project_feasible(poly, x)
    lip = _Lipschitz(oracle, x)
    eps_G, eps_H = cfg.eps_G, cfg.eps_H_value

    def alpha_pi():
        return cfg.alpha_pi if cfg.alpha_pi is not None else 1.0 / lip.L1

    spgd_cfg = cfg.spgd

    def spgd_for_current_L1():
        if spgd_cfg is not None:
            return spgd_cfg
        return practical_spgd_config(lip.L1, eps_H, cfg.delta)

    f_x = oracle.f(x)
    st = _State(problem, cfg, x, f_x, alpha_pi())
    trace = []

    def record(step, kind, alpha, curv=None, flag_alpha="", oracle_flag="",
               dir_norm=None, dir_leak=None):
        trace.append(TraceRecord(
            iter=step, elapsed_s=time.perf_counter() - t0, f=float(st.f), fosp1_gap=st.gap,
            step_kind=kind, alpha=float(alpha), curvature_est=curv,
            active_count=len(st.aset), free_dim=st.basis.k, flag_alpha=flag_alpha,
            oracle_flag=oracle_flag, dir_norm=dir_norm, dir_leak=dir_leak,
            max_violation=_violation(poly, st.x),
        ))

    record(0, "init", 0.0)
    best_x, best_f = st.x, st.f
    flag_alpha = Flag.FOUND
    r_last = 0
    r_quiet = None
    oracle_calls = 0
    status, message = "max-iter", ""
    certificate = None
    snap_like = cfg.variant in ("snap", "snap-simplified")

    def move(x_new, f_new):
        nonlocal st, best_x, best_f
        lip.update(x_new)
        st = _State(problem, cfg, x_new, f_new, alpha_pi())
        if st.f < best_f:
            best_x, best_f = st.x, st.f

    step = 0
    while step < cfg.max_iter:
        r = step + 1
        small = st.gap <= eps_G
        if not snap_like:
            if small and not cfg.no_stop:
                status = "FOSP1-reached"
                break
            step += 1
            if cfg.variant == "pgd":
                x_new, f_new, a = st.x_pgd, oracle.f(st.x_pgd), alpha_pi()
            else:
                try:
                    x_new, f_new, a = _pgd_ls(problem, st, oracle.f)
                except LineSearchError as exc:
                    status, message = "line-search-failure", str(exc)
                    break
            move(x_new, f_new)
            record(step, "PGD", a)
            continue

        if cfg.variant == "snap":
            gate = small and (flag_alpha is Flag.FOUND or r - r_last >= cfg.r_th)
        else:
            gate = small and (r_quiet is None or r - r_quiet >= cfg.r_th)
        if not gate:
            step += 1
            a = alpha_pi()
            move(st.x_pgd, oracle.f(st.x_pgd))
            record(step, "PGD", a)
            continue

        oracle_calls += 1
        if cfg.oracle_kind == "hessian":
            res = negative_eigen_pair_hessian(problem, st.x, st.basis, eps_H, cfg.delta, rng, L1=lip.L1)
        else:
            res = sp_gd(problem, st.x, st.basis, spgd_for_current_L1(), rng, aset=st.aset, L1=lip.L1,
                         check_step=not lip.adaptive)

        if not res.found:
            step += 1
            record(step, "oracle-call", 0.0, curv=0.0, oracle_flag=str(Flag.NONE))
            if not cfg.no_stop:
                certificate = check_sosp1(problem, st.x, eps_G, eps_H, alpha=alpha_pi(),
                                          active_tol=cfg.active_tol, rank_tol=cfg.rank_tol)
                status = "SOSP1-certified" if certificate.sosp1 else "oracle-miss"
                break
            # keep going: hold off the oracle for r_th iterations
            flag_alpha, r_last, r_quiet = Flag.NONE, r, r
            continue

        v = res.direction
        leak = float(np.linalg.norm(poly.A[st.aset.active] @ v)) if len(st.aset) else 0.0
        eps_p = abs(res.curvature_estimate)
        q = st.basis.lift(st.basis.reduce(st.g))
        if cfg.variant == "snap":
            d_dir, kind = select_direction(q, v, eps_p, lip.L1, lip.L2)
        else:
            d_dir, kind = (-v if q @ v > 0 else v), "curvature"
        try:
            out = line_search(problem, poly, st.aset, st.x, d_dir, kind, eps_p, lip.L1, f_x=st.f)
        except LineSearchError as exc:
            status, message = "line-search-failure", str(exc)
            break
        step += 1
        flag_alpha, r_quiet = out.flag_alpha, None
        if flag_alpha is Flag.NONE:
            r_last = r
        move(out.x_next, out.f_next)
        if out.boundary_hit:
            label = "boundary"
        else:
            label = "NCD-grad" if kind == "gradient" else "NCD-curv"
        record(step, label, out.alpha_used, curv=res.curvature_estimate,
               flag_alpha=str(out.flag_alpha), oracle_flag=str(Flag.FOUND),
               dir_norm=float(np.linalg.norm(v)), dir_leak=leak)

    x_final = st.x
    if status in ("max-iter", "line-search-failure") and best_f < st.f:
        x_final = best_x
    return SolveResult(
        x_final=np.array(x_final),
        status=status,
        trace=trace,
        oracle_calls=oracle_calls,
        wall_time=time.perf_counter() - t0,
        f_final=float(oracle.f(x_final)),
        certificate=certificate,
        message=message,
    )


def with_overrides(cfg, **kw):
    """Copy of ``cfg`` with the given fields replaced (``None`` values skipped)."""
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})

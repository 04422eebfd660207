"""Trace invariants and the preset sweep behind ``snapopt verify``."""

from __future__ import annotations

import time
from dataclasses import dataclass

from snapopt.bench import load_preset_spec, preset_names, run_cell

MONOTONE_VARIANTS = ("snap", "snap-simplified", "pgd")
ORACLE_KINDS = ("oracle-call", "NCD-grad", "NCD-curv", "boundary")


@dataclass
class Check:
    preset: str
    algorithm: str
    name: str
    ok: bool
    detail: str = ""

    def line(self):
        mark = "PASS" if self.ok else "FAIL"
        tail = f"  ({self.detail})" if self.detail else ""
        return f"{mark}  {self.preset:<14} {self.algorithm:<16} {self.name}{tail}"


def check_monotone(trace, rel=1e-12):
    for a, b in zip(trace, trace[1:]):
        if b.f > a.f + rel * max(abs(a.f), 1.0):
            return False, f"f rose at iter {b.iter}: {a.f:.17g} -> {b.f:.17g}"
    return True, ""


def check_feasible(trace, tol=1e-8):
    worst = max((r.max_violation for r in trace), default=0.0)
    return worst <= tol, f"max violation {worst:.2e}"


def check_gating(trace, eps_G, r_th, variant):
    """Oracle only after a small gap, and never within ``r_th`` iterations
    of a sufficient-descent curvature step or of an empty oracle answer."""
    flag, r_last = "◇", 0
    for prev, rec in zip(trace, trace[1:]):
        if rec.step_kind not in ORACLE_KINDS:
            continue
        if prev.fosp1_gap > eps_G:
            return False, f"oracle at iter {rec.iter} with gap {prev.fosp1_gap:.3e}"
        if flag == "∅" and rec.iter - r_last < r_th:
            return False, f"oracle at iter {rec.iter}, {rec.iter - r_last} after iter {r_last}"
        if rec.step_kind == "oracle-call":
            flag, r_last = "∅", rec.iter
        elif variant == "snap":
            flag = rec.flag_alpha
            if flag == "∅":
                r_last = rec.iter
        else:
            flag = "◇"
    return True, ""


def check_boundary_streak(trace, d, m):
    limit = min(d, m)
    streak = worst = 0
    for rec in trace:
        streak = streak + 1 if rec.step_kind == "boundary" else 0
        worst = max(worst, streak)
    return worst <= limit, f"longest streak {worst}, bound {limit}"


def check_directions(trace, norm_tol=1e-10, leak_tol=1e-8):
    for rec in trace:
        if rec.dir_norm is None:
            continue
        if abs(rec.dir_norm - 1.0) > norm_tol or rec.dir_leak > leak_tol:
            return False, f"iter {rec.iter}: |v| = {rec.dir_norm:.12g}, |A'v| = {rec.dir_leak:.2e}"
    return True, ""


def trace_checks(preset, algorithm, trace, cfg, d, m):
    """All invariant checks applicable to one solver trace."""
    out = []
    if cfg.variant in MONOTONE_VARIANTS:
        out.append(Check(preset, algorithm, "monotone f", *check_monotone(trace)))
    out.append(Check(preset, algorithm, "feasible iterates", *check_feasible(trace)))
    if cfg.variant.startswith("snap"):
        out.append(Check(preset, algorithm, "oracle gating",
                         *check_gating(trace, cfg.eps_G, cfg.r_th, cfg.variant)))
        out.append(Check(preset, algorithm, "boundary streak", *check_boundary_streak(trace, d, m)))
        out.append(Check(preset, algorithm, "unit free-space directions", *check_directions(trace)))
    return out


def run_invariant_suite(presets=None, max_iter=2000, seeds=(0,), echo=None):
    """Run every shipped preset with a reduced budget and check its traces.

    Each preset is run with its own algorithms plus ``snap`` and
    ``snap-simplified``.
    Returns the list of checks; ``echo`` (e.g. ``print``) receives one
    line per check as it completes.
    """
    checks = []
    for name in presets or preset_names():
        spec = load_preset_spec(name)
        algos = list(dict.fromkeys(list(spec.algorithms) + ["snap", "snap-simplified"]))
        for seed in seeds:
            prob = spec.build_problem(seed)
            d, m = prob.feasible.d, prob.feasible.m
            for c in spec.init_scales:
                for algo in algos:
                    t0 = time.perf_counter()
                    row, res = run_cell(spec, algo, seed, c, max_iter=min(max_iter, spec.max_iter))
                    cfg = spec.solver_config(algo, seed, max_iter)
                    if res is None:
                        new = [Check(name, algo, "solver ran", False, row["status"])]
                    else:
                        new = trace_checks(name, algo, res.trace, cfg, d, m)
                    for ch in new:
                        ch.detail = (ch.detail + "; " if ch.detail else "") + \
                            f"seed {seed}, c={c:g}, {time.perf_counter() - t0:.1f}s"
                        if echo:
                            echo(ch.line())
                    checks.extend(new)
    return checks

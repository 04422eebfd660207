"""End-to-end acceptance checks, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""

import math
import time
from dataclasses import replace

import numpy as np

from oracles import project_bruteforce, random_polyhedron
from snapopt.bench import load_preset_spec, run_experiment
from snapopt.cli import main
from snapopt.eigen import sp_gd
from snapopt.oracle import example1, initial_point, make_problem, perturb_linear
from snapopt.poly import Polyhedron, active_set, free_space_basis, project_feasible
from snapopt.solver import SolverConfig, practical_spgd_config, solve, with_overrides
from snapopt.stationarity import check_sosp1, check_sosp2_bruteforce
from snapopt.verify import run_invariant_suite


def test_1_example1_certification(criterion, capsys):
    t0 = time.perf_counter()
    code = main(["check", "--preset", "example1", "--point", "0,0"])
    out = capsys.readouterr().out
    s2 = check_sosp2_bruteforce(example1(), np.zeros(2), 1e-6, 1e-6)
    elapsed = time.perf_counter() - t0
    ok = (code == 0 and "SOSP1                   : True" in out
          and "SOSP2 (brute force)     : False" in out
          and s2.min_form <= -2 + 1e-6 and elapsed < 1.0)
    criterion(1, "Example 1 corner: SOSP1 true, SOSP2 false", ok,
              f"witness {s2.witness}, form {s2.min_form:.6g}, {elapsed:.2f}s")
    assert ok


def test_2_sc_restored_equivalence(criterion):
    t0 = time.perf_counter()
    sc_fail, sosp2_fail, certified = [], [], 0
    for seed in range(50):
        prob = perturb_linear(make_problem("box-qp", {"d": 3}, seed=seed), 0.1, seed=seed)
        x1 = np.random.default_rng(seed).uniform(0, 1, 3)
        res = solve(prob, x1, SolverConfig(eps_G=1e-6, eps_H=1e-6, seed=seed))
        rep = check_sosp1(prob, res.x_final, 1e-6, 1e-6)
        mu = rep.min_active_multiplier
        if not (rep.sc_holds and (mu is None or mu > 1e-8)):
            sc_fail.append(seed)
        if res.status == "SOSP1-certified":
            certified += 1
            if not check_sosp2_bruteforce(prob, res.x_final, 1e-6, 1e-6).sosp2:
                sosp2_fail.append(seed)
    elapsed = time.perf_counter() - t0
    ok = not sc_fail and not sosp2_fail and elapsed < 120
    criterion(2, "SC holds and SOSP1 implies SOSP2 on perturbed box-QPs", ok,
              f"{certified}/50 certified, SC failures {sc_fail}, SOSP2 failures {sosp2_fail}, {elapsed:.1f}s")
    assert ok


def test_3_pgd_descent_constant(criterion):
    t0 = time.perf_counter()
    eps_G = 1e-3
    worst, steps = np.inf, 0
    for seed in range(20):
        prob = make_problem("box-qp", {"d": 5, "convex": True, "lower": -1.0, "upper": 1.0}, seed=seed)
        L1 = prob.oracle.L1
        x1 = np.random.default_rng(seed).uniform(-1, 1, 5)
        for variant in ("pgd", "snap"):
            res = solve(prob, x1, SolverConfig(variant=variant, eps_G=eps_G, max_iter=2000))
            for prev, rec in zip(res.trace, res.trace[1:]):
                if rec.step_kind == "PGD" and prev.fosp1_gap > eps_G:
                    steps += 1
                    worst = min(worst, (prev.f - rec.f) - eps_G**2 / (18 * L1))
    elapsed = time.perf_counter() - t0
    ok = steps > 0 and worst >= -1e-12 and elapsed < 30
    criterion(3, "PGD descent >= eps_G^2/(18 L1)", ok,
              f"{steps} steps, min slack {worst:.3e}, {elapsed:.1f}s")
    assert ok


def test_4_spgd_curvature_quality(criterion):
    t0 = time.perf_counter()
    d, eps_H, delta, L1 = 10, 0.5, 0.1, 1.0
    bound = -eps_H / (8 * 51 * math.log(d * L1 / (eps_H * delta)))
    cfg = practical_spgd_config(L1, eps_H, delta, T=200, R=1e-4)
    good = psd_none = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        for psd in (False, True):
            diag = rng.uniform(0.0 if psd else -1.0, 1.0, d)
            if not psd:
                diag[rng.integers(d)] = -1.0
            prob = make_problem("box-qp", {"Q": np.diag(diag), "c": np.zeros(d)})
            prob = replace(prob, feasible=Polyhedron.unconstrained(d))
            x = np.zeros(d)
            B = free_space_basis(prob.feasible, active_set(prob.feasible, x))
            res = sp_gd(prob, x, B, cfg, rng)
            if psd:
                psd_none += not res.found
            elif res.found and res.direction @ (diag * res.direction) <= bound:
                good += 1
    elapsed = time.perf_counter() - t0
    ok = good >= 90 and psd_none == 100 and elapsed < 60
    criterion(4, "SP-GD curvature quality", ok,
              f"{good}/100 below {bound:.3e}, {psd_none}/100 empty on PSD, {elapsed:.1f}s")
    assert ok


def test_5_saddle_escape_nmf(criterion, tmp_path):
    t0 = time.perf_counter()
    spec = load_preset_spec("nmf-small")
    spec.algorithms = ["pgd", "snap-plus"]
    spec.init_scales = [1e-10]
    spec.max_iter = 20000
    art = run_experiment(spec, output=tmp_path, plots=False)
    final = {(r["algorithm"], r["seed"]): r["f_last"] for r in art.summary}
    ratio_ok = [final["snap-plus", s] <= 0.1 * final["pgd", s] for s in spec.seeds]
    small = sum(final["snap-plus", s] <= 1e-3 for s in spec.seeds)
    elapsed = time.perf_counter() - t0
    ok = all(ratio_ok) and small >= 3 and elapsed < 300
    # Eckart-Young: no rank-k factorization, nonnegative or not, fits M better
    floor = {}
    for s in spec.seeds:
        sv = np.linalg.svd(spec.build_problem(s).meta["M"], compute_uv=False)
        floor[s] = float(np.sum(sv[spec.build_problem(s).meta["k"]:] ** 2))
    detail = ", ".join(f"seed {s}: pgd {final['pgd', s]:.4g} snap+ {final['snap-plus', s]:.4g} "
                       f"(rank bound {floor[s]:.3g})" for s in spec.seeds)
    criterion(5, "NMF saddle escape, SNAP+ <= 0.1 PGD and <= 1e-3 on 3/5 seeds", ok,
              f"{detail}; {small}/5 below 1e-3; {elapsed:.0f}s")
    assert ok


def test_6_projection_oracle_equivalence(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(200):
        d, m = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        A, b, center = random_polyhedron(rng, d, m)
        v = center + 3 * rng.standard_normal(d)
        err = np.max(np.abs(project_feasible(Polyhedron(A, b), v) - project_bruteforce(A, b, v)))
        worst = max(worst, float(err))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 30
    criterion(6, "projection matches brute-force QP", ok, f"max error {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_7_invariant_suite(criterion):
    t0 = time.perf_counter()
    checks = run_invariant_suite()
    elapsed = time.perf_counter() - t0
    bad = [c.line() for c in checks if not c.ok]
    ok = not bad and elapsed < 600
    criterion(7, "invariant suite over all presets", ok,
              f"{len(checks) - len(bad)}/{len(checks)} checks, {elapsed:.0f}s" + (f"; {bad[:3]}" if bad else ""))
    assert ok


def test_8_gap_halving_trend(criterion):
    # iterations of the first-order phase until the gap first drops below eps_G
    t0 = time.perf_counter()
    spec = load_preset_spec("nmf-small")
    ratios = []
    for seed in range(3):
        prob = spec.build_problem(seed)
        x1 = initial_point(prob, 1.0, seed)
        counts = []
        for eps in (1.0, 0.5):
            cfg = with_overrides(spec.solver_config("pgd", seed, 200_000), eps_G=eps, no_stop=False)
            res = solve(prob, x1, cfg)
            counts.append(res.trace[-1].iter if res.status == "FOSP1-reached" else math.inf)
        ratios.append(counts[1] / counts[0])
    elapsed = time.perf_counter() - t0
    ok = all(1.0 <= r <= 8.0 for r in ratios)
    criterion(8, "halving eps_G costs at most ~4x (factor 2 slack) PGD iterations", ok,
              f"ratios {[round(r, 2) for r in ratios]}, {elapsed:.0f}s")
    assert ok

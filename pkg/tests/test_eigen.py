import math
from dataclasses import replace

import numpy as np
import pytest

from snapopt.eigen import (
    Flag,
    SpGdConfig,
    default_spgd_config,
    negative_eigen_pair_hessian,
    power_iterations,
    sp_gd,
)
from snapopt.errors import ParameterError
from snapopt.oracle import example1, make_problem
from snapopt.poly import Polyhedron, active_set, free_space_basis


def free_quadratic(Q):
    """``0.5 x'Qx`` on all of R^d."""
    Q = np.asarray(Q, dtype=float)
    prob = make_problem("box-qp", {"Q": Q, "c": np.zeros(len(Q))})
    return replace(prob, feasible=Polyhedron.unconstrained(len(Q)))


def full_basis(prob, x):
    return free_space_basis(prob.feasible, active_set(prob.feasible, x))


def test_hessian_oracle_finds_negative_direction():
    prob = free_quadratic(np.diag([1.0, -1.0]))
    x = np.zeros(2)
    res = negative_eigen_pair_hessian(prob, x, full_basis(prob, x), 0.5, 0.1, np.random.default_rng(0))
    assert res.flag is Flag.FOUND and res.found
    assert np.allclose(np.abs(res.direction), [0.0, 1.0], atol=1e-6)
    assert res.curvature_estimate == pytest.approx(-1.0, abs=1e-9)


def test_hessian_oracle_psd_returns_none():
    prob = free_quadratic(np.eye(3))
    x = np.zeros(3)
    res = negative_eigen_pair_hessian(prob, x, full_basis(prob, x), 0.1, 0.1, np.random.default_rng(0))
    assert res.flag is Flag.NONE
    assert np.all(res.direction == 0) and res.curvature_estimate == 0.0


def test_oracles_vacuous_on_empty_free_space():
    prob = example1()
    x = np.zeros(2)
    B = full_basis(prob, x)
    assert B.k == 0
    rng = np.random.default_rng(0)
    assert negative_eigen_pair_hessian(prob, x, B, 1e-3, 0.1, rng).flag is Flag.NONE
    cfg = SpGdConfig(T=10, script_F=1e-6, script_R=1e-3, beta=0.5, practical_override=True)
    assert sp_gd(prob, x, B, cfg, rng).flag is Flag.NONE


def test_power_iteration_count():
    assert power_iterations(1.0, 0.1, 10, 0.1) == math.ceil(80 * math.log(100))
    assert power_iterations(1.0, 0.1, 1, 0.5) == math.ceil(80 * math.log(2))


@pytest.mark.parametrize("seed", range(100))
def test_hessian_oracle_soundness_random(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 9))
    eps = 0.1
    V, _ = np.linalg.qr(rng.standard_normal((k, k)))
    negative = seed % 2 == 0
    lams = rng.uniform(0.0, 1.0, size=k)
    if negative:
        lams[0] = -rng.uniform(2 * eps, 1.0)
    prob = free_quadratic(V @ np.diag(lams) @ V.T)
    x = np.zeros(k)
    res = negative_eigen_pair_hessian(prob, x, full_basis(prob, x), eps, 0.1, rng, L1=1.0)
    if negative:
        assert res.found
        d = res.direction
        assert abs(np.linalg.norm(d) - 1) <= 1e-10
        assert d @ prob.meta["Q"] @ d <= res.curvature_estimate + 1e-8
    else:
        assert not res.found


def test_hessian_oracle_respects_free_space():
    prob = make_problem("box-qp", {"Q": np.diag([-3.0, -1.0, 2.0]), "c": np.zeros(3)})
    x = np.array([0.0, 0.5, 0.5])
    a = active_set(prob.feasible, x)
    res = negative_eigen_pair_hessian(prob, x, free_space_basis(prob.feasible, a), 0.1, 0.1,
                                      np.random.default_rng(1))
    assert res.found
    assert np.linalg.norm(prob.feasible.A[a.active] @ res.direction) <= 1e-8
    assert res.curvature_estimate == pytest.approx(-1.0, abs=1e-8)


def test_spgd_diag_trace():
    prob = free_quadratic(np.diag([1.0, -1.0]))
    x = np.zeros(2)
    cfg = SpGdConfig(T=40, script_F=1e-6, script_R=1e-3, beta=0.5, eps_H=0.5, practical_override=True)
    res = sp_gd(prob, x, full_basis(prob, x), cfg, np.random.default_rng(3))
    assert res.found
    v = res.direction
    assert v @ np.diag([1.0, -1.0]) @ v <= -0.9
    assert abs(np.linalg.norm(v) - 1) <= 1e-10


def test_spgd_psd_returns_none():
    prob = free_quadratic(np.eye(4))
    x = np.zeros(4)
    cfg = SpGdConfig(T=50, script_F=1e-10, script_R=1e-3, beta=0.5, practical_override=True)
    assert sp_gd(prob, x, full_basis(prob, x), cfg, np.random.default_rng(0)).flag is Flag.NONE


def test_spgd_is_deterministic():
    prob = free_quadratic(np.diag([2.0, 0.5, -0.3]))
    x = np.zeros(3)
    cfg = SpGdConfig(T=30, script_F=1e-9, script_R=1e-3, beta=0.5, eps_H=0.1, practical_override=True)
    a = sp_gd(prob, x, full_basis(prob, x), cfg, np.random.default_rng(42))
    b = sp_gd(prob, x, full_basis(prob, x), cfg, np.random.default_rng(42))
    assert a.flag == b.flag and np.array_equal(a.direction, b.direction)
    assert a.evals_used == b.evals_used


def test_spgd_shrinks_radius_near_boundary():
    prob = make_problem("box-qp", {"Q": np.diag([-1.0, -1.0]), "c": np.zeros(2)})
    x = np.array([0.0, 0.5])
    a = active_set(prob.feasible, x)
    cfg = SpGdConfig(T=5, script_F=1e-12, script_R=10.0, beta=0.5, eps_H=0.1, practical_override=True)
    res = sp_gd(prob, x, free_space_basis(prob.feasible, a), cfg, np.random.default_rng(0), aset=a)
    assert res.found
    assert abs(res.direction[0]) < 1e-12


def test_spgd_rejects_large_step():
    prob = free_quadratic(np.diag([4.0, -1.0]))
    cfg = SpGdConfig(T=5, script_F=1e-6, script_R=1e-3, beta=0.5, practical_override=True)
    with pytest.raises(ParameterError):
        sp_gd(prob, np.zeros(2), full_basis(prob, np.zeros(2)), cfg, np.random.default_rng(0))


def test_default_config_formulas():
    cfg = default_spgd_config(1.0, 1.0, 10, 0.1, 0.1)
    iota = math.log(1000)
    assert iota == pytest.approx(6.9078, abs=1e-4)
    # 51 * iota / 0.1 + 1 = 3523.97...
    assert cfg.T == 3524
    assert cfg.script_R == pytest.approx(0.01 / (51**4 * iota**2))
    assert cfg.script_R == pytest.approx(3.1e-11, rel=0.01)
    assert cfg.script_F == pytest.approx(1e-3 / (51**5 * iota**3))
    assert cfg.beta == 1.0 and cfg.c_hat == 51 and not cfg.practical_override


def test_default_config_rejects_large_eps():
    with pytest.raises(ParameterError):
        default_spgd_config(1.0, 1.0, 10, 2.0, 0.1)


def test_practical_config_values():
    cfg = SpGdConfig(T=100, script_F=100.0, script_R=1e-4, beta=0.01, practical_override=True)
    assert (cfg.T, cfg.script_R, cfg.script_F) == (100, 1e-4, 100.0)


def test_config_validation():
    with pytest.raises(ParameterError):
        SpGdConfig(T=10, script_F=1.0, script_R=1.0, beta=0.1, c_hat=10)
    with pytest.raises(ParameterError):
        SpGdConfig(T=0, script_F=1.0, script_R=1.0, beta=0.1)
    with pytest.raises(ParameterError):
        SpGdConfig(T=5, script_F=1.0, script_R=1.0, beta=0.1, probe_policy="bounce")

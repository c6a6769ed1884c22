import math

import numpy as np
import pytest

from fracevo import abstractcore as ac
from fracevo.kernels import grunwald_weights
from fracevo.operators import Grid1D, Linear, PorousMedium, TripleSpec
from fracevo.verify import yosida_setup


def identity_operator(n_time=8, n_dof=3, dt=0.125):
    g = Grid1D(n_dof)
    return ac.SpaceTimeOperator(Linear(1.0), TripleSpec(g, "plaplace", 2.0), dt * np.arange(1, n_time + 1))


def test_beta_one_is_negated_backward_difference():
    lam = ac.build_discrete_lambda(1.0, 0.1, 5)
    expected = -(np.eye(5) - np.eye(5, k=-1)) / 0.1
    np.testing.assert_allclose(lam.matrix, expected, rtol=1e-14)


def test_impulse_response():
    lam = ac.build_discrete_lambda(0.5, 0.01, 20)
    u = np.zeros(20)
    u[0] = 1.0
    np.testing.assert_allclose(lam.apply(u), -0.01**-0.5 * grunwald_weights(0.5, 19), rtol=1e-14)
    assert np.all(np.triu(lam.matrix, 1) == 0)


def test_build_validation():
    with pytest.raises(ValueError):
        ac.build_discrete_lambda(0.5, 0.1, 0)
    with pytest.raises(ValueError):
        ac.build_discrete_lambda(0.5, 0.0, 4)


@pytest.mark.parametrize("beta", [0.2, 0.5, 0.9, 1.0])
def test_dissipative(beta):
    lam = ac.build_discrete_lambda(beta, 0.05, 24)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        u = rng.normal(size=(24, 2))
        u[0] = 0.0
        assert lam.pairing(u) <= 1e-12


def test_resolvent_limits():
    v = np.random.default_rng(1).normal(size=(6, 2))
    tiny = ac.build_discrete_lambda(0.5, 1e200, 6)
    np.testing.assert_allclose(ac.resolvent(tiny, 4.0, v), v / 4.0, rtol=1e-14)
    lam = ac.build_discrete_lambda(0.5, 0.1, 6)
    w = ac.resolvent(lam, 3.0, v)
    np.testing.assert_allclose((3.0 * np.eye(6) - lam.matrix) @ w, v, atol=1e-12)
    errs = [np.linalg.norm(a * ac.resolvent(lam, a, v) - v) for a in (1e2, 1e3, 1e4)]
    assert errs[0] / errs[1] == pytest.approx(10, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(10, rel=0.01)
    with pytest.raises(ValueError):
        ac.resolvent(lam, 0.0, v)


def test_resolvent_contraction_in_h_norm():
    g = Grid1D(5)
    tr = TripleSpec(g, "pme", 3.0)
    lam = ac.build_discrete_lambda(0.7, 0.1, 10)
    v = np.random.default_rng(2).normal(size=(10, 5))
    w = ac.resolvent(lam, 2.0, v, triple=tr)
    assert 2.0 * math.sqrt(sum(tr.h_inner(r, r) for r in w)) <= math.sqrt(sum(tr.h_inner(r, r) for r in v))
    assert ac.resolvent_norm(lam, 2.0) <= 1.0 + 1e-12


def test_yosida_matrix_identity():
    lam = ac.build_discrete_lambda(0.6, 0.1, 7)
    a = 5.0
    y = ac.yosida_matrix(lam, a)
    vlam = ac.resolvent(lam, a, lam.matrix)
    np.testing.assert_allclose(y, a * vlam, atol=1e-12)


def test_identity_zero_forcing():
    st = identity_operator()
    lam = ac.build_discrete_lambda(0.5, 0.125, 8)
    s = ac.solve_regularized(st, lam, 10.0, np.zeros((8, 3)))
    assert not np.any(s.u_alpha)


def test_identity_linear_system():
    st = identity_operator()
    lam = ac.build_discrete_lambda(0.5, 0.125, 8)
    f = np.random.default_rng(3).normal(size=(8, 3))
    s = ac.solve_regularized(st, lam, 7.0, f)
    direct = np.linalg.solve(np.eye(8) - ac.yosida_matrix(lam, 7.0), f)
    np.testing.assert_allclose(s.u_alpha, direct, atol=1e-10)


def test_porous_medium_small_grid():
    st, lam, f = yosida_setup("porous_medium")
    assert st.shape == (32, 16)
    s = ac.solve_regularized(st, lam, 100.0, f)
    assert s.residual <= 1e-8
    assert s.norm_u > 0 and s.norm_Au > 0 and s.norm_lambda_u > 0


def test_nonconvergence_reports_alpha():
    st, lam, f = yosida_setup("porous_medium")
    with pytest.raises(ac.NonConvergence, match="alpha=100"):
        ac.solve_regularized(st, lam, 100.0, f, max_iter=1)


def test_study_linear_rate_and_csv():
    st, lam, f = yosida_setup("linear")
    study = ac.yosida_convergence_study(st, lam, f, [1.0, 10.0, 100.0, 1e3, 1e4])
    assert study.rate == pytest.approx(-1.0, abs=0.05)
    assert study.monotone_from == 0
    assert study.resolvent_constant <= 1.0
    lines = study.to_csv().splitlines()
    assert lines[0] == "alpha,residual,norm_u,norm_Au,err_vs_reference"
    assert len(lines) == 6


def test_study_porous_medium_bounded():
    st, lam, f = yosida_setup("porous_medium")
    study = ac.yosida_convergence_study(st, lam, f, [1.0, 10.0, 100.0, 1e3, 1e4])
    assert study.bounded
    assert np.all(np.diff(study.errors) < 0)
    assert study.errors[-1] <= 1e-3 * study.reference_norm


def test_study_zero_forcing():
    st, lam, f = yosida_setup("porous_medium", n_time=8, n_dof=4)
    study = ac.yosida_convergence_study(st, lam, np.zeros_like(f), [1.0, 10.0, 100.0])
    assert all(not np.any(s.u_alpha) for s in study.states)


def test_study_needs_three_alphas():
    st, lam, f = yosida_setup("linear", n_time=4, n_dof=3)
    with pytest.raises(ValueError):
        ac.yosida_convergence_study(st, lam, f, [1.0, 10.0])
    with pytest.raises(ValueError):
        ac.yosida_convergence_study(st, lam, f, [1.0, 10.0, 5.0])


def test_symbol_examples():
    assert ac.symbol_error(0.5, 0.1, [0.0]) == 0.0
    assert ac.discrete_symbol(0.5, 0.1, 0.0) == 0
    assert ac.continuous_symbol(0.5, 0.0) == 0
    w, dt = 2.0, 0.01
    expected = abs((1 - np.exp(-1j * w * dt)) / dt - 1j * w) / w
    assert ac.symbol_error(1.0, dt, [w]) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(w * dt / 2, rel=0.01)


def test_symbol_conjugate_symmetry():
    c = ac.continuous_symbol(0.7, np.array([-3.0, 3.0]))
    assert c[0] == pytest.approx(np.conj(c[1]))
    assert np.all(c.real <= 0)


def test_symbol_linear_in_dt():
    errs = [ac.symbol_error(0.4, dt, [0.5, 1.0, 2.0, 4.0]) for dt in (1e-1, 1e-2, 1e-3)]
    assert errs[0] / errs[1] == pytest.approx(10, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(10, rel=0.02)


def test_symbol_nyquist():
    with pytest.raises(ValueError, match="Nyquist"):
        ac.symbol_error(0.5, 1.0, [4.0])

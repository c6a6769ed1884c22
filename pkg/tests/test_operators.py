import math

import numpy as np
import pytest

from fracevo import operators
from fracevo.operators import (Grid1D, Linear, PLaplace, PorousMedium, PowerPsi, StateSampler, TabulatedPsi,
                               TripleKind, TripleSpec)


@pytest.fixture
def grid():
    return Grid1D(63)


def test_grid_spacing():
    g = Grid1D(9, 2.0)
    assert g.h == pytest.approx(0.2)
    assert g.nodes[0] == pytest.approx(0.2) and g.nodes[-1] == pytest.approx(1.8)
    with pytest.raises(ValueError):
        g.check(np.zeros(8))
    with pytest.raises(ValueError):
        Grid1D(0)


def test_porous_medium_p2_is_laplacian(grid):
    tr = TripleSpec(grid, TripleKind.PME, 2.0)
    u = np.random.default_rng(0).normal(size=grid.n_interior)
    np.testing.assert_allclose(PorousMedium(2.0).apply(tr, u), grid.laplacian_matrix() @ u, rtol=1e-12)


def test_plaplace_p2_on_first_mode(grid):
    tr = TripleSpec(grid, TripleKind.PLAPLACE, 2.0)
    u = grid.sine_mode(1)
    lam1 = grid.laplacian_eigenvalues()[0]
    np.testing.assert_allclose(PLaplace(2.0).apply(tr, u), lam1 * u, atol=1e-10)
    assert lam1 == pytest.approx(math.pi**2, rel=1e-3)


def test_operators_vanish_at_zero(grid):
    z = np.zeros(grid.n_interior)
    assert not np.any(PorousMedium(3.0).apply(TripleSpec(grid, "pme", 3.0), z))
    assert not np.any(PLaplace(3.0, True).apply(TripleSpec(grid, "plaplace", 3.0), z))
    assert not np.any(Linear(2.0).apply(TripleSpec(grid, "plaplace"), z))


def test_h_inner_examples(grid):
    u = grid.sine_mode(1)
    pme = TripleSpec(grid, TripleKind.PME, 2.0)
    assert pme.h_inner(u, u) == pytest.approx(1.0 / (2.0 * math.pi**2), rel=1e-3)
    l2 = TripleSpec(grid, TripleKind.PLAPLACE, 2.0)
    assert l2.h_inner(np.ones(grid.n_interior), np.ones(grid.n_interior)) == pytest.approx(1.0, abs=2 * grid.h)
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(2, grid.n_interior))
    for tr in (pme, l2, TripleSpec(grid, TripleKind.PME, 3.0, 0.4)):
        assert tr.h_inner(a, b) == pytest.approx(tr.h_inner(b, a), rel=1e-12)
        assert tr.h_inner(a, a) > 0


def test_invert_dirichlet_laplacian(grid):
    v = grid.sine_mode(1)
    lam = (2.0 - 2.0 * math.cos(math.pi * grid.h)) / grid.h**2
    np.testing.assert_allclose(operators.invert_dirichlet_laplacian(grid, v), v / lam, rtol=1e-12)
    assert not np.any(operators.invert_dirichlet_laplacian(grid, np.zeros(grid.n_interior)))
    r = np.random.default_rng(2).normal(size=grid.n_interior)
    back = operators.apply_dirichlet_laplacian(grid, operators.invert_dirichlet_laplacian(grid, r))
    np.testing.assert_allclose(back, r, atol=1e-12 * np.abs(r).max() * grid.n_interior)


def test_spectral_fractional_laplacian(grid):
    r = np.random.default_rng(3).normal(size=grid.n_interior)
    np.testing.assert_allclose(operators.spectral_fractional_laplacian(grid, 1.0, r),
                               operators.apply_dirichlet_laplacian(grid, r), rtol=1e-10, atol=1e-8)
    k = 5
    ev = grid.laplacian_eigenvalues()[k - 1]
    np.testing.assert_allclose(operators.spectral_fractional_laplacian(grid, 0.3, grid.sine_mode(k)),
                               ev**0.3 * grid.sine_mode(k), atol=1e-10)
    assert np.dot(operators.spectral_fractional_laplacian(grid, 0.5, r), r) > 0
    back = operators.spectral_fractional_laplacian(
        grid, 0.5, operators.spectral_fractional_laplacian(grid, 0.5, r), inverse=True)
    np.testing.assert_allclose(back, r, atol=1e-12)
    with pytest.raises(ValueError):
        operators.spectral_fractional_laplacian(grid, 1.5, r)


def test_triple_validation(grid):
    with pytest.raises(ValueError):
        TripleSpec(grid, TripleKind.PME, 1.5)
    with pytest.raises(ValueError):
        TripleSpec(grid, TripleKind.PLAPLACE, 3.0, 0.5)
    with pytest.raises(ValueError):
        PorousMedium(3.0).check_triple(TripleSpec(grid, TripleKind.PLAPLACE, 3.0))
    with pytest.raises(ValueError):
        PLaplace(3.0).check_triple(TripleSpec(grid, TripleKind.PLAPLACE, 4.0))
    with pytest.raises(ValueError):
        PorousMedium(1.5)


def test_dual_pairing_matches_h_inner(grid):
    rng = np.random.default_rng(4)
    for tr in (TripleSpec(grid, "pme", 3.0), TripleSpec(grid, "plaplace", 3.0), TripleSpec(grid, "pme", 2.0, 0.7)):
        u, v = rng.normal(size=(2, grid.n_interior))
        assert tr.dual_pairing(u, v) == pytest.approx(tr.h_inner(u, v), rel=1e-10)


def test_pme_dual_norm_is_exact(grid):
    # V* norm of a = K w equals the L^{p'} norm of w (Hoelder is attained)
    tr = TripleSpec(grid, "pme", 3.0)
    w = np.random.default_rng(5).normal(size=grid.n_interior)
    a = tr.stiffness(w)
    v = np.sign(w) * np.abs(w) ** (tr.conjugate - 1.0)
    attained = tr.dual_pairing(a, v) / tr.v_norm(v)
    assert tr.dual_norm(a) == pytest.approx(attained, rel=1e-10)


def test_plaplace_dual_norm_dominates_pairings(grid):
    tr = TripleSpec(grid, "plaplace", 3.0)
    rng = np.random.default_rng(6)
    a = rng.normal(size=grid.n_interior)
    dn = tr.dual_norm(a)
    for _ in range(200):
        v = rng.normal(size=grid.n_interior)
        assert abs(tr.dual_pairing(a, v)) <= dn * tr.v_norm(v) * (1 + 1e-9)
    # the maximizer built from the optimal y attains it
    op = PLaplace(3.0)
    u = grid.sine_mode(2)
    au = op.apply(tr, u)
    assert tr.dual_norm(au) == pytest.approx(tr.v_norm(u) ** 2, rel=1e-8)


def test_psi_variants():
    psi = PowerPsi(2.0)
    np.testing.assert_allclose(psi(np.array([-2.0, 0.0, 3.0])), [-4.0, 0.0, 9.0])
    tab = TabulatedPsi(np.array([-1.0, 0.0, 1.0]), np.array([-2.0, 0.0, 2.0]), 2.0, 0.0, 2.0, 0.0)
    np.testing.assert_allclose(tab(np.array([-3.0, 0.5, 4.0])), [-6.0, 1.0, 8.0])
    with pytest.raises(ValueError):
        TabulatedPsi(np.array([0.0, 1.0]), np.array([1.0, 0.0]), 1, 0, 1, 0)


def test_fast_diffusion_flag():
    assert PorousMedium(2.0, psi=PowerPsi(0.5)).fast_diffusion
    assert not PorousMedium(3.0).fast_diffusion


@pytest.mark.parametrize("op, triple", [
    (PorousMedium(4.0), ("pme", 4.0, 1.0)),
    (PorousMedium(3.0), ("pme", 3.0, 1.0)),
    (PorousMedium(3.0, alpha_frac=0.5), ("pme", 3.0, 0.5)),
    (PLaplace(3.0), ("plaplace", 3.0, 1.0)),
    (PLaplace(3.0, zero_order=True), ("plaplace", 3.0, 1.0)),
    (Linear(1.5), ("plaplace", 2.0, 1.0)),
])
def test_structural_conditions_hold(op, triple):
    tr = TripleSpec(Grid1D(31), *triple)
    rep = operators.verify_structural_conditions(op, tr, trials=300, seed=2)
    assert rep.passed, {k: (c.worst_margin, c.violation is not None) for k, c in rep.conditions.items()}
    assert rep.n_samples == 300


def test_pure_power_constants():
    tr = TripleSpec(Grid1D(31), "pme", 4.0)
    c = PorousMedium(4.0).constants(tr)
    assert (c.delta, c.alpha, c.C, c.g_coercive, c.g_growth) == (1.0, 4.0, 1.0, 0.0, 0.0)
    rep = operators.verify_structural_conditions(PorousMedium(4.0), tr, trials=200, seed=0)
    assert rep.delta_hat == pytest.approx(1.0, rel=1e-9)


def test_verifier_reports_violation():
    # a decreasing table makes -A non-monotone; construct one bypassing validation
    tr = TripleSpec(Grid1D(15), "pme", 2.0)
    bad = TabulatedPsi(np.array([-1.0, 1.0]), np.array([-1.0, 1.0]), 1.0, 0.0, 1.0, 0.0)
    object.__setattr__(bad, "values", np.array([1.0, -1.0]))
    rep = operators.verify_structural_conditions(PorousMedium(2.0, psi=bad), tr, trials=50, seed=0)
    assert not rep.conditions["monotonicity"].passed
    assert rep.conditions["monotonicity"].violation is not None


def test_overstated_constant_is_caught():
    tr = TripleSpec(Grid1D(15), "pme", 3.0)
    psi = TabulatedPsi(np.array([-1.0, 1.0]), np.array([-1.0, 1.0]), c1=5.0, c2=0.0, c3=1.0, c4=0.0)
    rep = operators.verify_structural_conditions(PorousMedium(3.0, psi=psi), tr, trials=100, seed=0)
    assert not rep.conditions["coercivity"].passed


def test_hemicontinuity_detects_jump():
    tr = TripleSpec(Grid1D(15), "pme", 2.0)
    s = np.array([-1.0, -1e-9, 1e-9, 1.0])
    psi = TabulatedPsi(s, np.array([-2.0, -1.0, 1.0, 2.0]), 1.0, 0.0, 3.0, 0.0)
    rep = operators.verify_structural_conditions(PorousMedium(2.0, psi=psi), tr,
                                                 StateSampler(scale=0.5, log_range=0.0), trials=100, seed=0)
    assert not rep.conditions["hemicontinuity"].passed


def test_gap_zero_on_diagonal():
    tr = TripleSpec(Grid1D(15), "plaplace", 3.0)
    u = np.random.default_rng(8).normal(size=15)
    a = PLaplace(3.0).apply(tr, u)
    assert tr.dual_pairing(a - a, u - u) == 0.0


@pytest.mark.parametrize("op, triple", [
    (PorousMedium(3.0), ("pme", 3.0, 1.0)),
    (PorousMedium(3.0, alpha_frac=0.6), ("pme", 3.0, 0.6)),
    (PLaplace(4.0, zero_order=True), ("plaplace", 4.0, 1.0)),
])
def test_jacobian_matches_finite_difference(op, triple):
    tr = TripleSpec(Grid1D(12), *triple)
    rng = np.random.default_rng(9)
    u, d = rng.normal(size=(2, 12))
    eps = 1e-6
    fd = (op.apply(tr, u + eps * d) - op.apply(tr, u - eps * d)) / (2 * eps)
    np.testing.assert_allclose(op.jacobian(tr, u) @ d, fd, rtol=1e-6, atol=1e-6 * np.abs(fd).max())
    rhs = rng.normal(size=12)
    x = op.solve_shifted(tr, u, 0.3, rhs)
    np.testing.assert_allclose(x + 0.3 * op.jacobian(tr, u) @ x, rhs, rtol=1e-9, atol=1e-9)

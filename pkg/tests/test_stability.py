import dataclasses
import math

import numpy as np
import pytest

from stablesplit import ModelSpace, ScalarField
from stablesplit.field_calculus import HESSIAN_DEPTH, weighted_dirichlet, weighted_inner
from stablesplit.rigidity import default_region
from stablesplit.semilinear import Nonlinearity, NumericalFailure
from stablesplit.stability import (
    Positivity,
    apply_jf,
    dirichlet_supersolution,
    integral_gap_scale,
    integral_inequality_gap,
    min_eigenpair,
    picone_gap,
    plateau_cutoff,
    random_test_field,
    rigidity_gap,
    stability_form,
    stability_matrix,
    supersolution_defect,
)


def torus(n=16, L=2 * math.pi):
    return ModelSpace.flat_box([L, L], 2 * L / n, periodic=[True, True])


@pytest.fixture(scope="module")
def supersolution(cylinder_solution, cylinder_spectral, allen_cahn):
    return dirichlet_supersolution(cylinder_solution.u, allen_cahn, 9.0, w0=cylinder_spectral.eigenfield)


# ------------------------------------------------------------------ quadratic form
def test_zero_nonlinearity_gives_dirichlet_energy():
    s = ModelSpace.cylinder(2.0, 0.1, [1.0])
    rng = np.random.default_rng(0)
    u = ScalarField(s, rng.standard_normal(s.shape))
    for _ in range(10):
        h = random_test_field(s, rng, s.interior_mask(1))
        q = stability_form(u, Nonlinearity.zero(), h)
        assert q >= 0
        assert q == pytest.approx(weighted_dirichlet(h, h), rel=1e-13)


@pytest.mark.parametrize("c", [-0.5, 0.7])
def test_torus_fourier_oracle(c):
    s = torus(16)
    n, h = s.shape[0], s.spacing[0]
    rng = np.random.default_rng(1)
    v = rng.standard_normal(s.shape)
    k = np.arange(n)
    mu1 = 4 / h**2 * np.sin(np.pi * k / n) ** 2
    mu = mu1[:, None] + mu1[None, :]
    V = np.fft.fft2(v)
    oracle = h * h / v.size * np.sum((mu - c) * np.abs(V) ** 2)
    q = stability_form(ScalarField.constant(s, 0.0), Nonlinearity.linear(c), ScalarField(s, v))
    assert q == pytest.approx(oracle, rel=1e-12)


def test_translation_mode_has_small_form(cylinder_solution, allen_cahn):
    u = cylinder_solution.u
    s = u.space
    dy = np.gradient(u.values, s.spacing[0], axis=0)
    h = ScalarField(s, dy * plateau_cutoff(s, 8.0, 10.0).values)
    assert abs(stability_form(u, allen_cahn, h)) / weighted_inner(h, h) <= 1e-6


def test_compact_support_required():
    s = ModelSpace.cylinder(2.0, 0.1, [1.0])
    with pytest.raises(ValueError, match="not compactly supported"):
        stability_form(ScalarField.constant(s, 0.0), Nonlinearity.allen_cahn(), ScalarField.constant(s, 1.0))


def test_operator_symmetry(cylinder_solution, allen_cahn):
    u = cylinder_solution.u
    s = u.space
    rng = np.random.default_rng(2)
    for _ in range(5):
        a = random_test_field(s, rng, s.interior_mask(1))
        b = random_test_field(s, rng, s.interior_mask(1))
        x = weighted_inner(apply_jf(u, allen_cahn, a), b)
        y = weighted_inner(a, apply_jf(u, allen_cahn, b))
        assert x == pytest.approx(y, rel=1e-11)


# ------------------------------------------------------------------ eigenpair
def test_zero_nonlinearity_torus_kernel_is_constant():
    s = torus(16)
    rep = min_eigenpair(ScalarField.constant(s, 0.0), Nonlinearity.zero())
    assert abs(rep.lambda_min) <= 1e-10
    w = rep.eigenfield.values
    assert np.ptp(w) <= 1e-8 * w.max()
    assert rep.positivity is Positivity.STRICTLY_POSITIVE and rep.stable


@pytest.mark.parametrize("c", [-1.0, 0.3, 2.0])
def test_torus_constant_potential(c):
    s = torus(16)
    rep = min_eigenpair(ScalarField.constant(s, 0.0), Nonlinearity.linear(c))
    assert rep.lambda_min == pytest.approx(-c, abs=1e-9)
    assert rep.stable is (c <= rep.tol_stab)


def test_cylinder_ground_state(cylinder_solution, cylinder_spectral, cylinder):
    rep = cylinder_spectral
    assert -1e-3 <= rep.lambda_min <= 1e-3
    assert rep.positivity is Positivity.STRICTLY_POSITIVE
    assert rep.stable
    w = rep.eigenfield.values
    assert weighted_inner(rep.eigenfield, rep.eigenfield) == pytest.approx(1.0, rel=1e-12)
    # the ground state is the derivative of the profile up to a factor
    yp = 1 / (math.sqrt(2) * np.cosh(cylinder.mesh[0] / math.sqrt(2)) ** 2)
    corr = np.sum(w * yp * cylinder.node_measure) / math.sqrt(
        np.sum(w * w * cylinder.node_measure) * np.sum(yp * yp * cylinder.node_measure))
    assert corr >= 1 - 1e-6


def test_eigen_residual_invariant(cylinder_solution, cylinder_spectral, allen_cahn):
    rep = cylinder_spectral
    u = cylinder_solution.u
    r = apply_jf(u, allen_cahn, rep.eigenfield).values - rep.lambda_min * rep.eigenfield.values
    norm = math.sqrt(weighted_inner(ScalarField(u.space, r), ScalarField(u.space, r)))
    assert norm <= rep.tol * (abs(rep.lambda_min) + 1) * 1.0001


def test_rayleigh_bound():
    s = ModelSpace.cylinder(3.0, 0.1, [1.0])
    rng = np.random.default_rng(3)
    u = ScalarField(s, np.tanh(s.mesh[0]) + 0.1 * rng.standard_normal(s.shape))
    nl = Nonlinearity.allen_cahn()
    lam = min_eigenpair(u, nl).lambda_min
    for _ in range(500):
        h = random_test_field(s, rng, s.interior_mask(1), smooth=0)
        assert lam <= stability_form(u, nl, h) / weighted_inner(h, h) + 1e-12


def test_perron_off_diagonals_and_positivity():
    s = ModelSpace.warped_product(2.0, 0.1, [1.0], [0.2])
    rng = np.random.default_rng(4)
    u = ScalarField(s, rng.standard_normal(s.shape))
    K = stability_matrix(u, Nonlinearity.allen_cahn()).tocoo()
    off = K.data[K.row != K.col]
    assert off.max() <= 0
    rep = min_eigenpair(u, Nonlinearity.allen_cahn())
    assert rep.positivity is Positivity.STRICTLY_POSITIVE


def test_unstable_constant_zero():
    s = ModelSpace.cylinder(2.0, 0.1, [1.0])
    rep = min_eigenpair(ScalarField.constant(s, 0.0), Nonlinearity.allen_cahn())
    # g'(0) = 1 and the Neumann constants are admissible
    assert rep.lambda_min == pytest.approx(-1.0, abs=1e-9)
    assert not rep.stable


def test_stagnation_raises():
    s = ModelSpace.cylinder(2.0, 0.1, [1.0])
    u = ScalarField(s, np.random.default_rng(5).standard_normal(s.shape))
    with pytest.raises(NumericalFailure, match="residual history"):
        min_eigenpair(u, Nonlinearity.allen_cahn(), tol=1e-18)


# ------------------------------------------------------------------ picone
def test_picone_constant_ratio_on_torus():
    s = torus(16)
    u = ScalarField.constant(s, 0.0)
    w = ScalarField.constant(s, 0.5)
    r = picone_gap(u, Nonlinearity.zero(), w, ScalarField.constant(s, 1.5))
    assert r.lhs == 0.0
    assert abs(r.gap) <= 1e-12
    assert r.supersolution_defect == 0.0


def test_picone_equality_with_ground_state(cylinder_solution, cylinder_spectral, allen_cahn):
    u, w = cylinder_solution.u, cylinder_spectral.eigenfield
    s = u.space
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(200):
        h = random_test_field(s, rng, s.interior_mask(1))
        r = picone_gap(u, allen_cahn, w, h)
        worst = max(worst, abs(r.gap) / max(abs(r.lhs), abs(r.rhs)))
    assert worst <= 1e-8


def test_picone_supersolution_inequality(cylinder_solution, supersolution, allen_cahn):
    u = cylinder_solution.u
    s = u.space
    inside = np.abs(s.mesh[0]) < 9.0 - 3 * s.spacing[0]
    assert supersolution_defect(u, allen_cahn, supersolution, inside) <= 1e-8
    rng = np.random.default_rng(7)
    for _ in range(20):
        h = random_test_field(s, rng, inside)
        r = picone_gap(u, allen_cahn, supersolution, h)
        assert r.gap >= -1e-8 * max(abs(r.lhs), abs(r.rhs))


def test_picone_requires_positive_w():
    s = ModelSpace.cylinder(2.0, 0.1, [1.0])
    w = ScalarField(s, np.where(s.mesh[0] > 1.5, 0.0, 1.0))
    h = random_test_field(s, np.random.default_rng(0), s.interior_mask(1))
    with pytest.raises(ValueError, match="w not uniformly positive"):
        picone_gap(ScalarField.constant(s, 0.0), Nonlinearity.allen_cahn(), w, h)


# ------------------------------------------------------------------ second-order gaps
def test_integral_gap_constant_solution():
    s = ModelSpace.cylinder(2.0, 0.1, [1.0])
    h = random_test_field(s, np.random.default_rng(0), s.interior_mask(HESSIAN_DEPTH))
    gap = integral_inequality_gap(ScalarField.constant(s, 1.0), Nonlinearity.allen_cahn(), ScalarField.constant(s, 1.0), h)
    assert gap == 0.0


def test_integral_gap_equality_case(cylinder_solution, cylinder_spectral, allen_cahn):
    u, w = cylinder_solution.u, cylinder_spectral.eigenfield
    s = u.space
    for inner in (0.5, 2.0, 4.0):
        h = plateau_cutoff(s, inner, inner + 4.0)
        gap = integral_inequality_gap(u, allen_cahn, w, h)
        assert abs(gap) <= s.spacing[0] ** 2 * integral_gap_scale(u, h)


def test_integral_gap_supersolution(cylinder_solution, supersolution, allen_cahn):
    u = cylinder_solution.u
    s = u.space
    for inner in (0.5, 2.0, 4.0):
        h = plateau_cutoff(s, inner, inner + 4.0)
        gap = integral_inequality_gap(u, allen_cahn, supersolution, h)
        assert gap >= -1e-8 * integral_gap_scale(u, h)


def test_integral_gap_needs_hessian_support(cylinder_solution, cylinder_spectral, allen_cahn):
    s = cylinder_solution.u.space
    h = random_test_field(s, np.random.default_rng(0), s.interior_mask(1))
    with pytest.raises(ValueError, match="Hessian stencil"):
        integral_inequality_gap(cylinder_solution.u, allen_cahn, cylinder_spectral.eigenfield, h)


def test_rigidity_gap_constant_has_empty_ratio():
    s = ModelSpace.cylinder(2.0, 0.1, [1.0])
    u = ScalarField.constant(s, 1.0)
    h = plateau_cutoff(s, 0.5, 1.5)
    r = rigidity_gap(u, Nonlinearity.allen_cahn(), h)
    assert r.lhs == 0.0 and r.rhs == 0.0
    assert r.ratio_stats()["count"] == 0


def test_rigidity_widening_plateaus(cylinder_solution, cylinder_spectral, allen_cahn):
    u = cylinder_solution.u
    s = u.space
    lhs = []
    for inner in (1.0, 3.0, 6.0):
        r = rigidity_gap(u, allen_cahn, plateau_cutoff(s, inner, inner + 4.0), cylinder_spectral)
        assert r.lhs <= r.rhs
        lhs.append(abs(r.lhs))
    assert lhs[-1] <= 1e-3 * max(lhs[0], 1e-12) or lhs[-1] <= 1e-6
    ratio = np.ma.masked_array(r.ratio_field.data, r.ratio_field.mask | ~default_region(s))
    c = ratio.compressed()
    # the constancy is limited by the O(h^2) gap between |grad u| and the ground state
    assert c.std() / c.mean() <= 1e-4


def test_rigidity_negative_control():
    s = ModelSpace.cylinder(6.0, 0.05, [1.6])
    L = 1.6
    u = ScalarField.from_function(s, lambda t, th: np.tanh(t / math.sqrt(2)) + 0.3 * np.sin(2 * np.pi * th / L))
    nl = Nonlinearity.allen_cahn()
    rep = min_eigenpair(u, nl)
    r = rigidity_gap(u, nl, plateau_cutoff(s, 2.0, 4.0), rep)
    assert r.ratio_stats()["rel_std"] > 1e-2


def test_rigidity_needs_positive_ground_state(cylinder_solution, cylinder_spectral, allen_cahn):
    bad = dataclasses.replace(cylinder_spectral, positivity=Positivity.SIGN_CHANGING)
    h = plateau_cutoff(cylinder_solution.u.space, 1.0, 2.0)
    with pytest.raises(ValueError, match="stability equivalence unavailable"):
        rigidity_gap(cylinder_solution.u, allen_cahn, h, bad)

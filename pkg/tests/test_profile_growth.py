import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablesplit import ModelSpace, ScalarField
from stablesplit.profile_growth import (
    ProfileSolution,
    ball_dirichlet_energy,
    chain_samples,
    cutoff_energy,
    growth_diagnostic,
    log_cutoff,
    log_cutoff_gradientsq,
    make_profile,
    ode_residual,
    solve_profile,
)
from stablesplit.rigidity import fiber_average
from stablesplit.semilinear import Nonlinearity, NumericalFailure

SQ2 = math.sqrt(2.0)
AC = Nonlinearity.allen_cahn()


# ------------------------------------------------------------------ residual
def test_affine_profile_zero_residual():
    t = np.linspace(-2, 2, 41)
    p = make_profile(t, 0.5 * t + 1, 0.0, Nonlinearity.zero())
    assert ode_residual(p, Nonlinearity.zero()) <= 1e-12
    assert p.monotone and p.nondecreasing


def test_tanh_residual_second_order():
    errs = []
    for h in (0.02, 0.01):
        t = np.linspace(-8, 8, int(round(16 / h)) + 1)
        errs.append(ode_residual(make_profile(t, np.tanh(t / SQ2), 0.0, AC), AC))
    assert errs[1] <= 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


@pytest.mark.parametrize("k, mu", [(0.3, 1.0), (-0.5, 2.0)])
def test_exponential_characteristic_root(k, mu):
    r = 0.5 * (k + math.sqrt(k * k + 4 * mu))
    nl = Nonlinearity.linear(-mu)
    errs = []
    for h in (0.01, 0.005):
        t = np.linspace(-1, 1, int(round(2 / h)) + 1)
        y = np.exp(r * t)
        errs.append(ode_residual(make_profile(t, y, k, nl), nl))
    assert errs[1] <= 1e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_residual_needs_three_nodes():
    with pytest.raises(ValueError, match="three nodes"):
        make_profile(np.array([0.0, 1.0]), np.array([0.0, 1.0]), 0.0, AC)


# ------------------------------------------------------------------ solve
def test_allen_cahn_profile_matches_tanh():
    T = 12.0
    d = 1 - math.tanh(T / SQ2)
    p = solve_profile(AC, 0.0, (-1 + d, 1 - d), T, 1e-3)
    assert p.converged and p.ode_residual_max <= 1e-8
    assert p.monotone and p.yp.min() > 0
    e = p.y - np.tanh(p.t / SQ2)
    # the even part of the error is a front translation; its Dirichlet eigenvalue is ~4e-12,
    # so rounding in the difference quotient decides it
    odd = 0.5 * (e - e[::-1])
    assert np.abs(odd).max() <= 1e-7
    assert np.abs(e).max() <= 2e-6


def test_allen_cahn_profile_error_second_order():
    T = 12.0
    d = 1 - math.tanh(T / SQ2)
    errs = []
    for h in (4e-3, 2e-3):
        p = solve_profile(AC, 0.0, (-1 + d, 1 - d), T, h)
        e = p.y - np.tanh(p.t / SQ2)
        errs.append(np.abs(0.5 * (e - e[::-1])).max())
    assert errs[1] <= 1e-6
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_harmonic_profile_is_affine():
    T = 2.0
    p = solve_profile(Nonlinearity.zero(), 0.0, (0.0, 1.0), T, 0.01)
    assert np.abs(p.y - (p.t + T) / (2 * T)).max() <= 1e-13


def test_drifted_profile_agrees_with_pde(drifted_solution):
    p = solve_profile(AC, 0.3, (-1.0, 1.0), 12.0, 1e-3)
    assert p.nondecreasing
    y_pde = fiber_average(drifted_solution.u)
    assert np.abs(p.y[::20] - y_pde).max() <= 1e-4


def test_translation_family():
    # boundary data of a shifted tanh returns the shifted profile, up to the O(h^2) window effect
    T, shift = 3.0, 0.5
    diffs = []
    for h in (0.02, 0.01):
        base = solve_profile(AC, 0.0, (math.tanh(-T / SQ2), math.tanh(T / SQ2)), T, h)
        moved = solve_profile(AC, 0.0, (math.tanh((-T - shift) / SQ2), math.tanh((T - shift) / SQ2)), T, h)
        m = int(round(shift / h))
        diffs.append(np.abs(moved.y[m:] - base.y[:-m]).max())
    assert diffs[1] <= 1e-5
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=0.1)


def test_monotone_flag_soundness():
    t = np.linspace(-1, 1, 21)
    p = make_profile(t, np.cos(t), 0.0, AC)
    assert not p.monotone and not p.nondecreasing
    assert isinstance(p, ProfileSolution)


def test_profile_non_convergence_reports_history():
    with pytest.raises(NumericalFailure, match="residual history"):
        solve_profile(AC, 0.0, (-1.0, 1.0), 4.0, 0.01, tol=1e-30, max_iter=2)


@pytest.mark.parametrize("kwargs, message", [
    (dict(T=-1.0, h=0.1), "positive"),
    (dict(T=1.0, h=0.3), "integer"),
    (dict(T=1.0, h=0.1, boundary=(float("nan"), 1.0)), "finite"),
])
def test_profile_input_validation(kwargs, message):
    args = dict(boundary=(-1.0, 1.0))
    args.update(kwargs)
    with pytest.raises(ValueError, match=message):
        solve_profile(AC, 0.0, **args)


# ------------------------------------------------------------------ cutoff
@pytest.mark.parametrize("R", [4.0, 100.0])
def test_log_cutoff_knots(R):
    assert log_cutoff(R, math.sqrt(R)) == pytest.approx(1.0, abs=1e-15)
    assert log_cutoff(R, R) == 0.0
    assert log_cutoff(R, R**0.75) == pytest.approx(0.5, abs=1e-14)
    assert log_cutoff_gradientsq(R, R**0.75) == pytest.approx(4 / (R**1.5 * math.log(R) ** 2), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(R=st.floats(1.5, 1e4), s=st.floats(0.05, 0.95))
def test_log_cutoff_gradient_matches_difference(R, s):
    r = R ** (0.5 + 0.5 * s)
    d = 1e-4 * r
    fd = (log_cutoff(R, r + d) - log_cutoff(R, r - d)) / (2 * d)
    assert fd**2 == pytest.approx(log_cutoff_gradientsq(R, r), rel=1e-6)


def test_log_cutoff_rejects_small_R():
    with pytest.raises(ValueError):
        log_cutoff(1.0, 0.5)


def test_cutoff_energy_tanh_cylinder(cylinder_solution):
    u = cylinder_solution.u
    vals = [cutoff_energy(u, R) for R in (2.0, 4.0, 8.0, 11.0)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    total = ball_dirichlet_energy(u, 11.9)
    # bounded energy: the annulus term is at most 4/(R log^2 R) times the total, up to the inner radius factor
    for R, v in zip((2.0, 4.0, 8.0, 11.0), vals):
        assert v <= 4 * total / (R * math.log(R) ** 2)


def test_cutoff_energy_linear_field_marginal():
    s = ModelSpace.flat_box([34.0, 34.0], 0.1)
    u = ScalarField.from_function(s, lambda x, y: x)
    for R in (8.0, 32.0):
        assert cutoff_energy(u, R) == pytest.approx(4 * math.pi / math.log(R), rel=0.05)


def test_cutoff_energy_negative_control():
    s = ModelSpace.flat_box([34.0, 34.0], 0.1)
    u = ScalarField.from_function(s, lambda x, y: 0.5 * (x**2 + y**2))
    vals = [cutoff_energy(u, R) for R in (4.0, 8.0, 16.0, 32.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


# ------------------------------------------------------------------ growth
def test_growth_constant_flagged_small_o():
    g = growth_diagnostic({r: 3.0 for r in (2, 3, 4, 6, 8, 12, 16)})
    assert g.small_o_flag
    assert abs(g.p) < 1e-8 and abs(g.q) < 1e-8


def test_growth_critical_rate_not_small_o():
    R = np.geomspace(2, 64, 10)
    g = growth_diagnostic({r: r**2 * math.log(r) for r in R})
    assert not g.small_o_flag
    assert g.p == pytest.approx(2.0, abs=0.05) and g.q == pytest.approx(1.0, abs=0.05)
    assert g.fit_residual < 1e-10


def test_growth_cylinder_chain(cylinder_solution):
    u = cylinder_solution.u
    R = np.geomspace(1.5, 8.4, 8)
    Q = {r: ball_dirichlet_energy(u, r) for r in R}
    g = growth_diagnostic(Q, chain_samples(u, R))
    assert g.small_o_flag
    assert g.chain["all_hold"]
    assert np.all(np.diff(g.gamma) < 0)


@pytest.mark.parametrize("samples, message", [
    ({2: 1.0, 4: 1.0, 8: 1.0}, "six radii"),
    ({2.0 + 0.1 * i: 1.0 for i in range(8)}, "two doublings"),
    ({r: 1.0 for r in (0.5, 2, 4, 8, 16, 32)}, "exceed 1"),
])
def test_growth_input_validation(samples, message):
    with pytest.raises(ValueError, match=message):
        growth_diagnostic(samples)

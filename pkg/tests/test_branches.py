"""
Tests for branches, backgrounds and PDE / linearized residuals
"""
import math

import pytest
from hypothesis import given, settings, strategies as st

from src.branches import (BackgroundSolution, Branch1D, BranchND, Residual, fd_pde_residual, linearized_residual,
                          pde_residual, residual_from_terms, translation_symmetries)
from src.errors import DomainViolation, ModelValidationError
from src.expressions import evaluate, parse


def test_residual_scale_and_relative():
    r = residual_from_terms([1e6, -1e6 + 1e-4])
    assert r.scale == pytest.approx(1e6)
    assert r.passes(1e-9)
    assert not Residual(0.5, 0.1).passes(1e-3)
    assert Residual(2.0, 4.0).relative == pytest.approx(0.5)


@settings(max_examples=100, deadline=None)
@given(t=st.floats(-3.0, -0.01), x=st.floats(-5.0, 5.0))
def test_toy_seed_solves_branch(toy_branch, toy_seed, t, x):
    assert pde_residual(toy_branch, toy_seed, (t, x)).passes(1e-12)


def test_residual_fails_for_non_solution(toy_branch):
    r = pde_residual(toy_branch, "x", {"t": -0.5, "x": 1.0})
    assert float(r) == pytest.approx(-1.0)
    assert not r.passes(1e-9)


def test_residual_outside_domain(toy_branch, toy_seed):
    with pytest.raises(DomainViolation):
        pde_residual(toy_branch, toy_seed, {"t": 0.5, "x": 1.0})


def test_branch_rejects_foreign_variables():
    with pytest.raises(ModelValidationError) as info:
        Branch1D.from_text("u*u_xx")
    assert info.value.check == "branch-variables"


def test_branch_constants_are_substituted():
    br = Branch1D.from_text("a*u", constants={"a": 2.0})
    assert evaluate(br.F, {"u": 1.5}) == pytest.approx(3.0)
    assert evaluate(br.flux_ux, {"u": 1.5, "u_x": 7.0}) == pytest.approx(3.0)


def test_for_branch_checks_seed():
    br = Branch1D.from_text("u*u_x")
    BackgroundSolution.for_branch(br, "x/sqrt(-2*t)", [(-0.5, 1.0)])
    with pytest.raises(ModelValidationError) as info:
        BackgroundSolution.for_branch(br, "x*t", [(-0.5, 1.0)])
    assert info.value.check == "seed-residual"


def test_background_jets(toy_seed):
    point = {"t": -0.5, "x": 2.0}
    values = toy_seed.jet_values(point, ("u", "u_t", "u_x", "u_xt"))
    assert values["u"] == pytest.approx(2.0)
    assert values["u_x"] == pytest.approx(1.0)
    assert values["u_t"] == pytest.approx(2.0)
    assert values["u_xt"] == pytest.approx(1.0)


def test_to_implicit_agrees(toy_branch, toy_seed):
    implicit = toy_branch.to_implicit()
    seed = BackgroundSolution(parse("x1/sqrt(-2*x0)"), conv=implicit.conv)
    assert pde_residual(implicit, seed, (-0.3, 1.7)).passes(1e-12)


def test_nd_eikonal_seed(gam3_entry):
    seed = gam3_entry.seed(0).background
    for p in [(1.0, 2.0, 3.0), (0.5, -1.0, 0.25)]:
        assert pde_residual(gam3_entry.branch, seed, p).passes(1e-12)


def test_fd_pde_residual(toy_branch):
    def u(p):
        return p["x"] / math.sqrt(-2.0 * p["t"])

    assert fd_pde_residual(toy_branch, u, {"t": -0.5, "x": 1.0}).passes(1e-8)


@pytest.mark.parametrize("sigma", ["u_x", "u_t", "(u_x/u_t)^3*u_t", "sin(u_x/u_t)*u_t"])
def test_toy_symmetries(toy_branch, toy_seed, sigma):
    for p in [(-0.5, 1.0), (-0.2, 2.0), (-1.3, -0.7)]:
        assert linearized_residual(toy_branch, toy_seed, sigma, p).passes(1e-10)


def test_non_symmetry_is_rejected(toy_branch, toy_seed):
    assert not linearized_residual(toy_branch, toy_seed, "u", (-0.5, 1.0)).passes(1e-6)


def test_translation_symmetries_nd(gam3_entry):
    seed = gam3_entry.seed(0).background
    for sigma in translation_symmetries(gam3_entry.branch):
        assert linearized_residual(gam3_entry.branch, seed, sigma, (1.0, 2.0, 3.0)).passes(1e-12)


def test_branch_nd_gradient():
    br = BranchND.from_text("u_x0^2 + u_x1^2 - u^2", n=1)
    assert len(br.F_grad) == 2
    assert evaluate(br.F_u, {"u": 2.0}) == pytest.approx(-4.0)

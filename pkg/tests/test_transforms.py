"""
Tests for primed-coordinate solves, generated solutions, Jacobians and degeneracy
"""
import math

import numpy as np
import pytest

from src.branches import fd_pde_residual, linearized_residual
from src.catalog import get
from src.errors import (CausticWarning, DegenerateSeed, GridSpecError, ModelValidationError, SamplesOutOfDomain,
                        U0Zero)
from src.numeric import GridSpec
from src.transforms import (PrimedCoords, TransformSpec, Type2Spec, characteristic_field,
                            derivative_transport_check, detect_degenerate_seed, evaluate_pbs, evaluate_type2_pbs,
                            fd_jacobian_report, fd_transform_residual, flow_point, jacobian_delta, lift_point,
                            require_nondegenerate, sample_transform, search_alternates, solve_primed_coords,
                            transform_generator)

CLOSED_GRID = "t:-0.2:-0.05:20,x:2:3:20"


@pytest.fixture(scope="module")
def toy_square(toy_seed):
    return TransformSpec.create(toy_seed, "eta^2")


def _closed_u(p):
    return math.sqrt(-2.0 - p["x"] ** 2 / (2.0 * p["t"]))


def test_closed_form_points(toy_square):
    primed = solve_primed_coords(toy_square, (-0.1, 1.0))
    assert primed.primed == pytest.approx([-0.06, 0.6], abs=1e-12)
    assert evaluate_pbs(toy_square, (-0.1, 1.0)) == pytest.approx(math.sqrt(3.0), abs=1e-12)
    assert evaluate_pbs(toy_square, (-0.2, 2.5)) == pytest.approx(math.sqrt(13.625), abs=1e-12)


def test_closed_form_grid(toy_square):
    for p in GridSpec.parse(CLOSED_GRID).points():
        primed = solve_primed_coords(toy_square, p)
        t, x = p["t"], p["x"]
        assert primed.primed[1] == pytest.approx(x + 4 * t / x, abs=1e-9)
        assert primed.primed[0] == pytest.approx(t * (4 * t + x * x) / (x * x), abs=1e-9)
        assert toy_square.seed_value(primed.primed) == pytest.approx(_closed_u(p), abs=1e-9)


def test_zero_g_returns_seed(toy_seed):
    ts = TransformSpec.create(toy_seed, "0")
    for p in [(-0.5, 1.0), (-0.2, 2.0)]:
        assert evaluate_pbs(ts, p) == pytest.approx(toy_seed.value(p), abs=1e-14)


def test_zero_epsilon_is_identity(toy_seed):
    ts = TransformSpec.create(toy_seed, "eta^2", epsilon=0.0)
    primed = solve_primed_coords(ts, (-0.1, 1.0))
    assert primed.primed == pytest.approx([-0.1, 1.0], abs=1e-14)


def test_half_epsilon_still_solves(toy_branch, toy_seed):
    ts = TransformSpec.create(toy_seed, "eta^2", epsilon=0.5)
    primed = solve_primed_coords(ts, (-0.1, 1.0))
    assert np.max(np.abs(ts.residual(primed.primed, np.array([-0.1, 1.0]), 1.0))) <= 1e-12
    assert fd_transform_residual(ts, toy_branch, (-0.1, 1.0)).passes(1e-6)


def test_g_variables_are_checked(toy_seed):
    with pytest.raises(ModelValidationError):
        TransformSpec.create(toy_seed, "eta + x")


PDE_CASES = [
    ("toy", "t:-0.2:-0.05:10,x:2:3:10", "eta^2"),
    ("toy", "t:-0.2:-0.05:10,x:2:3:10", "eta^3"),
    ("toy", "t:-0.2:-0.05:10,x:2:3:10", "sin(eta)"),
    ("hopf", "t:0:0.5:10,x:2:3:10", "eta^2"),
    ("hopf", "t:0:0.5:10,x:2:3:10", "eta^3"),
    ("hopf", "t:0:0.5:10,x:2:3:10", "sin(eta)"),
    ("ghopf", "t:-0.3:-0.1:10,x:2:3:10", "eta^2"),
    ("ghopf", "t:-0.3:-0.1:10,x:2:3:10", "eta^3"),
    ("ghopf", "t:-0.3:-0.1:10,x:2:3:10", "sin(eta)"),
    ("gam3", "x0:1:2:4,x1:0.2:0.5:4,x2:0.3:0.7:4", "eta1^2"),
    ("gam3", "x0:1:2:4,x1:0.2:0.5:4,x2:0.3:0.7:4", "eta1^3 + eta2^2"),
    ("gam3", "x0:1:2:4,x1:0.2:0.5:4,x2:0.3:0.7:4", "sin(eta1)"),
]


@pytest.mark.parametrize("model, grid, g", PDE_CASES)
def test_generated_solutions_solve_the_pde(model, grid, g):
    entry = get(model)
    ts = entry.transform(g)
    field = sample_transform(ts, GridSpec.parse(grid), entry.branch)
    assert field.valid_count >= 0.9 * field.spec.size
    residuals = field.channels["residual"][field.mask]
    assert np.max(residuals) <= 1e-6
    assert np.all(field.channels["delta"][field.mask] != 0.0)


def test_grid_columns(toy_square, toy_branch):
    field = sample_transform(toy_square, GridSpec.parse("t:-0.2:-0.05:3,x:2:3:3"), toy_branch)
    assert list(field.to_frame().columns) == ["t", "x", "u", "tprime", "xprime", "delta", "residual", "reason"]


def test_grid_axes_must_match(toy_square):
    with pytest.raises(GridSpecError):
        sample_transform(toy_square, GridSpec.parse("t:-0.2:-0.05:3,y:2:3:3"))


@pytest.mark.parametrize("model, grid, g", PDE_CASES)
def test_derivative_transport(model, grid, g):
    ts = get(model).transform(g)
    for p in GridSpec.parse(grid.replace(":10", ":3").replace(":4", ":3")).points():
        gaps = derivative_transport_check(ts, p)
        assert max(gaps.values()) <= 1e-6


def test_derivative_transport_where_the_gradient_is_large(toy_seed):
    # U_t is about 95 here; plain central differences leave about 2e-6
    ts = TransformSpec.create(toy_seed, "eta^3")
    for p in [(-0.05, 2.0), (-0.05, 2.5), (-0.05, 3.0)]:
        assert abs(ts.seed_gradient(solve_primed_coords(ts, p).primed)[0]) > 50.0
        assert max(derivative_transport_check(ts, p).values()) <= 1e-6


def test_derivative_transport_zero_g(toy_seed):
    ts = TransformSpec.create(toy_seed, "0")
    gaps = derivative_transport_check(ts, (-2.0, 1.0))
    assert max(gaps.values()) <= 1e-10


def test_closed_jacobian_matches_differences(toy_square):
    for p in GridSpec.parse(CLOSED_GRID).points():
        closed = jacobian_delta(toy_square, p)
        fd = fd_jacobian_report(toy_square, p)
        assert not closed.caustic
        assert closed.Delta != 0.0
        assert closed.Delta == pytest.approx(fd.Delta, rel=1e-6)
        assert closed.partials == pytest.approx(fd.partials, abs=1e-6)


def test_caustic_is_reported(toy_seed):
    ts = TransformSpec.create(toy_seed, "-2*eta^2")
    q = np.array([-0.5, 2.0])
    lifted = lift_point(ts, q)
    assert lifted == pytest.approx({"t": 0.0, "x": 0.0}, abs=1e-12)
    primed = PrimedCoords(point=lifted, primed=q, eta=ts.eta_at(q), iterations=0, residual=0.0,
                          coordinates=("t", "x"))
    with pytest.warns(CausticWarning):
        report = jacobian_delta(ts, lifted, primed=primed)
    assert report.caustic
    assert abs(report.delta) <= 1e-12
    assert abs(report.Delta) >= 1e10


def test_jacobian_delta_is_one_dimensional(gam3_entry):
    ts = gam3_entry.transform("eta1^2")
    with pytest.raises(ValueError):
        jacobian_delta(ts, (1.5, 0.3, 0.5))


def test_lift_and_solve_are_inverse(toy_square):
    lifted = lift_point(toy_square, (-0.06, 0.6))
    assert lifted == pytest.approx({"t": -0.1, "x": 1.0}, abs=1e-12)
    assert solve_primed_coords(toy_square, lifted).primed == pytest.approx([-0.06, 0.6], abs=1e-10)


def test_flow_matches_lift(toy_square):
    flowed = flow_point(toy_square, (-0.06, 0.6))
    lifted = lift_point(toy_square, (-0.06, 0.6))
    assert flowed["t"] == pytest.approx(lifted["t"], abs=1e-9)
    assert flowed["x"] == pytest.approx(lifted["x"], abs=1e-9)
    assert flowed["u"] == pytest.approx(toy_square.seed_value([-0.06, 0.6]), abs=1e-12)


def test_characteristic_field(toy_square):
    assert characteristic_field(toy_square, (-0.06, 0.6)) == pytest.approx([-0.04, 0.4], abs=1e-14)


def test_generator_is_a_symmetry(toy_branch, toy_seed, toy_square):
    sigma = transform_generator(toy_square)
    for p in [(-0.5, 1.0), (-0.2, 2.0)]:
        assert linearized_residual(toy_branch, toy_seed, sigma, p).passes(1e-10)


def test_generator_nd(gam3_entry):
    ts = gam3_entry.transform("eta1*eta2")
    sigma = transform_generator(ts)
    seed = gam3_entry.seed(0).background
    assert linearized_residual(gam3_entry.branch, seed, sigma, (1.5, 0.5, 0.3)).passes(1e-10)


def test_alternate_roots_are_distinct(toy_square):
    primed = solve_primed_coords(toy_square, (-0.1, 1.0))
    for root in search_alternates(toy_square, primed):
        assert np.max(np.abs(root - primed.primed)) > 1e-6
        assert np.max(np.abs(toy_square.residual(root, np.array([-0.1, 1.0])))) <= 1e-10


def test_u0_zero(toy_square):
    with pytest.raises(U0Zero):
        toy_square.eta_at([-0.5, 0.0])


def test_degenerate_seed_detection(toy_entry):
    travelling = toy_entry.seed(1).background
    assert detect_degenerate_seed(travelling, 1, toy_entry.seed(1).points)
    with pytest.raises(DegenerateSeed) as info:
        require_nondegenerate(travelling, toy_entry.seed(1).points)
    assert "U_x/U_t must not be constant" in str(info.value)
    assert info.value.exit_code == 1


@pytest.mark.parametrize("model", ["toy", "hopf", "ghopf", "gam3"])
def test_catalog_seeds_pass_rank_test(model):
    entry = get(model)
    seed = entry.seed(0)
    assert not detect_degenerate_seed(seed.background, entry.n, seed.points)


def test_plane_wave_is_degenerate(gam3_entry):
    seed = gam3_entry.seed(1)
    assert detect_degenerate_seed(seed.background, 2, seed.points)


def test_degeneracy_needs_in_domain_samples(toy_seed):
    with pytest.raises(SamplesOutOfDomain):
        detect_degenerate_seed(toy_seed, 1, [(0.5, 1.0), (1.0, 2.0)])


@pytest.fixture(scope="module")
def type2():
    return Type2Spec("sin(y)", 0.3)


def test_type2_family_solves_toy(toy_branch, type2):
    points = list(GridSpec.parse("x:0.3:0.45:10,t:0.05:0.15:5").points())
    assert len(points) == 50
    for p in points:
        assert fd_pde_residual(toy_branch, lambda q: evaluate_type2_pbs(type2, q), p).passes(1e-6)


def test_type2_zero_constant_is_seed():
    t2 = Type2Spec("sin(y)", 0.0)
    for x, t in [(0.3, 0.1), (1.0, 0.5), (2.0, -0.5)]:
        assert evaluate_type2_pbs(t2, {"x": x, "t": t}) == pytest.approx(math.sqrt(2 * (x + t)), abs=1e-10)


def test_type2_rejects_foreign_names():
    with pytest.raises(ModelValidationError):
        Type2Spec("sin(y) + x", 0.3)

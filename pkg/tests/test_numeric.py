"""
Tests for Newton, quadrature, finite differences and grid sampling
"""
import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import assume, given, settings, strategies as st

from src.config import Settings
from src.errors import (BracketFailure, ConfigurationError, ConvergenceFailure, DepthExhausted, DomainExit,
                        DomainViolation, GridSpecError, SingularJacobian)
from src.numeric import (GridSpec, NewtonConfig, QuadratureConfig, central_fd, fd_jacobian, integrate,
                         newton_solve, partial_fd, richardson_fd, sample_grid)


def test_newton_scalar_sqrt2():
    result = newton_solve(lambda z: z ** 2 - 2.0, 1.0, NewtonConfig())
    assert result.scalar == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert result.iterations < 10


@settings(max_examples=40, deadline=None)
@given(r1=st.floats(-5, 5), r2=st.floats(-5, 5))
def test_newton_finds_quadratic_root_near_start(r1, r2):
    assume(abs(r1 - r2) > 0.5)
    result = newton_solve(lambda z: (z - r1) * (z - r2), r1 + 0.05, NewtonConfig())
    assert result.scalar == pytest.approx(r1, abs=1e-10)


def test_newton_system_with_exact_jacobian():
    def residual(z):
        return np.array([z[0] ** 2 + z[1] ** 2 - 4.0, z[0] - z[1]])

    def jacobian(z):
        return np.array([[2 * z[0], 2 * z[1]], [1.0, -1.0]])

    result = newton_solve(residual, [1.0, 1.5], NewtonConfig(), jacobian)
    assert result.x == pytest.approx([math.sqrt(2.0)] * 2, abs=1e-12)


def test_newton_exp_never_converges():
    with pytest.raises((ConvergenceFailure, SingularJacobian)):
        newton_solve(lambda z: np.exp(z), 0.0, NewtonConfig(max_iterations=30))


def test_newton_singular_jacobian():
    with pytest.raises(SingularJacobian):
        newton_solve(lambda z: z ** 2 + 1.0, 0.0, NewtonConfig(), lambda z: np.array([[2 * z[0]]]))


def test_newton_bracket_fallback():
    cfg = NewtonConfig(max_iterations=3).with_bracket((0.5, 3.0))
    result = newton_solve(lambda z: np.arctan(z - 2.0) * 10.0, -40.0, cfg)
    assert result.used_bracket
    assert result.scalar == pytest.approx(2.0, abs=1e-12)


def test_bracket_without_sign_change():
    cfg = NewtonConfig(max_iterations=2).with_bracket((-1.0, 1.0))
    with pytest.raises(BracketFailure):
        newton_solve(lambda z: z ** 2 + 1.0, 0.3, cfg)


def test_newton_config_validation():
    with pytest.raises(ConfigurationError):
        NewtonConfig(abs_tolerance=0.0)
    with pytest.raises(ConfigurationError):
        NewtonConfig(max_iterations=0)
    with pytest.raises(ConfigurationError):
        NewtonConfig(bracket=(1.0, 0.0))


def test_fd_jacobian_matches_analytic():
    J = fd_jacobian(lambda z: np.array([z[0] * z[1], np.sin(z[0])]), np.array([0.3, 2.0]))
    assert J == pytest.approx(np.array([[2.0, 0.3], [math.cos(0.3), 0.0]]), abs=1e-7)


def test_integrate_polynomial_and_reversed_limits():
    assert integrate(lambda s: s ** 2, 0.0, 1.0) == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert integrate(lambda s: s ** 2, 1.0, 0.0) == pytest.approx(-1.0 / 3.0, rel=1e-12)
    assert integrate(lambda s: 1.0, 2.0, 2.0) == 0.0


def test_integrate_subinterval_limit():
    cfg = QuadratureConfig(rel_tolerance=1e-14, max_subintervals=3)
    with pytest.raises(DepthExhausted) as info:
        integrate(lambda s: math.sin(1.0 / s) / s, 1e-9, 1.0, cfg)
    lo, hi = info.value.interval
    assert 1e-9 <= lo < hi <= 1.0


def test_quadrature_config_validation():
    with pytest.raises(ConfigurationError):
        QuadratureConfig(rel_tolerance=-1.0)
    with pytest.raises(ConfigurationError):
        QuadratureConfig(max_subintervals=0)


def test_subinterval_limit_from_environment(monkeypatch):
    monkeypatch.setenv("PBS_QUAD_MAX_SUBINTERVALS", "7")
    assert Settings.from_env().quad_max_subintervals == 7


def test_central_fd_orders():
    assert central_fd(math.sin, 0.4, 1, 1e-5) == pytest.approx(math.cos(0.4), abs=1e-9)
    assert central_fd(math.sin, 0.4, 2, 1e-4) == pytest.approx(-math.sin(0.4), abs=1e-6)
    with pytest.raises(ValueError):
        central_fd(math.sin, 0.4, 3)


def test_central_fd_outside_domain():
    with pytest.raises(DomainExit):
        central_fd(math.sqrt, 0.0, 1, 1e-5)


def test_partial_fd_named_coordinate():
    value = partial_fd(lambda p: p["t"] * p["x"] ** 2, {"t": 2.0, "x": 3.0}, "x", h=1e-5)
    assert value == pytest.approx(12.0, abs=1e-8)


def test_grid_spec_parse_and_order():
    spec = GridSpec.parse("t:-0.2:-0.05:4,x:2:3:3")
    assert spec.names == ("t", "x")
    assert spec.shape == (4, 3)
    points = list(spec.points())
    assert len(points) == 12
    assert points[0] == {"t": -0.2, "x": 2.0}
    assert points[1] == {"t": -0.2, "x": 2.5}
    assert GridSpec.parse(str(spec)) == spec


@pytest.mark.parametrize("text", ["t:0:1", "t:a:1:3", "t:0:1:0", "t:0:1:2,t:0:1:2", ":0:1:2"])
def test_grid_spec_errors(text):
    with pytest.raises(GridSpecError):
        GridSpec.parse(text)


def _masked_sqrt(p):
    if p["x"] < 0:
        raise DomainViolation("sqrt(x)", "negative")
    return math.sqrt(p["x"])


def test_sample_grid_masks_failures():
    field = sample_grid(_masked_sqrt, GridSpec.parse("x:-1:1:5"))
    assert field.mask.tolist() == [False, False, True, True, True]
    assert field.reasons[0] == "DomainViolation"
    assert field.valid_count == 3
    assert field.values[4] == pytest.approx(1.0)


def test_sample_grid_workers_are_deterministic():
    spec = GridSpec.parse("x:-1:2:7,y:0:1:3")

    def f(p):
        return _masked_sqrt(p) * (1 + p["y"])

    serial = sample_grid(f, spec, workers=1)
    threaded = sample_grid(f, spec, workers=4)
    assert np.array_equal(serial.mask, threaded.mask)
    assert np.array_equal(np.nan_to_num(serial.values), np.nan_to_num(threaded.values))


def test_grid_field_exports(tmp_path):
    field = sample_grid(lambda p: {"value": _masked_sqrt(p), "twice": 2 * _masked_sqrt(p)},
                        GridSpec.parse("x:-1:1:3"))
    frame = field.to_frame()
    assert list(frame.columns) == ["x", "value", "twice", "reason"]
    path = field.to_csv(tmp_path / "out" / "grid.csv")
    text = path.read_text()
    assert text.splitlines()[0] == "x,value,twice,reason"
    assert "\r" not in text
    back = pd.read_csv(path)
    assert back["value"].iloc[2] == 1.0
    assert math.isnan(back["value"].iloc[0])
    rows = field.to_dict()["rows"]
    assert rows[0]["value"] is None
    assert rows[0]["reason"] == "DomainViolation"


def test_richardson_removes_leading_error():
    exact = math.exp(0.5)
    assert abs(central_fd(math.exp, 0.5, 1, 1e-2) - exact) > 1e-6
    assert richardson_fd(math.exp, 0.5, 1, 1e-2) == pytest.approx(exact, abs=1e-8)


def _inverse_sqrt(p):
    return p["x"] ** -0.5


def test_partial_fd_extrapolated():
    f = _inverse_sqrt
    exact = -0.5 * 0.1 ** -1.5
    assert partial_fd(f, {"x": 0.1}, "x", h=1e-3, extrapolate=True) == pytest.approx(exact, abs=1e-6)
    assert abs(partial_fd(f, {"x": 0.1}, "x", h=1e-3) - exact) > 1e-4

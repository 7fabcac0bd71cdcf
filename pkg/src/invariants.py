"""
Invariant Engine
Invariant functions of first-order branches: residual checks, the A/B/G
functionals of the generalized symmetries, the invariant operator and the
n-dimensional level-set invariants
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import sympy

from .branches import (BackgroundSolution, Branch1D, BranchND, Point, Residual, as_background, as_point,
                       residual_from_terms)
from .errors import DegenerateCase, FUZero, ModelValidationError, Singularity
from .expressions import (Bindings, Expr, ExprLike, JetConvention, as_expr, compile_expression, evaluate,
                          symbol, to_text, total_x_derivative)
from .numeric import NewtonConfig, QuadratureConfig, integrate, newton_solve, partial_fd

logger = logging.getLogger(__name__)

SINGULAR_THRESHOLD = 1e-12

_B, _Y, _K = symbol("_b"), symbol("_y"), symbol("_k")
_U, _UX = symbol("u"), symbol("u_x")


def _is_zero(e: Expr) -> bool:
    return e == 0 or sympy.simplify(e) == 0


# ---------------------------------------------------------------------------
# Invariant residuals

@lru_cache(maxsize=1024)
def _invariant_terms_1d(branch: Branch1D, bg: BackgroundSolution, phi: Expr) -> Tuple[Expr, ...]:
    t, x = (symbol(c) for c in branch.conv.coordinates)
    composed = bg.compose(phi)
    return (sympy.diff(composed, t), -bg.compose(branch.flux_ux) * sympy.diff(composed, x))


def invariant_residual_1d(br: Branch1D, bg: Union[BackgroundSolution, ExprLike], phi: ExprLike,
                          p: Point) -> Residual:
    """phi_t - (u_x F)_{u_x}·phi_x along the background"""
    bg = as_background(bg, br.conv)
    terms = _invariant_terms_1d(br, bg, as_expr(phi))
    point = as_point(p, br.conv)
    return residual_from_terms(compile_expression(t)(point) for t in terms)


@lru_cache(maxsize=1024)
def _invariant_terms_nd(branch: BranchND, bg: BackgroundSolution, phi: Expr) -> Tuple[Expr, ...]:
    composed = bg.compose(phi)
    return tuple(bg.compose(partial) * sympy.diff(composed, symbol(c))
                 for c, partial in zip(branch.conv.coordinates, branch.F_grad))


def invariant_residual_nd(br: BranchND, bg: Union[BackgroundSolution, ExprLike], phi: ExprLike,
                          p: Point) -> Residual:
    """sum_i F_{u_i}·D_i phi along the background"""
    bg = as_background(bg, br.conv)
    terms = _invariant_terms_nd(br, bg, as_expr(phi))
    point = as_point(p, br.conv)
    return residual_from_terms(compile_expression(t)(point) for t in terms)


def invariant_residual(br: Union[Branch1D, BranchND], bg, phi: ExprLike, p: Point) -> Residual:
    if isinstance(br, Branch1D):
        return invariant_residual_1d(br, bg, phi, p)
    return invariant_residual_nd(br, bg, phi, p)


def invariant_from_symmetries(sigma: ExprLike, theta: ExprLike) -> Expr:
    """The ratio of two symmetries is an invariant function"""
    theta = as_expr(theta)
    if theta == 0:
        raise Singularity("denominator symmetry is identically zero")
    return as_expr(sigma) / theta


# ---------------------------------------------------------------------------
# Functionals of (u, u_x)

class JetFunctional:
    """Scalar function of (u, u_x) with partial derivatives"""

    expr: Optional[Expr] = None

    def value(self, u: float, ux: float) -> float:
        raise NotImplementedError

    def partials(self, u: float, ux: float) -> Tuple[float, float]:
        raise NotImplementedError

    def fd_partials(self, u: float, ux: float, h: float = 1e-6) -> Tuple[float, float]:
        """Central differences of value(); verification oracle for partials()"""
        d_u = (self.value(u + h, ux) - self.value(u - h, ux)) / (2.0 * h)
        d_ux = (self.value(u, ux + h) - self.value(u, ux - h)) / (2.0 * h)
        return d_u, d_ux

    def __call__(self, u: float, ux: float) -> float:
        return self.value(u, ux)


class ExprFunctional(JetFunctional):
    """Closed-form functional"""

    def __init__(self, expr: ExprLike):
        self.expr = as_expr(expr)
        self._d_u = sympy.diff(self.expr, _U)
        self._d_ux = sympy.diff(self.expr, _UX)

    def value(self, u: float, ux: float) -> float:
        return evaluate(self.expr, {"u": u, "u_x": ux})

    def partials(self, u: float, ux: float) -> Tuple[float, float]:
        b = {"u": u, "u_x": ux}
        return evaluate(self._d_u, b), evaluate(self._d_ux, b)

    def __repr__(self) -> str:
        return f"ExprFunctional({to_text(self.expr)})"


class LevelSetIntegral(JetFunctional):
    """gauge(u, u_x) + integral from u_ref to u of h(b, y(b), k) db

    k = F(u, u_x) and y(b) solves F(b, y) = k, so y(u) = u_x. Partial
    derivatives follow from differentiating under the integral sign:
        d/du   = gauge_u  + h(u, u_x, k) + I_k·F_u
        d/du_x = gauge_ux + I_k·F_{u_x}
    with I_k the integral of dh/dk = h_k + h_y / F_y.
    """

    def __init__(self, branch: Branch1D, integrand: Expr, gauge: Expr, u_ref: float = 1.0,
                 bracket: Optional[Tuple[float, float]] = None,
                 newton: Optional[NewtonConfig] = None, quadrature: Optional[QuadratureConfig] = None):
        self.branch = branch
        self.integrand = integrand
        self.gauge = ExprFunctional(gauge)
        self.u_ref = float(u_ref)
        self.newton = (newton or NewtonConfig.from_settings()).with_bracket(bracket)
        self.quadrature = quadrature or QuadratureConfig.from_settings()
        on_path = {_U: _B, _UX: _Y}
        self._F = compile_expression(branch.F)
        self._F_path = compile_expression(branch.F.xreplace(on_path))
        F_y = branch.F_ux.xreplace(on_path)
        self._F_y = compile_expression(F_y)
        self._h = compile_expression(integrand)
        self._h_k = compile_expression(sympy.diff(integrand, _K) + sympy.diff(integrand, _Y) / F_y)
        self._F_u = compile_expression(branch.F_u)
        self._F_ux = compile_expression(branch.F_ux)

    def level_set(self, b: float, k: float, guess: float) -> float:
        """Root y of F(b, y) = k"""
        def residual(z: np.ndarray) -> np.ndarray:
            return np.array([self._F_path({"_b": b, "_y": z[0]}) - k])

        def jacobian(z: np.ndarray) -> np.ndarray:
            return np.array([[self._F_y({"_b": b, "_y": z[0]})]])

        return newton_solve(residual, guess, self.newton, jacobian).scalar

    def _integral(self, fn: Callable[[Bindings], float], u: float, ux: float, k: float) -> float:
        def along(b: float) -> float:
            y = self.level_set(b, k, ux)
            return fn({"_b": b, "_y": y, "_k": k})

        return integrate(along, self.u_ref, u, self.quadrature)

    def value(self, u: float, ux: float) -> float:
        k = self._F({"u": u, "u_x": ux})
        return self.gauge.value(u, ux) + self._integral(self._h, u, ux, k)

    def partials(self, u: float, ux: float) -> Tuple[float, float]:
        jets = {"u": u, "u_x": ux}
        k = self._F(jets)
        i_k = self._integral(self._h_k, u, ux, k)
        g_u, g_ux = self.gauge.partials(u, ux)
        h_top = self._h({"_b": u, "_y": ux, "_k": k})
        return g_u + h_top + i_k * self._F_u(jets), g_ux + i_k * self._F_ux(jets)

    def __repr__(self) -> str:
        return f"LevelSetIntegral({to_text(self.integrand)}, u_ref={self.u_ref})"


Functional = Union[JetFunctional, Expr]


def as_functional(value: Union[JetFunctional, ExprLike]) -> JetFunctional:
    if isinstance(value, JetFunctional):
        return value
    return ExprFunctional(value)


def _flux_value(br: Branch1D, u: float, ux: float) -> float:
    return evaluate(br.flux_ux, {"u": u, "u_x": ux})


# ---------------------------------------------------------------------------
# A, B, G

def _build(br: Branch1D, constant: float, what: str, integrand: Expr, closed: Expr, gauge: Expr,
           u_ref: float, bracket, newton, quadrature) -> JetFunctional:
    if not _is_zero(br.F_ux):
        if constant == 0:
            return ExprFunctional(gauge)
        logger.debug("%s for %s built by level-set quadrature", what, to_text(br.F))
        return LevelSetIntegral(br, sympy.sympify(constant) * integrand, gauge, u_ref, bracket, newton,
                                quadrature)
    if not _is_zero(br.F_u):
        return ExprFunctional(gauge + sympy.nsimplify(constant) * closed)
    if constant != 0:
        raise DegenerateCase(f"F_u = F_u_x = 0 for F = {to_text(br.F)} requires {what} constant 0")
    return ExprFunctional(gauge)


def build_A(br: Branch1D, a: float, u_ref: float = 1.0, bracket: Optional[Tuple[float, float]] = None,
            newton: Optional[NewtonConfig] = None,
            quadrature: Optional[QuadratureConfig] = None) -> JetFunctional:
    """Solution of u_x^2 (A_{u_x} F_u - A_u F_{u_x}) = a (u_x F)_{u_x}, gauge A_0 = 0

    Raises:
        DegenerateCase: F_u = F_{u_x} = 0 and a != 0
    """
    F_y = br.F_ux.xreplace({_U: _B, _UX: _Y})
    integrand = -(_K + _Y * F_y) / (_Y ** 2 * F_y)
    closed = -br.F / (_UX * br.F_u)
    return _build(br, a, "A", integrand, closed, sympy.S.Zero, u_ref, bracket, newton, quadrature)


def build_B(br: Branch1D, b: float, u_ref: float = 1.0, bracket: Optional[Tuple[float, float]] = None,
            newton: Optional[NewtonConfig] = None,
            quadrature: Optional[QuadratureConfig] = None) -> JetFunctional:
    """Solution of u_x^2 (B_{u_x} F_u - B_u F_{u_x}) = -b, gauge B_0 = 0"""
    F_y = br.F_ux.xreplace({_U: _B, _UX: _Y})
    integrand = 1 / (_Y ** 2 * F_y)
    closed = 1 / (_UX * br.F_u)
    return _build(br, b, "B", integrand, closed, sympy.S.Zero, u_ref, bracket, newton, quadrature)


def build_G(br: Branch1D, c: float, u_ref: float = 1.0, bracket: Optional[Tuple[float, float]] = None,
            newton: Optional[NewtonConfig] = None,
            quadrature: Optional[QuadratureConfig] = None) -> JetFunctional:
    """Solution of F_{u_x} G_u - F_u G_{u_x} = c u_x^-2 with gauge A(F) = F"""
    F_y = br.F_ux.xreplace({_U: _B, _UX: _Y})
    integrand = 1 / (_Y ** 2 * F_y)
    closed = 1 / (_UX * br.F_u)
    return _build(br, c, "G", integrand, closed, br.F, u_ref, bracket, newton, quadrature)


def _functional_partials(fn: JetFunctional, u: float, ux: float, method: str, h: float) -> Tuple[float, float]:
    if method == "fd":
        return fn.fd_partials(u, ux, h)
    return fn.partials(u, ux)


def defining_residual(br: Branch1D, kind: str, fn: Union[JetFunctional, ExprLike], constant: float,
                      u: float, ux: float, method: str = "exact", h: float = 1e-6) -> Residual:
    """Residual of the defining relation of A ("A"), B ("B") or G ("G") at a jet point

    method "exact" uses partials(), "fd" the central differences of value().
    """
    fn = as_functional(fn)
    d_u, d_ux = _functional_partials(fn, u, ux, method, h)
    jets = {"u": u, "u_x": ux}
    F_u, F_ux = evaluate(br.F_u, jets), evaluate(br.F_ux, jets)
    if kind == "A":
        terms = [ux * ux * d_ux * F_u, -ux * ux * d_u * F_ux, -constant * _flux_value(br, u, ux)]
    elif kind == "B":
        terms = [ux * ux * d_ux * F_u, -ux * ux * d_u * F_ux, constant]
    elif kind == "G":
        terms = [F_ux * d_u, -F_u * d_ux, -constant / (ux * ux)]
    else:
        raise ValueError(f"unknown functional kind '{kind}'")
    return residual_from_terms(terms)


@dataclass
class InvariantSpec1D:
    """Group constants and the functionals they determine"""

    branch: Branch1D
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    u_ref: float = 1.0
    A: JetFunctional = field(default=None)
    B: JetFunctional = field(default=None)
    G: JetFunctional = field(default=None)

    @classmethod
    def build(cls, branch: Branch1D, a: float = 0.0, b: float = 0.0, c: float = 0.0, u_ref: float = 1.0,
              bracket: Optional[Tuple[float, float]] = None,
              sample_jets: Sequence[Tuple[float, float]] = (), tolerance: float = 1e-8) -> "InvariantSpec1D":
        spec = cls(branch, a, b, c, u_ref,
                   A=build_A(branch, a, u_ref, bracket),
                   B=build_B(branch, b, u_ref, bracket),
                   G=build_G(branch, c, u_ref, bracket))
        for u, ux in sample_jets:
            for kind, fn, constant in (("A", spec.A, a), ("B", spec.B, b), ("G", spec.G, c)):
                r = defining_residual(branch, kind, fn, constant, u, ux)
                if not r.passes(tolerance):
                    raise ModelValidationError(branch.name or to_text(branch.F), f"{kind}-relation",
                                               f"residual {float(r):.3e} at (u, u_x) = ({u}, {ux})")
        return spec


def _bg_jets(bg: BackgroundSolution, p: Dict[str, float]) -> Dict[str, float]:
    return bg.jet_values(p, ("u", "u_t", "u_x", "u_xt", "u_xx"))


def beta0_residual(spec: InvariantSpec1D, bg: Union[BackgroundSolution, ExprLike], p: Point) -> Residual:
    """Invariant residual of a·x + A along the background, Leibniz partials of A"""
    bg = as_background(bg, spec.branch.conv)
    j = _bg_jets(bg, as_point(p, bg.conv))
    A_u, A_ux = spec.A.partials(j["u"], j["u_x"])
    flux = _flux_value(spec.branch, j["u"], j["u_x"])
    return residual_from_terms([A_u * j["u_t"], A_ux * j["u_xt"], -flux * spec.a,
                                -flux * A_u * j["u_x"], -flux * A_ux * j["u_xx"]])


def gamma0_residual(spec: InvariantSpec1D, bg: Union[BackgroundSolution, ExprLike], p: Point) -> Residual:
    """Invariant residual of b·t + B along the background"""
    bg = as_background(bg, spec.branch.conv)
    j = _bg_jets(bg, as_point(p, bg.conv))
    B_u, B_ux = spec.B.partials(j["u"], j["u_x"])
    flux = _flux_value(spec.branch, j["u"], j["u_x"])
    return residual_from_terms([spec.b, B_u * j["u_t"], B_ux * j["u_xt"],
                                -flux * B_u * j["u_x"], -flux * B_ux * j["u_xx"]])


# ---------------------------------------------------------------------------
# Invariant operator

def _operator_G(G: Union[JetFunctional, ExprLike]) -> Expr:
    if isinstance(G, JetFunctional):
        if G.expr is None:
            raise TypeError("numeric G supports pointwise evaluation only; use evaluate_invariant_operator")
        return G.expr
    return as_expr(G)


def apply_invariant_operator(G: Union[JetFunctional, ExprLike], h: ExprLike, conv: JetConvention,
                             at: Optional[Bindings] = None) -> Expr:
    """phi h = D_x h / D_x G

    Raises:
        Singularity: D_x G vanishes identically or within 1e-12 at the jet point `at`
    """
    h = as_expr(h)
    dh = total_x_derivative(h, conv)
    if dh == 0:
        return sympy.S.Zero
    dG = total_x_derivative(_operator_G(G), conv)
    if dG == 0:
        raise Singularity("D_x G vanishes identically")
    if at is not None:
        value = evaluate(dG, at)
        if abs(value) < SINGULAR_THRESHOLD:
            raise Singularity(f"D_x G = {value:.3e} at {dict(at)}")
    return dh / dG


def evaluate_invariant_operator(G: Union[JetFunctional, ExprLike], h: ExprLike, conv: JetConvention,
                                jets: Bindings) -> float:
    """Pointwise phi h for closed-form or numeric G"""
    fn = as_functional(G)
    G_u, G_ux = fn.partials(jets["u"], jets["u_x"])
    dG = G_u * jets["u_x"] + G_ux * jets["u_xx"]
    if abs(dG) < SINGULAR_THRESHOLD:
        raise Singularity(f"D_x G = {dG:.3e} at {dict(jets)}")
    dh = total_x_derivative(as_expr(h), conv)
    return evaluate(dh, jets) / dG


# ---------------------------------------------------------------------------
# n-dimensional invariants

@dataclass
class NDInvariantSpec:
    """phi_i = x_i + A_i(u, u_x0, ..., u_xn) from the level-set integral in u_x0

    A_i integrates F_{u_i}(f, b, b·tau) / (b·F_u(f, b, b·tau)) over b from
    u0_ref to u_x0, with tau_a = u_xa / u_x0 and f solving
    F(f, b, b·tau) = F(u, u_x0, ..., u_xn).
    """

    branch: BranchND
    index: int
    u0_ref: float = 1.0
    bracket: Optional[Tuple[float, float]] = None
    newton: NewtonConfig = field(default_factory=NewtonConfig.from_settings)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig.from_settings)

    def __post_init__(self):
        conv = self.branch.conv
        first = conv.first_order()
        taus = [symbol(f"_tau{a}") for a in range(1, conv.n + 1)]
        f = symbol("_f")
        path = {symbol("u"): f, symbol(first[0]): _B}
        path.update({symbol(name): _B * tau for name, tau in zip(first[1:], taus)})
        self._names = ["_f", "_b"] + [t.name for t in taus]
        self._F = compile_expression(self.branch.F)
        self._F_path = compile_expression(self.branch.F.xreplace(path))
        self._F_f = compile_expression(self.branch.F_u.xreplace(path))
        F_u_path = self.branch.F_u.xreplace(path)
        self._integrand = compile_expression(self.branch.F_grad[self.index].xreplace(path) / (_B * F_u_path))
        self.newton = self.newton.with_bracket(self.bracket)

    def _level_set(self, b: float, taus: Dict[str, float], k: float, guess: float) -> float:
        def bindings(fv: float) -> Dict[str, float]:
            values = {"_f": fv, "_b": b}
            values.update(taus)
            return values

        def residual(z: np.ndarray) -> np.ndarray:
            return np.array([self._F_path(bindings(z[0])) - k])

        def jacobian(z: np.ndarray) -> np.ndarray:
            return np.array([[self._F_f(bindings(z[0]))]])

        return newton_solve(residual, guess, self.newton, jacobian).scalar

    def A(self, jets: Bindings) -> float:
        """A_i at a jet point (u and the first-order jets)"""
        first = self.branch.conv.first_order()
        u0 = float(jets[first[0]])
        if u0 == 0.0:
            raise FUZero(f"{first[0]} = 0: tau undefined")
        taus = {f"_tau{a}": float(jets[first[a]]) / u0 for a in range(1, len(first))}
        k = self._F(jets)
        u = float(jets["u"])

        def along(b: float) -> float:
            fv = self._level_set(b, taus, k, u)
            values = {"_f": fv, "_b": b}
            values.update(taus)
            if abs(self._F_f(values)) < SINGULAR_THRESHOLD:
                raise FUZero(f"F_u vanishes on the integration path at b = {b}")
            return self._integrand(values)

        return integrate(along, self.u0_ref, u0, self.quadrature)

    def phi(self, bg: Union[BackgroundSolution, ExprLike], p: Point) -> float:
        """x_i + A_i composed with a background"""
        bg = as_background(bg, self.branch.conv)
        point = as_point(p, bg.conv)
        jets = bg.jet_values(point, ("u",) + self.branch.conv.first_order())
        return point[self.branch.conv.coordinates[self.index]] + self.A(jets)

    def residual(self, bg: Union[BackgroundSolution, ExprLike], p: Point, h: float = 1e-5) -> Residual:
        """nd invariant residual of phi_i, coordinate derivatives by central differences"""
        bg = as_background(bg, self.branch.conv)
        point = as_point(p, bg.conv)
        jets = bg.jet_values(point, ("u",) + self.branch.conv.first_order())
        terms = []
        for coordinate, partial in zip(self.branch.conv.coordinates, self.branch.F_grad):
            d_phi = partial_fd(lambda q: self.phi(bg, q), point, coordinate, h=h)
            terms.append(evaluate(partial, jets) * d_phi)
        return residual_from_terms(terms)


def build_Ai_nd(br: BranchND, i: int, u0_ref: float = 1.0,
                bracket: Optional[Tuple[float, float]] = None) -> NDInvariantSpec:
    """Level-set invariant phi_i = x_i + A_i of an n-dimensional branch

    Raises:
        ValueError: i outside 0..n
        FUZero: F_u vanishes identically
    """
    if not 0 <= i <= br.n:
        raise ValueError(f"index {i} out of range 0..{br.n}")
    if _is_zero(br.F_u):
        raise FUZero(f"F_u = 0 identically for F = {to_text(br.F)}")
    return NDInvariantSpec(br, i, u0_ref=u0_ref, bracket=bracket)

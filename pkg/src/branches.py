"""
Branch Model
PDE branches u_t = F(u, u_x)·u_x and F(u, u_x0, ..., u_xn) = 0, closed-form
background solutions, and PDE / linearized residuals along them
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import sympy

from .errors import ModelValidationError
from .expressions import (Expr, ExprLike, JetConvention, as_expr, compile_expression, evaluate,
                          symbol, to_text)
from .numeric import partial_fd

logger = logging.getLogger(__name__)

Point = Union[Mapping[str, float], Sequence[float]]
PointFunction = Callable[[Dict[str, float]], float]


class Residual(float):
    """Residual value that remembers the magnitude of its largest additive term"""

    def __new__(cls, value: float, scale: float = 0.0):
        obj = super().__new__(cls, value)
        obj.scale = float(scale)
        return obj

    def passes(self, tolerance: float) -> bool:
        return abs(float(self)) <= tolerance * max(self.scale, 1.0)

    @property
    def relative(self) -> float:
        return abs(float(self)) / max(self.scale, 1.0)

    def __repr__(self) -> str:
        return f"Residual({float(self)!r}, scale={self.scale!r})"


def residual_from_terms(values: Iterable[float]) -> Residual:
    values = [float(v) for v in values]
    if not values:
        return Residual(0.0, 0.0)
    return Residual(sum(values), max(abs(v) for v in values))


def additive_terms(e: Expr) -> Tuple[Expr, ...]:
    e = sympy.expand(e) if e.is_Mul else e
    return tuple(e.args) if e.is_Add else (e,)


def as_point(p: Point, conv: JetConvention) -> Dict[str, float]:
    """Coordinate bindings from a mapping or a sequence in axis order"""
    if isinstance(p, Mapping):
        missing = [c for c in conv.coordinates if c not in p]
        if missing:
            raise ValueError(f"point is missing coordinates {missing}")
        return {k: float(v) for k, v in p.items()}
    values = list(p)
    if len(values) != len(conv.coordinates):
        raise ValueError(f"expected {len(conv.coordinates)} coordinates, got {len(values)}")
    return {c: float(v) for c, v in zip(conv.coordinates, values)}


def _check_variables(name: str, F: Expr, allowed: Sequence[str]) -> None:
    extra = sorted(s.name for s in F.free_symbols if s.name not in allowed)
    if extra:
        raise ModelValidationError(name or to_text(F), "branch-variables",
                                   f"F may only depend on {', '.join(allowed)}; found {', '.join(extra)}")


@dataclass
class Branch1D:
    """Separated branch u_t = F(u, u_x)·u_x"""

    F: Expr
    name: str = ""
    conv: JetConvention = field(default_factory=JetConvention.from_settings)
    F_u: Expr = field(init=False)
    F_ux: Expr = field(init=False)
    flux_ux: Expr = field(init=False)

    def __post_init__(self):
        self.F = as_expr(self.F)
        if self.conv.indexed:
            raise ValueError("Branch1D needs the (t, x) jet convention")
        _check_variables(self.name, self.F, ("u", "u_x"))
        u, ux = symbol("u"), symbol("u_x")
        self.F_u = sympy.diff(self.F, u)
        self.F_ux = sympy.diff(self.F, ux)
        self.flux_ux = sympy.diff(ux * self.F, ux)

    @classmethod
    def from_text(cls, text: ExprLike, constants: Optional[Mapping[str, float]] = None,
                  name: str = "", conv: Optional[JetConvention] = None) -> "Branch1D":
        F = as_expr(text)
        if constants:
            F = F.xreplace({symbol(k): as_expr(v) for k, v in constants.items()})
        return cls(F, name=name, conv=conv or JetConvention.from_settings())

    @property
    def equation(self) -> Expr:
        """Jet residual u_t - F·u_x"""
        return symbol("u_t") - self.F * symbol("u_x")

    def to_implicit(self) -> "BranchND":
        """Recast as the n = 1 implicit branch u_x0 - F(u, u_x1)·u_x1"""
        renamed = self.F.xreplace({symbol("u_x"): symbol("u_x1")})
        return BranchND(symbol("u_x0") - renamed * symbol("u_x1"), n=1, name=self.name)

    def __hash__(self):
        return hash((self.F, self.conv))


@dataclass
class BranchND:
    """Implicit autonomous branch F(u, u_x0, ..., u_xn) = 0"""

    F: Expr
    n: int = 1
    name: str = ""
    conv: JetConvention = field(default=None)
    F_u: Expr = field(init=False)
    F_grad: Tuple[Expr, ...] = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        self.F = as_expr(self.F)
        if self.conv is None:
            self.conv = JetConvention.from_settings(n=self.n, indexed=True)
        _check_variables(self.name, self.F, ("u",) + self.conv.first_order())
        self.F_u = sympy.diff(self.F, symbol("u"))
        self.F_grad = tuple(sympy.diff(self.F, symbol(j)) for j in self.conv.first_order())

    @classmethod
    def from_text(cls, text: ExprLike, n: int, constants: Optional[Mapping[str, float]] = None,
                  name: str = "") -> "BranchND":
        F = as_expr(text)
        if constants:
            F = F.xreplace({symbol(k): as_expr(v) for k, v in constants.items()})
        return cls(F, n=n, name=name)

    @property
    def equation(self) -> Expr:
        return self.F

    def __hash__(self):
        return hash((self.F, self.n))


Branch = Union[Branch1D, BranchND]


@dataclass
class BackgroundSolution:
    """Closed-form solution U(coordinates) with exact derivatives on demand"""

    U: Expr
    conv: JetConvention = field(default_factory=JetConvention.from_settings)
    domain_note: str = ""
    _jets: Dict[str, Expr] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.U = as_expr(self.U)
        stray = sorted(s.name for s in self.U.free_symbols if s.name not in self.conv.coordinates)
        if stray:
            raise ModelValidationError(to_text(self.U), "background-variables",
                                       f"unexpected names {', '.join(stray)}")

    @classmethod
    def for_branch(cls, branch: Branch, U: ExprLike, sample_points: Sequence[Point] = (),
                   tolerance: float = 1e-9, domain_note: str = "") -> "BackgroundSolution":
        """Build a background and check it solves the branch at the sample points"""
        bg = cls(as_expr(U), conv=branch.conv, domain_note=domain_note)
        for p in sample_points:
            r = pde_residual(branch, bg, p)
            if not r.passes(tolerance):
                raise ModelValidationError(branch.name or to_text(branch.F), "seed-residual",
                                           f"{to_text(bg.U)} leaves residual {float(r):.3e} at {p}")
        return bg

    def jet(self, name: str) -> Expr:
        """Exact derivative of U named by a jet variable"""
        cached = self._jets.get(name)
        if cached is not None:
            return cached
        counts = self.conv.jet_counts(name)
        if counts is None:
            raise ValueError(f"'{name}' is not a jet variable")
        spec = [(symbol(c), k) for c, k in zip(self.conv.coordinates, counts) if k]
        value = sympy.diff(self.U, *spec) if spec else self.U
        self._jets[name] = value
        return value

    def compose(self, e: Expr) -> Expr:
        """Substitute the background into every jet variable of e"""
        mapping = {s: self.jet(s.name) for s in self.conv.jet_symbols(e)}
        return e.xreplace(mapping)

    def jet_values(self, p: Point, names: Iterable[str]) -> Dict[str, float]:
        point = as_point(p, self.conv)
        return {name: evaluate(self.jet(name), point) for name in names}

    def value(self, p: Point) -> float:
        return evaluate(self.U, as_point(p, self.conv))

    def __hash__(self):
        return hash((self.U, self.conv))

    def __eq__(self, other):
        return isinstance(other, BackgroundSolution) and self.U == other.U and self.conv == other.conv


def as_background(u: Union[BackgroundSolution, ExprLike], conv: JetConvention) -> BackgroundSolution:
    if isinstance(u, BackgroundSolution):
        return u
    return BackgroundSolution(as_expr(u), conv=conv)


def _evaluate_terms(terms: Sequence[Expr], p: Dict[str, float]) -> Residual:
    return residual_from_terms(compile_expression(t)(p) for t in terms)


# ---------------------------------------------------------------------------
# PDE residuals

@lru_cache(maxsize=512)
def _pde_terms_1d(branch: Branch1D, bg: BackgroundSolution) -> Tuple[Expr, ...]:
    return (bg.jet("u_t"), -bg.compose(branch.F * symbol("u_x")))


def pde_residual_1d(br: Branch1D, u: Union[BackgroundSolution, ExprLike], p: Point) -> Residual:
    """u_t - F(u, u_x)·u_x with exact derivatives of u

    Raises:
        DomainViolation: u or its derivatives undefined at p
    """
    bg = as_background(u, br.conv)
    return _evaluate_terms(_pde_terms_1d(br, bg), as_point(p, br.conv))


@lru_cache(maxsize=512)
def _pde_terms_nd(branch: BranchND, bg: BackgroundSolution) -> Tuple[Expr, ...]:
    return tuple(bg.compose(t) for t in additive_terms(branch.F))


def pde_residual_nd(br: BranchND, u: Union[BackgroundSolution, ExprLike], p: Point) -> Residual:
    """F(u, u_x0, ..., u_xn) with exact derivatives of u"""
    bg = as_background(u, br.conv)
    return _evaluate_terms(_pde_terms_nd(br, bg), as_point(p, br.conv))


def pde_residual(br: Branch, u: Union[BackgroundSolution, ExprLike], p: Point) -> Residual:
    if isinstance(br, Branch1D):
        return pde_residual_1d(br, u, p)
    return pde_residual_nd(br, u, p)


def fd_pde_residual(br: Branch, u: PointFunction, p: Point, h: float = 1e-5) -> Residual:
    """PDE residual of a numerically defined solution, derivatives by central differences"""
    point = as_point(p, br.conv)
    value = u(dict(point))
    grads = [partial_fd(u, point, c, h=h) for c in br.conv.coordinates]
    if isinstance(br, Branch1D):
        bindings = {"u": value, "u_t": grads[0], "u_x": grads[1]}
        return residual_from_terms([grads[0], -evaluate(br.F, bindings) * grads[1]])
    bindings = {"u": value}
    bindings.update(zip(br.conv.first_order(), grads))
    return residual_from_terms(evaluate(t, bindings) for t in additive_terms(br.F))


# ---------------------------------------------------------------------------
# Linearized (symmetry) residuals

@lru_cache(maxsize=1024)
def _linearized_terms_1d(branch: Branch1D, bg: BackgroundSolution, sigma: Expr) -> Tuple[Expr, ...]:
    t, x = (symbol(c) for c in branch.conv.coordinates)
    s = bg.compose(sigma)
    return (
        sympy.diff(s, t),
        -bg.compose(branch.F_u * symbol("u_x")) * s,
        -bg.compose(branch.flux_ux) * sympy.diff(s, x),
    )


def linearized_residual_1d(br: Branch1D, bg: Union[BackgroundSolution, ExprLike], sigma: ExprLike,
                           p: Point) -> Residual:
    """sigma_t - F_u·u_x·sigma - (u_x F)_{u_x}·sigma_x along the background"""
    bg = as_background(bg, br.conv)
    terms = _linearized_terms_1d(br, bg, as_expr(sigma))
    return _evaluate_terms(terms, as_point(p, br.conv))


@lru_cache(maxsize=1024)
def _linearized_terms_nd(branch: BranchND, bg: BackgroundSolution, sigma: Expr) -> Tuple[Expr, ...]:
    s = bg.compose(sigma)
    terms = [bg.compose(branch.F_u) * s]
    for coordinate, partial in zip(branch.conv.coordinates, branch.F_grad):
        terms.append(bg.compose(partial) * sympy.diff(s, symbol(coordinate)))
    return tuple(terms)


def linearized_residual_nd(br: BranchND, bg: Union[BackgroundSolution, ExprLike], sigma: ExprLike,
                           p: Point) -> Residual:
    """F_u·sigma + sum_i F_{u_i}·D_i sigma along the background"""
    bg = as_background(bg, br.conv)
    terms = _linearized_terms_nd(br, bg, as_expr(sigma))
    return _evaluate_terms(terms, as_point(p, br.conv))


def linearized_residual(br: Branch, bg: Union[BackgroundSolution, ExprLike], sigma: ExprLike,
                        p: Point) -> Residual:
    if isinstance(br, Branch1D):
        return linearized_residual_1d(br, bg, sigma, p)
    return linearized_residual_nd(br, bg, sigma, p)


def translation_symmetries(br: Branch) -> List[Expr]:
    """u_t, u_x (or every u_xi) solve the linearized equation of any autonomous branch"""
    return [symbol(j) for j in br.conv.first_order()]

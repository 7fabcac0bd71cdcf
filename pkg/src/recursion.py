"""
Recursion Engine
Recursion operator Phi = u_x (1/D_x G) D_x u_x^-1, the hierarchy it generates,
the hereditary identity and Frechet-derivative flow commutators
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy

from .branches import Branch1D, Residual, residual_from_terms
from .errors import ModelValidationError, PBSError, Singularity
from .expressions import (Bindings, Expr, ExprLike, JetConvention, as_expr, compile_expression, evaluate,
                          symbol, to_text, total_x_derivative)

logger = logging.getLogger(__name__)

_U, _UX = symbol("u"), symbol("u_x")


@dataclass
class RecursionSpec:
    """Branch plus the closed-form G(u, u_x) defining the invariant operator"""

    branch: Branch1D
    G: Expr = field(default=None)
    DxG: Expr = field(init=False)

    def __post_init__(self):
        self.G = self.branch.F if self.G is None else as_expr(self.G)
        stray = sorted(s.name for s in self.G.free_symbols if s.name not in ("u", "u_x"))
        if stray:
            raise ModelValidationError(self.branch.name or to_text(self.branch.F), "G-variables",
                                       f"G may only depend on u, u_x; found {', '.join(stray)}")
        self.DxG = total_x_derivative(self.G, self.branch.conv)

    @property
    def conv(self) -> JetConvention:
        return self.branch.conv

    def bracket_residual(self, c: float, u: float, ux: float) -> Residual:
        """F_{u_x} G_u - F_u G_{u_x} - c u_x^-2 at a jet point"""
        jets = {"u": u, "u_x": ux}
        G_u, G_ux = sympy.diff(self.G, _U), sympy.diff(self.G, _UX)
        return residual_from_terms([evaluate(self.branch.F_ux * G_u, jets),
                                    -evaluate(self.branch.F_u * G_ux, jets), -c / (ux * ux)])

    def validate(self, c: float, sample_jets: Sequence[Tuple[float, float]], tolerance: float = 1e-8) -> None:
        for u, ux in sample_jets:
            r = self.bracket_residual(c, u, ux)
            if not r.passes(tolerance):
                raise ModelValidationError(self.branch.name or to_text(self.branch.F), "G-relation",
                                           f"residual {float(r):.3e} at (u, u_x) = ({u}, {ux})")

    def __hash__(self):
        return hash((self.branch, self.G))


def apply_recursion(rs: RecursionSpec, sigma: ExprLike, conv: Optional[JetConvention] = None) -> Expr:
    """Phi sigma = (u_x / D_x G) · D_x(sigma / u_x)

    Raises:
        JetOrderOverflow: sigma already at the jet order cap
        Singularity: D_x G vanishes identically; pointwise zeros of u_x or
            D_x G are flagged by require_regular / evaluate_recursion
    """
    conv = conv or rs.conv
    inner = total_x_derivative(as_expr(sigma) / _UX, conv)
    if inner == 0:
        return sympy.S.Zero
    if rs.DxG == 0:
        raise Singularity("D_x G vanishes identically")
    return _UX * inner / rs.DxG


SINGULAR_THRESHOLD = 1e-12


def require_regular(rs: RecursionSpec, jets: Bindings, threshold: float = SINGULAR_THRESHOLD) -> None:
    """Raise Singularity where u_x or D_x G vanishes at a jet point"""
    ux = float(jets["u_x"])
    if abs(ux) <= threshold:
        raise Singularity(f"u_x = {ux:.3e}: recursion operator undefined")
    dxg = evaluate(rs.DxG, jets)
    if abs(dxg) <= threshold * max(1.0, abs(ux)):
        raise Singularity(f"D_x G = {dxg:.3e} at u_x = {ux:.3e}: recursion operator undefined")


def evaluate_recursion(rs: RecursionSpec, sigma: ExprLike, jets: Bindings,
                       conv: Optional[JetConvention] = None) -> float:
    """Phi sigma at a jet point, flagging the singular set first"""
    require_regular(rs, jets)
    return evaluate(apply_recursion(rs, sigma, conv), jets)


def hierarchy(rs: RecursionSpec, m_max: int, conv: Optional[JetConvention] = None) -> List[Expr]:
    """K_0 = u_x F, K_m = Phi^m K_0 for m = 0..m_max"""
    if m_max < 0:
        raise ValueError("m_max must be >= 0")
    levels = [_UX * rs.branch.F]
    for m in range(1, m_max + 1):
        levels.append(apply_recursion(rs, levels[-1], conv))
        logger.debug("K_%d has %d operations", m, sympy.count_ops(levels[-1]))
    return levels


# ---------------------------------------------------------------------------
# Hereditary identity

_X = symbol("x")
_EPS = sympy.Symbol("_eps")
_FUNCTIONS = {name: sympy.Function(name)(_X) for name in ("_u", "_f", "_g")}


def _prefactor(G: Expr, u: Expr) -> Expr:
    ux = sympy.diff(u, _X)
    return ux / sympy.diff(G.xreplace({_U: u, _UX: ux}), _X)


def _inner(u: Expr, s: Expr) -> Expr:
    return sympy.diff(s / sympy.diff(u, _X), _X)


def _phi_on(G: Expr, u: Expr, s: Expr) -> Expr:
    return _prefactor(G, u) * _inner(u, s)


def _at_zero(e: Expr) -> Expr:
    return sympy.diff(e, _EPS).xreplace({_EPS: 0})


def _frechet_parts(G: Expr, u: Expr, direction: Expr, s: Expr) -> Tuple[Expr, Expr]:
    """Phi'[direction] s split into the prefactor variation and the inner variation"""
    shifted = u + _EPS * direction
    return (_at_zero(_prefactor(G, shifted)) * _inner(u, s),
            _prefactor(G, u) * _at_zero(_inner(shifted, s)))


def _frechet_on(G: Expr, u: Expr, direction: Expr, s: Expr) -> Expr:
    return sum(_frechet_parts(G, u, direction, s))


def _flatten_derivatives(e: Expr) -> Expr:
    mapping = {}
    for d in e.atoms(sympy.Derivative):
        name = d.expr.func.__name__
        mapping[d] = sympy.Symbol(f"{name}{d.derivative_count}", real=True)
    e = e.xreplace(mapping)
    return e.xreplace({f: sympy.Symbol(f"{f.func.__name__}0", real=True) for f in _FUNCTIONS.values()})


@lru_cache(maxsize=64)
def _hereditary_blocks(G: Expr) -> Tuple[Expr, Expr, Expr]:
    """The two parts of Phi'[Phi f] g and the block Phi(Phi'[f] g), u, f, g generic functions of x"""
    u, f, g = _FUNCTIONS["_u"], _FUNCTIONS["_f"], _FUNCTIONS["_g"]
    first, second = _frechet_parts(G, u, _phi_on(G, u, f), g)
    third = _phi_on(G, u, _frechet_on(G, u, f, g))
    return tuple(_flatten_derivatives(b) for b in (first, second, third))


_MAX_DERIVATIVE = 6


def _derivative_values(prefix: str, e: Expr, at: float) -> Dict[str, float]:
    values = {}
    current = e
    for k in range(_MAX_DERIVATIVE + 1):
        values[f"{prefix}{k}"] = evaluate(current, {"x": at})
        current = sympy.diff(current, _X)
    return values


def hereditary_residual(rs: RecursionSpec, f: ExprLike, g: ExprLike, u: ExprLike, at: float) -> Residual:
    """Phi'[Phi f]g - Phi'[Phi g]f - Phi(Phi'[f]g - Phi'[g]f) at x = at

    f, g and u are explicit functions of x. Frechet derivatives are exact
    epsilon-derivatives; swapping f and g flips the sign exactly. The scale
    is the largest of the six additive blocks (two Frechet parts and one
    Phi block for each ordering of f and g).
    """
    compiled = [compile_expression(b) for b in _hereditary_blocks(rs.G)]
    u_vals = _derivative_values("_u", as_expr(u), at)
    f_vals = _derivative_values("_f", as_expr(f), at)
    g_vals = _derivative_values("_g", as_expr(g), at)
    forward = {**u_vals, **f_vals, **g_vals}
    swapped = {**u_vals,
               **{k.replace("_f", "_g"): v for k, v in f_vals.items()},
               **{k.replace("_g", "_f"): v for k, v in g_vals.items()}}
    a_fg, b_fg, c_fg = (fn(forward) for fn in compiled)
    a_gf, b_gf, c_gf = (fn(swapped) for fn in compiled)
    p_fg = (a_fg + b_fg) - c_fg
    p_gf = (a_gf + b_gf) - c_gf
    scale = residual_from_terms([a_fg, b_fg, -c_fg, -a_gf, -b_gf, c_gf]).scale
    return Residual(p_fg - p_gf, scale)


def random_polynomial(rng: np.random.Generator, degree: int = 3) -> Expr:
    coefficients = rng.uniform(-1.0, 1.0, degree + 1)
    return sum(sympy.Float(float(c)) * _X ** k for k, c in enumerate(coefficients))


def hereditary_trials(rs: RecursionSpec, trials: int, rng_seed: int = 0,
                      min_denominator: float = 0.1) -> List[Tuple[float, Residual]]:
    """Seeded random (f, g, u) cubic triples; draws with small u_x or D_x G are redrawn"""
    rng = np.random.default_rng(rng_seed)
    results = []
    dxg_on = compile_expression(rs.DxG)
    while len(results) < trials:
        f, g, u = (random_polynomial(rng) for _ in range(3))
        at = float(rng.uniform(-1.0, 1.0))
        jets = {"u": evaluate(u, {"x": at}), "u_x": evaluate(sympy.diff(u, _X), {"x": at}),
                "u_xx": evaluate(sympy.diff(u, _X, 2), {"x": at})}
        if abs(jets["u_x"]) < min_denominator:
            continue
        try:
            if abs(dxg_on(jets)) < min_denominator:
                continue
        except (PBSError, ArithmeticError) as exc:
            logger.debug("redrawing hereditary sample: %s", exc)
            continue
        results.append((at, hereditary_residual(rs, f, g, u, at)))
    return results


# ---------------------------------------------------------------------------
# Flow commutators

def frechet_jet(K: ExprLike, h: ExprLike, conv: JetConvention) -> Expr:
    """K'[h] = sum_j dK/du_(j) · D_x^j h over the x-jets of K"""
    K, h = as_expr(K), as_expr(h)
    result = sympy.S.Zero
    for s in conv.jet_symbols(K):
        counts = conv.jet_counts(s.name)
        if any(counts[:-1]) and not conv.indexed:
            raise ValueError(f"Frechet derivative needs x-jets only; found {s.name}")
        direction = h
        for _ in range(counts[-1]):
            direction = total_x_derivative(direction, conv)
        result += sympy.diff(K, s) * direction
    return result


def _commutator_blocks(K1: Expr, K2: Expr, conv: JetConvention) -> Tuple[Expr, Expr]:
    wide = conv.with_max_order(2 * conv.max_order + 2)
    return frechet_jet(K1, K2, wide), frechet_jet(K2, K1, wide)


def flow_commutator(K1: ExprLike, K2: ExprLike, conv: JetConvention) -> Expr:
    """K1'[K2] - K2'[K1]"""
    first, second = _commutator_blocks(as_expr(K1), as_expr(K2), conv)
    return first - second


def commutator_residual(K1: ExprLike, K2: ExprLike, conv: JetConvention, jets: Bindings) -> Residual:
    first, second = _commutator_blocks(as_expr(K1), as_expr(K2), conv)
    return residual_from_terms([evaluate(first, jets), -evaluate(second, jets)])

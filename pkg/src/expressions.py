"""
Expression Core
Parsing, exact differentiation and checked evaluation of scalar expressions over
named variables, including jet variables (u, u_t, u_x, u_xx, ...)
"""
import logging
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import sympy
from sympy.printing.str import StrPrinter

from .config import get_settings
from .errors import (DomainViolation, JetOrderOverflow, ParseError, UnboundVariable,
                     UnknownFunction)

logger = logging.getLogger(__name__)

Expr = sympy.Expr
Bindings = Mapping[str, float]
ExprLike = Union[str, int, float, sympy.Basic]


@lru_cache(maxsize=None)
def symbol(name: str) -> sympy.Symbol:
    """Real-valued symbol shared by every module"""
    return sympy.Symbol(name, real=True)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _domain_ok_sqrt(v: sympy.Basic) -> bool:
    return not (v.is_Number and v < 0)


def _domain_ok_ln(v: sympy.Basic) -> bool:
    return not (v.is_Number and v <= 0)


def _domain_ok_arcsin(v: sympy.Basic) -> bool:
    return not (v.is_Number and abs(v) > 1)


def _make_sqrt(arg):
    if _domain_ok_sqrt(arg):
        return sympy.sqrt(arg)
    return sympy.Pow(arg, sympy.S.Half, evaluate=False)


def _make_ln(arg):
    return sympy.log(arg) if _domain_ok_ln(arg) else sympy.log(arg, evaluate=False)


def _make_arcsin(arg):
    return sympy.asin(arg) if _domain_ok_arcsin(arg) else sympy.asin(arg, evaluate=False)


FUNCTIONS: Dict[str, Callable] = {
    "sqrt": _make_sqrt,
    "exp": sympy.exp,
    "ln": _make_ln,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "arcsin": _make_arcsin,
    "abs": sympy.Abs,
}


@dataclass
class _Token:
    kind: str
    text: str
    start: int
    end: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos = 0
    stripped_len = len(text.rstrip())
    while pos < stripped_len:
        match = _TOKEN_RE.match(text, pos)
        if match is None or match.end() == pos:
            offset = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character '{text[offset]}'", _byte_offset(text, offset), text)
        kind = match.lastgroup
        start = match.start(kind)
        tokens.append(_Token(kind, match.group(kind), start, match.end()))
        pos = match.end()
    tokens.append(_Token("eof", "", stripped_len, stripped_len))
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def _make_pow(base, exponent):
    if base.is_Number and exponent.is_Number:
        if (base < 0 and not exponent.is_Integer) or (base == 0 and exponent < 0):
            return sympy.Pow(base, exponent, evaluate=False)
    return sympy.Pow(base, exponent)


class _Parser:
    """Precedence climbing: ^ > unary minus > *, / > +, -"""

    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.index = 0

    def _peek(self) -> _Token:
        return self.tokens[self.index]

    def _next(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _error(self, token: _Token, message: str) -> ParseError:
        return ParseError(message, _byte_offset(self.text, token.start), self.text)

    def parse(self) -> Expr:
        node = self._expr()
        token = self._peek()
        if token.kind != "eof":
            raise self._error(token, f"unexpected '{token.text}'")
        return node

    def _expr(self):
        node = self._term()
        while self._peek().text in ("+", "-") and self._peek().kind == "op":
            op = self._next().text
            rhs = self._term()
            node = node + rhs if op == "+" else node - rhs
        return node

    def _term(self):
        node = self._unary()
        while self._peek().text in ("*", "/") and self._peek().kind == "op":
            op = self._next().text
            rhs = self._unary()
            if op == "*":
                node = node * rhs
            else:
                if rhs.is_Number and rhs == 0:
                    node = sympy.Mul(node, sympy.Pow(rhs, -1, evaluate=False), evaluate=False)
                else:
                    node = node / rhs
        return node

    def _unary(self):
        token = self._peek()
        if token.kind == "op" and token.text in ("-", "+"):
            self._next()
            operand = self._unary()
            return -operand if token.text == "-" else operand
        return self._power()

    def _power(self):
        base = self._atom()
        token = self._peek()
        if token.kind == "op" and token.text == "^":
            self._next()
            exponent = self._unary()
            return _make_pow(base, exponent)
        return base

    def _atom(self):
        token = self._next()
        if token.kind == "number":
            frac = Fraction(token.text)
            return sympy.Rational(frac.numerator, frac.denominator)
        if token.kind == "name":
            if self._peek().kind == "op" and self._peek().text == "(":
                if token.text not in FUNCTIONS:
                    raise UnknownFunction(f"unknown function '{token.text}'",
                                          _byte_offset(self.text, token.start), self.text)
                self._next()
                arg = self._expr()
                self._expect(")")
                return FUNCTIONS[token.text](arg)
            return symbol(token.text)
        if token.kind == "op" and token.text == "(":
            node = self._expr()
            self._expect(")")
            return node
        if token.kind == "eof":
            raise self._error(token, "unexpected end of input")
        raise self._error(token, f"unexpected '{token.text}'")

    def _expect(self, text: str) -> None:
        token = self._next()
        if token.kind != "op" or token.text != text:
            what = "end of input" if token.kind == "eof" else f"'{token.text}'"
            raise self._error(token, f"expected '{text}' but found {what}")


def parse(text: str) -> Expr:
    """Parse infix text into an expression tree

    Raises:
        ParseError: malformed text (offset is a byte offset into the text)
        UnknownFunction: call of a name outside the grammar
    """
    if not isinstance(text, str):
        raise TypeError(f"expected str, got {type(text).__name__}")
    return _Parser(text).parse()


def as_expr(value: ExprLike) -> Expr:
    """Accept text, numbers or sympy expressions"""
    if isinstance(value, sympy.Basic):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, (int, float)):
        return sympy.Float(value) if isinstance(value, float) else sympy.Integer(value)
    raise TypeError(f"cannot convert {type(value).__name__} to an expression")


# ---------------------------------------------------------------------------
# Printing

def _is_atomic_text(node) -> bool:
    if node.is_Symbol:
        return True
    if node.is_Integer and node >= 0:
        return True
    if node.is_Float and node >= 0:
        return True
    return isinstance(node, sympy.Function)


class _GrammarPrinter(StrPrinter):
    """Prints expressions in the parser's grammar"""

    def _wrap(self, node) -> str:
        text = self._print(node)
        return text if _is_atomic_text(node) else f"({text})"

    def _print_Pow(self, expr, rational=False):
        base, exponent = expr.base, expr.exp
        if exponent == sympy.S.Half:
            return f"sqrt({self._print(base)})"
        if exponent == -1:
            return f"1/{self._wrap(base)}"
        if exponent == -sympy.S.Half:
            return f"1/sqrt({self._print(base)})"
        return f"{self._wrap(base)}^{self._wrap(exponent)}"

    def _print_exp(self, expr):
        return f"exp({self._print(expr.args[0])})"

    def _print_log(self, expr):
        return f"ln({self._print(expr.args[0])})"

    def _print_asin(self, expr):
        return f"arcsin({self._print(expr.args[0])})"

    def _print_Abs(self, expr):
        return f"abs({self._print(expr.args[0])})"

    def _print_Exp1(self, expr):
        return "exp(1)"

    def _print_Pi(self, expr):
        return repr(float(expr))


_PRINTER = _GrammarPrinter()


def to_text(e: Expr) -> str:
    """Render an expression in the input grammar"""
    return _PRINTER.doprint(e)


# ---------------------------------------------------------------------------
# Evaluation

Compiled = Callable[[Bindings], float]


def _checked(value: float, node) -> float:
    if not math.isfinite(value):
        raise DomainViolation(to_text(node), "non-finite value")
    return value


def _compile_pow(node) -> Compiled:
    base_fn = _compile(node.base)
    exponent = node.exp
    text = None

    def describe() -> str:
        nonlocal text
        if text is None:
            text = to_text(node)
        return text

    if exponent.is_Integer:
        k = int(exponent)

        def integer_power(b: Bindings) -> float:
            base = base_fn(b)
            if base == 0.0 and k < 0:
                raise DomainViolation(describe(), "division by zero")
            try:
                return _checked(base ** k, node)
            except OverflowError:
                raise DomainViolation(describe(), "overflow")
        return integer_power

    exp_fn = _compile(exponent)

    def real_power(b: Bindings) -> float:
        base = base_fn(b)
        exp_value = exp_fn(b)
        if base < 0.0 and not float(exp_value).is_integer():
            raise DomainViolation(describe(), "negative base with non-integer exponent")
        if base == 0.0 and exp_value < 0.0:
            raise DomainViolation(describe(), "division by zero")
        try:
            return _checked(math.pow(base, exp_value), node)
        except (OverflowError, ValueError):
            raise DomainViolation(describe(), "overflow")
    return real_power


def _sign(v: float) -> float:
    return 0.0 if v == 0.0 else math.copysign(1.0, v)


def _compile_function(node) -> Compiled:
    arg_fn = _compile(node.args[0])
    func = node.func

    def fail(detail: str):
        raise DomainViolation(to_text(node), detail)

    if func is sympy.exp:
        def f_exp(b):
            try:
                return _checked(math.exp(arg_fn(b)), node)
            except OverflowError:
                fail("overflow")
        return f_exp
    if func is sympy.log:
        def f_ln(b):
            v = arg_fn(b)
            if v <= 0.0:
                fail("ln of non-positive value")
            return math.log(v)
        return f_ln
    if func is sympy.asin:
        def f_arcsin(b):
            v = arg_fn(b)
            if abs(v) > 1.0:
                fail("arcsin argument outside [-1, 1]")
            return math.asin(v)
        return f_arcsin
    if func is sympy.sin:
        return lambda b: math.sin(arg_fn(b))
    if func is sympy.cos:
        return lambda b: math.cos(arg_fn(b))
    if func is sympy.Abs:
        return lambda b: abs(arg_fn(b))
    if func is sympy.sign:
        return lambda b: _sign(arg_fn(b))
    raise DomainViolation(to_text(node), f"unsupported function {func.__name__}")


def _compile(node) -> Compiled:
    if node.is_Symbol:
        name = node.name

        def lookup(b: Bindings) -> float:
            try:
                return float(b[name])
            except KeyError:
                raise UnboundVariable(name)
        return lookup
    if node in (sympy.zoo, sympy.nan, sympy.oo, -sympy.oo) or node is sympy.I:
        text = to_text(node)

        def undefined(b: Bindings) -> float:
            raise DomainViolation(text, "not a finite real number")
        return undefined
    if node.is_Number or isinstance(node, sympy.NumberSymbol):
        value = float(node)
        return lambda b: value
    if node.is_Add:
        parts = [_compile(a) for a in node.args]
        return lambda b: _checked(sum(p(b) for p in parts), node)
    if node.is_Mul:
        parts = [_compile(a) for a in node.args]

        def product(b: Bindings) -> float:
            result = 1.0
            for p in parts:
                result *= p(b)
            return _checked(result, node)
        return product
    if node.is_Pow:
        return _compile_pow(node)
    if isinstance(node, sympy.Function):
        return _compile_function(node)
    if node.has(sympy.I):
        text = to_text(node)

        def complex_value(b: Bindings) -> float:
            raise DomainViolation(text, "complex value")
        return complex_value
    raise DomainViolation(str(node), f"unsupported node {type(node).__name__}")


@lru_cache(maxsize=8192)
def compile_expression(e: Expr) -> Compiled:
    """Turn an expression into a checked evaluator closure"""
    return _compile(sympy.sympify(e))


def evaluate(e: Expr, b: Bindings) -> float:
    """Evaluate in IEEE double precision

    Raises:
        UnboundVariable: a free variable has no binding
        DomainViolation: sqrt/ln/arcsin/power outside the real domain,
            division by zero or overflow; names the offending subexpression
    """
    return compile_expression(e)(b)


def free_names(e: Expr) -> frozenset:
    return frozenset(s.name for s in e.free_symbols)


def substitute(e: Expr, values: Mapping[str, ExprLike]) -> Expr:
    """Replace named variables by expressions or numbers"""
    mapping = {symbol(k): as_expr(v) for k, v in values.items()}
    return e.xreplace(mapping)


def differentiate(e: Expr, v: Union[str, sympy.Symbol]) -> Expr:
    """Exact partial derivative"""
    var = symbol(v) if isinstance(v, str) else v
    return sympy.diff(e, var)


# ---------------------------------------------------------------------------
# Jet conventions

_TX_JET = re.compile(r"^u(?:_(x*)(t*))?$")
_INDEXED_JET = re.compile(r"^u(?:_((?:x\d+)+))?$")


@dataclass(frozen=True)
class JetConvention:
    """Names of coordinates and jet variables

    1+1 case: coordinates t, x and jets u, u_t, u_x, u_xx, u_xt, ...
    indexed case: coordinates x0..xn and jets u, u_x0, ..., u_x0x1, ...
    Axis 0 is the evolution coordinate (t or x0).
    """

    n: int = 1
    max_order: int = 4
    indexed: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("spatial dimension n must be >= 1")
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")
        if self.n > 1 and not self.indexed:
            object.__setattr__(self, "indexed", True)

    @classmethod
    def from_settings(cls, n: int = 1, indexed: bool = False) -> "JetConvention":
        return cls(n=n, max_order=get_settings().max_jet_order, indexed=indexed)

    def with_max_order(self, max_order: int) -> "JetConvention":
        return JetConvention(n=self.n, max_order=max_order, indexed=self.indexed)

    @property
    def coordinates(self) -> Tuple[str, ...]:
        if self.indexed:
            return tuple(f"x{i}" for i in range(self.n + 1))
        return ("t", "x")

    @property
    def eta_names(self) -> Tuple[str, ...]:
        if self.indexed:
            return tuple(f"eta{i}" for i in range(1, self.n + 1))
        return ("eta",)

    def first_order(self) -> Tuple[str, ...]:
        """First-order jets in axis order"""
        return tuple(self.jet_name(self.unit(axis)) for axis in range(self.n + 1))

    def unit(self, axis: int) -> Tuple[int, ...]:
        counts = [0] * (self.n + 1)
        counts[axis] = 1
        return tuple(counts)

    def jet_name(self, counts: Sequence[int]) -> str:
        if len(counts) != self.n + 1:
            raise ValueError(f"expected {self.n + 1} derivative counts")
        if sum(counts) == 0:
            return "u"
        if self.indexed:
            return "u_" + "".join(f"x{i}" * c for i, c in enumerate(counts))
        return "u_" + "x" * counts[1] + "t" * counts[0]

    def jet_counts(self, name: str) -> Optional[Tuple[int, ...]]:
        """Derivative counts of a jet name, or None for non-jet names"""
        if self.indexed:
            match = _INDEXED_JET.match(name)
            if match is None:
                return None
            counts = [0] * (self.n + 1)
            if match.group(1):
                indices = [int(i) for i in re.findall(r"x(\d+)", match.group(1))]
                if indices != sorted(indices) or any(i > self.n for i in indices):
                    return None
                for i in indices:
                    counts[i] += 1
            return tuple(counts)
        match = _TX_JET.match(name)
        if match is None or name == "u_":
            return None
        xs, ts = match.group(1) or "", match.group(2) or ""
        return (len(ts), len(xs))

    def is_jet(self, name: str) -> bool:
        return self.jet_counts(name) is not None

    def order(self, name: str) -> int:
        counts = self.jet_counts(name)
        if counts is None:
            raise ValueError(f"'{name}' is not a jet variable")
        return sum(counts)

    def successor(self, name: str, axis: int) -> str:
        counts = self.jet_counts(name)
        if counts is None:
            raise ValueError(f"'{name}' is not a jet variable")
        if sum(counts) + 1 > self.max_order:
            raise JetOrderOverflow(name, self.max_order)
        bumped = list(counts)
        bumped[axis] += 1
        return self.jet_name(bumped)

    def jet_symbols(self, e: Expr) -> List[sympy.Symbol]:
        return sorted((s for s in e.free_symbols if self.is_jet(s.name)), key=lambda s: s.name)

    def expression_order(self, e: Expr) -> int:
        return max((self.order(s.name) for s in self.jet_symbols(e)), default=0)


def total_derivative(e: Expr, conv: JetConvention, axis: int = 1) -> Expr:
    """Chain-rule total derivative along one coordinate axis

    D e = de/dcoord + sum over jets of (de/djet) * successor(jet)

    Raises:
        JetOrderOverflow: a jet of e is already at the convention's cap
    """
    if not 0 <= axis <= conv.n:
        raise ValueError(f"axis {axis} out of range for n={conv.n}")
    coordinate = symbol(conv.coordinates[axis])
    result = sympy.diff(e, coordinate)
    for jet in conv.jet_symbols(e):
        nxt = symbol(conv.successor(jet.name, axis))
        result += sympy.diff(e, jet) * nxt
    return result


def total_x_derivative(e: Expr, conv: JetConvention, axis: int = 1) -> Expr:
    """D_x on jet expressions (axis 1 is x in the 1+1 convention)"""
    return total_derivative(e, conv, axis)

"""
PBS Solver
Primary branch solutions generated from seed solutions by the implicit finite
transformation of the symmetry g(eta)·u_0, eta_a = U_a / U_0, plus the
second-type implicit family of the toy branch
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from scipy.integrate import solve_ivp

from .branches import (BackgroundSolution, Branch, Point, Residual, as_background, as_point,
                       fd_pde_residual)
from .errors import (CausticWarning, ConvergenceFailure, DegenerateSeed, DomainExit, DomainViolation, GridSpecError,
                     ModelValidationError, PBSError, SamplesOutOfDomain, Singularity, SingularJacobian,
                     U0Zero)
from .expressions import (Expr, ExprLike, JetConvention, as_expr, compile_expression, symbol, to_text)
from .numeric import GridField, GridSpec, NewtonConfig, NewtonResult, newton_solve, partial_fd, sample_grid

logger = logging.getLogger(__name__)

HOMOTOPY_STEPS = (0.25, 0.5, 0.75, 1.0)
CAUSTIC_THRESHOLD = 1e-10
RANK_TOLERANCE = 1e-8


@dataclass
class TransformSpec:
    """Seed solution, transform function g(eta) and solver settings"""

    seed: BackgroundSolution
    g: Expr
    newton: NewtonConfig = field(default_factory=NewtonConfig.from_settings)
    epsilon: float = 1.0

    def __post_init__(self):
        self.g = as_expr(self.g)
        conv = self.seed.conv
        stray = sorted(s.name for s in self.g.free_symbols if s.name not in conv.eta_names)
        if stray:
            raise ModelValidationError(to_text(self.g), "g-variables",
                                       f"g may only depend on {', '.join(conv.eta_names)}; found {', '.join(stray)}")
        coords = [symbol(c) for c in conv.coordinates]
        first = [self.seed.jet(name) for name in conv.first_order()]
        etas = [symbol(e) for e in conv.eta_names]
        self._U = compile_expression(self.seed.U)
        self._U1 = tuple(compile_expression(e) for e in first)
        self._U2 = tuple(tuple(compile_expression(sympy.diff(e, c)) for c in coords) for e in first)
        self._g = compile_expression(self.g)
        self._g1 = tuple(compile_expression(sympy.diff(self.g, e)) for e in etas)
        self._g2 = tuple(tuple(compile_expression(sympy.diff(self.g, e, f)) for f in etas) for e in etas)

    @classmethod
    def create(cls, seed: Union[BackgroundSolution, ExprLike], g: ExprLike,
               conv: Optional[JetConvention] = None, epsilon: float = 1.0,
               newton: Optional[NewtonConfig] = None) -> "TransformSpec":
        conv = conv or (seed.conv if isinstance(seed, BackgroundSolution) else JetConvention.from_settings())
        return cls(as_background(seed, conv), as_expr(g), newton or NewtonConfig.from_settings(), epsilon)

    @property
    def conv(self) -> JetConvention:
        return self.seed.conv

    @property
    def n(self) -> int:
        return self.conv.n

    def bind(self, z: Sequence[float]) -> Dict[str, float]:
        return {c: float(v) for c, v in zip(self.conv.coordinates, z)}

    def seed_gradient(self, z: Sequence[float]) -> np.ndarray:
        b = self.bind(z)
        return np.array([f(b) for f in self._U1])

    def seed_hessian(self, z: Sequence[float]) -> np.ndarray:
        b = self.bind(z)
        return np.array([[f(b) for f in row] for row in self._U2])

    def seed_value(self, z: Sequence[float]) -> float:
        return self._U(self.bind(z))

    def eta_at(self, z: Sequence[float]) -> np.ndarray:
        grad = self.seed_gradient(z)
        if grad[0] == 0.0:
            raise U0Zero(f"U_0 = 0 at {self.bind(z)}")
        return grad[1:] / grad[0]

    def g_values(self, eta: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        b = dict(zip(self.conv.eta_names, (float(e) for e in eta)))
        return (self._g(b), np.array([f(b) for f in self._g1]),
                np.array([[f(b) for f in row] for row in self._g2]))

    def field_at(self, eta: np.ndarray) -> np.ndarray:
        """X_0 = g - sum eta_b g_b, X_a = g_a"""
        g, g1, _ = self.g_values(eta)
        return np.concatenate([[g - float(eta @ g1)], g1])

    def residual(self, z: np.ndarray, x: np.ndarray, scale: float = 1.0) -> np.ndarray:
        return z - x + scale * self.epsilon * self.field_at(self.eta_at(z))

    def jacobian(self, z: np.ndarray, scale: float = 1.0) -> np.ndarray:
        grad = self.seed_gradient(z)
        hess = self.seed_hessian(z)
        if grad[0] == 0.0:
            raise U0Zero(f"U_0 = 0 at {self.bind(z)}")
        eta = grad[1:] / grad[0]
        _, _, g2 = self.g_values(eta)
        d_eta = (hess[1:, :] * grad[0] - np.outer(grad[1:], hess[0, :])) / grad[0] ** 2
        d_field = np.vstack([-(eta @ g2), g2])
        return np.eye(self.n + 1) + scale * self.epsilon * d_field @ d_eta

    def check_seed(self, sample_points: Sequence[Point]) -> None:
        require_nondegenerate(self.seed, sample_points)


@dataclass
class PrimedCoords:
    """Root of the primed-coordinate system at one point"""

    point: Dict[str, float]
    primed: np.ndarray
    eta: np.ndarray
    iterations: int
    residual: float
    coordinates: Tuple[str, ...]
    homotopy: bool = False
    alternates: List[np.ndarray] = field(default_factory=list)

    @property
    def primed_point(self) -> Dict[str, float]:
        return {c: float(v) for c, v in zip(self.coordinates, self.primed)}


@dataclass
class JacobianReport:
    """Jacobian of the primed map at a point"""

    primed: PrimedCoords
    Delta: float
    delta: Optional[float] = None
    delta1: Optional[float] = None
    delta2: Optional[float] = None
    partials: Optional[np.ndarray] = None
    caustic: bool = False


def _solve(ts: TransformSpec, x: np.ndarray, z0: np.ndarray, scale: float) -> NewtonResult:
    return newton_solve(lambda z: ts.residual(z, x, scale), z0, ts.newton,
                        lambda z: ts.jacobian(z, scale))


def solve_primed_coords(ts: TransformSpec, p: Point, initial: Optional[Sequence[float]] = None) -> PrimedCoords:
    """Solve x0' = x0 - g + sum eta_b g_b, x_a' = x_a - g_a with eta at the primed point

    Newton starts from the unprimed point; when that fails the solve is
    repeated along lambda·g for lambda in 1/4, 1/2, 3/4, 1.

    Raises:
        ConvergenceFailure, SingularJacobian, U0Zero, DomainExit
    """
    point = as_point(p, ts.conv)
    x = np.array([point[c] for c in ts.conv.coordinates])
    z0 = x.copy() if initial is None else np.asarray(initial, dtype=float)
    homotopy = False
    try:
        result = _solve(ts, x, z0, 1.0)
    except U0Zero:
        raise
    except (ConvergenceFailure, SingularJacobian, DomainExit) as exc:
        logger.warning("direct primed solve failed at %s (%s); continuing along lambda·g", point, exc)
        homotopy = True
        z = x.copy()
        for lam in HOMOTOPY_STEPS:
            result = _solve(ts, x, z, lam)
            z = result.x
    return PrimedCoords(point=point, primed=result.x, eta=ts.eta_at(result.x), iterations=result.iterations,
                        residual=result.residual, coordinates=ts.conv.coordinates, homotopy=homotopy)


def search_alternates(ts: TransformSpec, primed: PrimedCoords, spread: float = 0.5,
                      distinct: float = 1e-6) -> List[np.ndarray]:
    """Other roots reached from starts offset along each axis; stored on primed.alternates"""
    x = np.array([primed.point[c] for c in ts.conv.coordinates])
    found: List[np.ndarray] = []
    for axis in range(ts.n + 1):
        for sign in (1.0, -1.0):
            start = x.copy()
            start[axis] += sign * spread * (1.0 + abs(x[axis]))
            try:
                root = _solve(ts, x, start, 1.0).x
            except PBSError:
                continue
            if all(np.max(np.abs(root - r)) > distinct for r in [primed.primed] + found):
                found.append(root)
    primed.alternates = found
    return found


def evaluate_pbs_details(ts: TransformSpec, p: Point,
                         initial: Optional[Sequence[float]] = None) -> Tuple[float, PrimedCoords]:
    primed = solve_primed_coords(ts, p, initial)
    return ts.seed_value(primed.primed), primed


def evaluate_pbs(ts: TransformSpec, p: Point, initial: Optional[Sequence[float]] = None) -> float:
    """u'(p) = U(primed point)"""
    return evaluate_pbs_details(ts, p, initial)[0]


def jacobian_delta(ts: TransformSpec, p: Point, primed: Optional[PrimedCoords] = None) -> JacobianReport:
    """Closed-form Jacobian of the 1+1 primed map, Delta = U_0^3 / delta

    Emits CausticWarning when |delta| < 1e-10·scale.
    """
    if ts.n != 1:
        raise ValueError("closed-form Jacobian needs one spatial dimension; use fd_jacobian_report")
    primed = primed or solve_primed_coords(ts, p)
    z = primed.primed
    (U0, U1), hess = ts.seed_gradient(z), ts.seed_hessian(z)
    U00, U01, U10, U11 = hess[0, 0], hess[0, 1], hess[1, 0], hess[1, 1]
    _, _, g2 = ts.g_values(ts.eta_at(z))
    gpp = ts.epsilon * g2[0, 0]
    terms = (U0 ** 3, gpp * U0 ** 2 * U11, gpp * U00 * U1 ** 2, -2.0 * gpp * U0 * U1 * U10)
    delta = sum(terms)
    delta1 = gpp * U1 * (U0 * U10 - U1 * U00)
    delta2 = gpp * U1 * (U0 * U11 - U1 * U10)
    scale = max(abs(t) for t in terms)
    caustic = abs(delta) < CAUSTIC_THRESHOLD * scale
    if caustic:
        warnings.warn(CausticWarning(f"delta = {delta:.3e} at {primed.point}: primed map not invertible"))
        logger.warning("caustic at %s (delta = %.3e)", primed.point, delta)
    if delta == 0.0:
        return JacobianReport(primed, math.copysign(math.inf, U0 ** 3), delta, delta1, delta2, None, True)
    partials = np.array([
        [(delta + delta1) / delta, delta2 / delta],
        [-gpp * U0 * (U0 * U10 - U1 * U00) / delta, (U0 ** 3 - delta1) / delta],
    ])
    return JacobianReport(primed, U0 ** 3 / delta, delta, delta1, delta2, partials, caustic)


def fd_primed_jacobian(ts: TransformSpec, p: Point, h: float = 1e-5,
                       primed: Optional[PrimedCoords] = None) -> np.ndarray:
    """Central differences of the primed map; rows primed axes, columns unprimed axes"""
    point = as_point(p, ts.conv)
    primed = primed or solve_primed_coords(ts, point)
    columns = []
    for c in ts.conv.coordinates:
        up, down = dict(point), dict(point)
        up[c] += h
        down[c] -= h
        z_up = solve_primed_coords(ts, up, primed.primed).primed
        z_down = solve_primed_coords(ts, down, primed.primed).primed
        columns.append((z_up - z_down) / (2.0 * h))
    return np.column_stack(columns)


def fd_jacobian_report(ts: TransformSpec, p: Point, h: float = 1e-5,
                       primed: Optional[PrimedCoords] = None) -> JacobianReport:
    primed = primed or solve_primed_coords(ts, p)
    matrix = fd_primed_jacobian(ts, p, h, primed)
    return JacobianReport(primed, float(np.linalg.det(matrix)), partials=matrix)


def jacobian_report(ts: TransformSpec, p: Point, primed: Optional[PrimedCoords] = None) -> JacobianReport:
    if ts.n == 1:
        return jacobian_delta(ts, p, primed)
    return fd_jacobian_report(ts, p, primed=primed)


def derivative_transport_check(ts: TransformSpec, p: Point, h: float = 1e-5) -> Dict[str, float]:
    """|FD_i u'(p) - U_i(primed point)| for every coordinate, with Richardson-extrapolated differences"""
    point = as_point(p, ts.conv)
    primed = solve_primed_coords(ts, point)
    grad = ts.seed_gradient(primed.primed)
    gaps = {}
    for axis, c in enumerate(ts.conv.coordinates):
        fd = partial_fd(lambda q: evaluate_pbs(ts, q, primed.primed), point, c, h=h, extrapolate=True)
        gaps[c] = abs(fd - grad[axis])
    return gaps


def fd_transform_residual(ts: TransformSpec, branch: Branch, p: Point, h: float = 1e-5,
                          primed: Optional[PrimedCoords] = None) -> Residual:
    """PDE residual of u' with central-difference derivatives"""
    primed = primed or solve_primed_coords(ts, p)
    return fd_pde_residual(branch, lambda q: evaluate_pbs(ts, q, primed.primed), p, h)


# ---------------------------------------------------------------------------
# Generator and flow

def transform_generator(ts: TransformSpec) -> Expr:
    """sigma = g(u_1/u_0, ..., u_n/u_0)·u_0"""
    first = [symbol(j) for j in ts.conv.first_order()]
    ratios = {symbol(e): j / first[0] for e, j in zip(ts.conv.eta_names, first[1:])}
    return ts.g.xreplace(ratios) * first[0]


def characteristic_field(ts: TransformSpec, seed_point: Point) -> np.ndarray:
    """X(eta) at a seed point"""
    q = as_point(seed_point, ts.conv)
    return ts.field_at(ts.eta_at([q[c] for c in ts.conv.coordinates]))


def lift_point(ts: TransformSpec, seed_point: Point) -> Dict[str, float]:
    """Unprimed point x = x' + eps·X(eta(x')) whose primed image is seed_point"""
    q = as_point(seed_point, ts.conv)
    z = np.array([q[c] for c in ts.conv.coordinates])
    return ts.bind(z + ts.epsilon * characteristic_field(ts, q))


def flow_point(ts: TransformSpec, seed_point: Point, eps: Optional[float] = None) -> Dict[str, float]:
    """Integrate dx/de = X, du/de = 0, du_i/de = 0 from a seed point"""
    eps = ts.epsilon if eps is None else eps
    q = as_point(seed_point, ts.conv)
    z = np.array([q[c] for c in ts.conv.coordinates])
    n1 = ts.n + 1
    state0 = np.concatenate([z, [ts.seed_value(z)], ts.seed_gradient(z)])

    def rhs(_, state):
        grads = state[n1 + 1:]
        out = np.zeros_like(state)
        out[:n1] = ts.field_at(grads[1:] / grads[0])
        return out

    solution = solve_ivp(rhs, (0.0, eps), state0, rtol=1e-12, atol=1e-12)
    if not solution.success:
        raise ConvergenceFailure(len(solution.t), math.nan)
    end = solution.y[:, -1]
    point = ts.bind(end[:n1])
    point["u"] = float(end[n1])
    return point


# ---------------------------------------------------------------------------
# Degenerate seeds

def _eta_function(bg: BackgroundSolution):
    first = [compile_expression(bg.jet(name)) for name in bg.conv.first_order()]

    def eta(point: Dict[str, float]) -> np.ndarray:
        grad = np.array([f(point) for f in first])
        if grad[0] == 0.0:
            raise U0Zero(f"U_0 = 0 at {point}")
        return grad[1:] / grad[0]

    return eta


def eta_rank(bg: BackgroundSolution, p: Point, h: float = 1e-6) -> int:
    """Numeric rank of the eta-map Jacobian at a point"""
    eta = _eta_function(bg)
    point = as_point(p, bg.conv)
    columns = []
    for c in bg.conv.coordinates:
        up, down = dict(point), dict(point)
        up[c] += h
        down[c] -= h
        columns.append((eta(up) - eta(down)) / (2.0 * h))
    singular = np.linalg.svd(np.column_stack(columns), compute_uv=False)
    return int(np.sum(singular > RANK_TOLERANCE))


def detect_degenerate_seed(seed: Union[BackgroundSolution, ExprLike], n: int,
                           sample_points: Sequence[Point], conv: Optional[JetConvention] = None) -> bool:
    """True when the eta-map has rank < n at every in-domain sample

    Raises:
        SamplesOutOfDomain: no sample point is inside the seed's domain
    """
    conv = conv or (seed.conv if isinstance(seed, BackgroundSolution) else JetConvention.from_settings(n=n))
    bg = as_background(seed, conv)
    ranks = []
    for p in sample_points:
        try:
            ranks.append(eta_rank(bg, p))
        except (PBSError, ArithmeticError, ValueError) as exc:
            logger.debug("degeneracy sample %s out of domain: %s", p, exc)
    if not ranks:
        raise SamplesOutOfDomain(f"no sample point inside the domain of {to_text(bg.U)}")
    return all(r < n for r in ranks)


def require_nondegenerate(seed: BackgroundSolution, sample_points: Sequence[Point]) -> None:
    if detect_degenerate_seed(seed, seed.conv.n, sample_points):
        if seed.conv.n == 1:
            need = "U_x/U_t must not be constant"
        else:
            need = "the ratios U_a/U_0 must be functionally independent"
        raise DegenerateSeed(f"seed {to_text(seed.U)} is degenerate: {need}, so it yields no new solution")


# ---------------------------------------------------------------------------
# Grid generation

def sample_transform(ts: TransformSpec, spec: GridSpec, branch: Optional[Branch] = None, h: float = 1e-5,
                     workers: Optional[int] = None) -> GridField:
    """u', primed coordinates, Delta and (with a branch) the relative FD residual per cell"""
    coords = ts.conv.coordinates
    if tuple(sorted(spec.names)) != tuple(sorted(coords)):
        raise GridSpecError(f"grid axes {spec.names} do not match coordinates {coords}")

    def cell(point: Dict[str, float]) -> Dict[str, float]:
        value, primed = evaluate_pbs_details(ts, point)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CausticWarning)
            report = jacobian_report(ts, point, primed)
        if report.caustic:
            raise Singularity(f"caustic at {point}")
        out = {"u": value}
        out.update({f"{c}prime": float(v) for c, v in zip(coords, primed.primed)})
        out["delta"] = report.Delta
        if branch is not None:
            out["residual"] = fd_transform_residual(ts, branch, point, h, primed).relative
        return out

    return sample_grid(cell, spec, primary="u", workers=workers)


# ---------------------------------------------------------------------------
# Second-type family

@dataclass
class Type2Spec:
    """u = R·sqrt(2 xi + 2t), x = 2(xi + t)·R + v

    with w = -xi - 2t, v = Y^-1(a + Y(w)) and R = S(v)/S(w) = Y'(w)/Y'(v).
    """

    Y: Expr
    a: float
    newton: NewtonConfig = field(default_factory=NewtonConfig.from_settings)
    bracket: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        self.Y = as_expr(self.Y)
        stray = sorted(s.name for s in self.Y.free_symbols if s.name != "y")
        if stray:
            raise ModelValidationError(to_text(self.Y), "Y-variables", f"Y may only depend on y; found {stray}")
        y = symbol("y")
        self.Yp = sympy.diff(self.Y, y)
        self.S = 1 / self.Yp
        self._Y = compile_expression(self.Y)
        self._Yp = compile_expression(self.Yp)
        if self.bracket is not None:
            samples = [self._Yp({"y": float(v)}) for v in np.linspace(*self.bracket, 33)]
            if min(samples) * max(samples) <= 0.0:
                raise ModelValidationError(to_text(self.Y), "Y-monotone",
                                           f"Y' changes sign or vanishes on {self.bracket}")
        self._inverse_cfg = self.newton.with_bracket(self.bracket)

    def inverse(self, target: float, guess: float) -> float:
        """Y^-1(target) by Newton from guess"""
        result = newton_solve(lambda v: np.array([self._Y({"y": v[0]}) - target]), guess, self._inverse_cfg,
                              lambda v: np.array([[self._Yp({"y": v[0]})]]))
        return result.scalar

    def components(self, xi: float, t: float, a: Optional[float] = None) -> Tuple[float, float]:
        a = self.a if a is None else a
        w = -xi - 2.0 * t
        v = self.inverse(a + self._Y({"y": w}), w)
        denominator = self._Yp({"y": v})
        if denominator == 0.0:
            raise Singularity(f"Y'(v) = 0 at v = {v}")
        return v, self._Yp({"y": w}) / denominator

    def x_of(self, xi: float, t: float, a: Optional[float] = None) -> float:
        v, ratio = self.components(xi, t, a)
        return 2.0 * (xi + t) * ratio + v

    def u_of(self, xi: float, t: float, a: Optional[float] = None) -> float:
        _, ratio = self.components(xi, t, a)
        radicand = 2.0 * xi + 2.0 * t
        if radicand < 0.0:
            raise DomainViolation("sqrt(2*xi + 2*t)", f"radicand {radicand:.3e} < 0")
        return ratio * math.sqrt(radicand)


def solve_type2_xi(t2: Type2Spec, p: Point) -> float:
    """Root xi of x = 2(xi + t)·R + v, Newton from xi = x with a homotopy in a"""
    x, t = float(p["x"]), float(p["t"])

    def solve(a: float, start: float) -> float:
        return newton_solve(lambda z: np.array([t2.x_of(z[0], t, a) - x]), start, t2.newton).scalar

    try:
        return solve(t2.a, x)
    except (ConvergenceFailure, SingularJacobian, DomainExit) as exc:
        logger.warning("type-2 solve failed at %s (%s); continuing in a", dict(p), exc)
        xi = x
        for lam in HOMOTOPY_STEPS:
            xi = solve(lam * t2.a, xi)
        return xi


def evaluate_type2_pbs(t2: Type2Spec, p: Point) -> float:
    xi = solve_type2_xi(t2, p)
    return t2.u_of(xi, float(p["t"]))

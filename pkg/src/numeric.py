"""
Numeric Kernel
Damped Newton root finding, adaptive quadrature, central finite differences and
grid sampling shared by the higher modules
"""
import itertools
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .config import get_settings
from .errors import (BracketFailure, ConfigurationError, ConvergenceFailure, DepthExhausted,
                     DomainExit, GridSpecError, NumericError, PBSError, SingularJacobian)

logger = logging.getLogger(__name__)

VectorFunction = Callable[[np.ndarray], Union[np.ndarray, Sequence[float], float]]
MatrixFunction = Callable[[np.ndarray], Union[np.ndarray, Sequence[Sequence[float]], float]]


# ---------------------------------------------------------------------------
# Newton

@dataclass(frozen=True)
class NewtonConfig:
    """Damped Newton settings"""

    abs_tolerance: float = 1e-12
    max_iterations: int = 50
    step_tolerance: float = 1e-8
    damping: float = 0.5
    max_halvings: int = 20
    bracket: Optional[Tuple[float, float]] = None
    condition_limit: float = 1e14
    fd_step: float = 1e-7

    def __post_init__(self):
        if not self.abs_tolerance > 0:
            raise ConfigurationError("abs_tolerance must be > 0")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if not 0 < self.damping < 1:
            raise ConfigurationError("damping must lie in (0, 1)")
        if self.bracket is not None and not self.bracket[0] < self.bracket[1]:
            raise ConfigurationError("bracket must be an increasing pair")

    @classmethod
    def from_settings(cls, **overrides) -> "NewtonConfig":
        settings = get_settings()
        values = dict(abs_tolerance=settings.newton_tolerance,
                      max_iterations=settings.newton_max_iterations,
                      step_tolerance=settings.newton_step_tolerance)
        values.update(overrides)
        return cls(**values)

    def with_bracket(self, bracket: Optional[Tuple[float, float]]) -> "NewtonConfig":
        return replace(self, bracket=None if bracket is None else (float(bracket[0]), float(bracket[1])))


@dataclass
class NewtonResult:
    """Root plus solver diagnostics"""

    x: np.ndarray
    iterations: int
    residual: float
    history: List[np.ndarray] = field(default_factory=list)
    used_bracket: bool = False

    @property
    def scalar(self) -> float:
        return float(self.x[0])


def _call_vector(fun: VectorFunction, z: np.ndarray) -> np.ndarray:
    try:
        value = np.atleast_1d(np.asarray(fun(z), dtype=float))
    except DomainExit:
        raise
    except (NumericError, ArithmeticError, ValueError) as exc:
        raise DomainExit(f"residual undefined at {z.tolist()}: {exc}") from exc
    if not np.all(np.isfinite(value)):
        raise DomainExit(f"residual not finite at {z.tolist()}")
    return value


def fd_jacobian(fun: VectorFunction, z: np.ndarray, step: float = 1e-7) -> np.ndarray:
    """Central-difference Jacobian, one-sided where the function leaves its domain"""
    z = np.asarray(z, dtype=float)
    base = None
    columns = []
    for j in range(z.size):
        h = step * (1.0 + abs(z[j]))
        e = np.zeros_like(z)
        e[j] = h
        try:
            column = (_call_vector(fun, z + e) - _call_vector(fun, z - e)) / (2.0 * h)
        except DomainExit:
            if base is None:
                base = _call_vector(fun, z)
            try:
                column = (_call_vector(fun, z + e) - base) / h
            except DomainExit:
                column = (base - _call_vector(fun, z - e)) / h
        columns.append(column)
    return np.column_stack(columns)


def _newton(fun: VectorFunction, z0: np.ndarray, cfg: NewtonConfig,
            jacobian: Optional[MatrixFunction]) -> NewtonResult:
    z = np.array(z0, dtype=float)
    r = _call_vector(fun, z)
    history = [z.copy()]
    iterations = 0
    while True:
        norm_r = float(np.max(np.abs(r)))
        if jacobian is None:
            J = fd_jacobian(fun, z, cfg.fd_step)
        else:
            J = np.atleast_2d(np.asarray(jacobian(z), dtype=float))
        if not np.all(np.isfinite(J)):
            raise SingularJacobian(math.inf)
        condition = float(np.linalg.cond(J))
        if not math.isfinite(condition) or condition > cfg.condition_limit:
            raise SingularJacobian(condition)
        step = np.linalg.solve(J, -r)
        step_norm = float(np.max(np.abs(step)))
        if norm_r <= cfg.abs_tolerance and step_norm <= cfg.step_tolerance * (1.0 + float(np.max(np.abs(z)))):
            return NewtonResult(x=z, iterations=iterations, residual=norm_r, history=history)
        if iterations >= cfg.max_iterations:
            raise ConvergenceFailure(iterations, norm_r)

        lam = 1.0
        fallback = None
        accepted = None
        for halving in range(cfg.max_halvings + 1):
            trial = z + lam * step
            try:
                r_trial = _call_vector(fun, trial)
            except DomainExit:
                lam *= cfg.damping
                continue
            norm_trial = float(np.max(np.abs(r_trial)))
            if norm_trial < norm_r or norm_trial <= cfg.abs_tolerance:
                accepted = (trial, r_trial)
                break
            fallback = (trial, r_trial)
            lam *= cfg.damping
        if accepted is None:
            if fallback is None:
                raise DomainExit(f"line search left the domain at iteration {iterations + 1}")
            accepted = fallback
        z, r = accepted
        iterations += 1
        history.append(z.copy())
        logger.debug("newton iteration %d: |r|=%.3e |step|=%.3e lambda=%g",
                     iterations, float(np.max(np.abs(r))), step_norm, lam)


def newton_solve(residual: VectorFunction, initial: Union[float, Sequence[float], np.ndarray],
                 cfg: Optional[NewtonConfig] = None,
                 jacobian: Optional[MatrixFunction] = None) -> NewtonResult:
    """Solve residual(z) = 0 by damped Newton

    Args:
        residual: vector function of a numpy vector
        initial: starting point
        cfg: solver settings (defaults from the environment)
        jacobian: exact Jacobian; finite differences are used when omitted

    Returns:
        NewtonResult with the root, iteration count and residual norm

    Raises:
        ConvergenceFailure, SingularJacobian, DomainExit, BracketFailure
    """
    cfg = cfg or NewtonConfig.from_settings()
    z0 = np.atleast_1d(np.asarray(initial, dtype=float))
    try:
        return _newton(residual, z0, cfg, jacobian)
    except (ConvergenceFailure, SingularJacobian, DomainExit) as exc:
        if cfg.bracket is None or z0.size != 1:
            raise
        logger.warning("newton failed (%s); falling back to bracket %s", exc, cfg.bracket)
        return _bracket_solve(residual, cfg)


def _bracket_solve(residual: VectorFunction, cfg: NewtonConfig) -> NewtonResult:
    a, b = cfg.bracket

    def scalar(s: float) -> float:
        return float(_call_vector(residual, np.array([s]))[0])

    try:
        root, info = brentq(scalar, a, b, xtol=1e-14, maxiter=200, full_output=True)
    except DomainExit as exc:
        raise BracketFailure(f"function undefined inside bracket [{a}, {b}]: {exc}")
    except ValueError as exc:
        raise BracketFailure(f"no sign change in [{a}, {b}]: {exc}")
    value = abs(scalar(root))
    return NewtonResult(x=np.array([root]), iterations=int(info.iterations), residual=value,
                        history=[np.array([root])], used_bracket=True)


# ---------------------------------------------------------------------------
# Quadrature

@dataclass(frozen=True)
class QuadratureConfig:
    """Adaptive quadrature settings

    max_subintervals is the QUADPACK limit on the number of subintervals
    the adaptive Gauss-Kronrod scheme may create.
    """

    rel_tolerance: float = 1e-10
    max_subintervals: int = 40
    abs_tolerance: float = 1e-14

    def __post_init__(self):
        if not self.rel_tolerance > 0:
            raise ConfigurationError("rel_tolerance must be > 0")
        if self.max_subintervals < 1:
            raise ConfigurationError("max_subintervals must be >= 1")

    @classmethod
    def from_settings(cls, **overrides) -> "QuadratureConfig":
        settings = get_settings()
        values = dict(rel_tolerance=settings.quad_rel_tolerance, max_subintervals=settings.quad_max_subintervals)
        values.update(overrides)
        return cls(**values)


def integrate(f: Callable[[float], float], a: float, b: float,
              cfg: Optional[QuadratureConfig] = None) -> float:
    """Adaptive Gauss-Kronrod estimate of the integral of f over [a, b]

    Raises:
        DepthExhausted: tolerance not reached; carries the subinterval with the
            largest error estimate
    """
    cfg = cfg or QuadratureConfig.from_settings()
    a, b = float(a), float(b)
    if a == b:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        result = quad(lambda s: float(f(s)), a, b, epsabs=cfg.abs_tolerance,
                      epsrel=cfg.rel_tolerance, limit=cfg.max_subintervals, full_output=1)
    value, info = result[0], result[2]
    failed = len(result) > 3
    if failed or not math.isfinite(value):
        interval = (min(a, b), max(a, b))
        if isinstance(info, dict) and "elist" in info and info.get("last", 0) > 0:
            last = int(info["last"])
            worst = int(np.argmax(np.asarray(info["elist"][:last])))
            interval = (float(info["alist"][worst]), float(info["blist"][worst]))
        detail = result[3] if failed else "non-finite estimate"
        raise DepthExhausted(interval, str(detail).splitlines()[0] if detail else "")
    if info.get("last", 1) > 1:
        logger.debug("quadrature on [%g, %g] used %d subintervals", a, b, info["last"])
    return float(value)


# ---------------------------------------------------------------------------
# Finite differences

def central_fd(f: Callable[[float], float], at: float, order: int = 1, h: Optional[float] = None) -> float:
    """O(h^2) central difference of order 1 or 2"""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    h = h if h is not None else get_settings().fd_step

    def value(s: float) -> float:
        try:
            v = float(f(s))
        except (PBSError, ArithmeticError, ValueError) as exc:
            raise DomainExit(f"function undefined at {s!r}: {exc}") from exc
        if not math.isfinite(v):
            raise DomainExit(f"function not finite at {s!r}")
        return v

    if order == 1:
        return (value(at + h) - value(at - h)) / (2.0 * h)
    return (value(at + h) - 2.0 * value(at) + value(at - h)) / (h * h)


def richardson_fd(f: Callable[[float], float], at: float, order: int = 1, h: Optional[float] = None) -> float:
    """O(h^4) estimate (4 D(h/2) - D(h)) / 3 from two central differences"""
    h = h if h is not None else get_settings().fd_step
    return (4.0 * central_fd(f, at, order, h / 2.0) - central_fd(f, at, order, h)) / 3.0


def partial_fd(f: Callable[[Mapping[str, float]], float], point: Mapping[str, float], name: str,
               order: int = 1, h: Optional[float] = None, extrapolate: bool = False) -> float:
    """Central difference of a point function along one named coordinate (Richardson-extrapolated on request)"""
    base = dict(point)

    def along(s: float) -> float:
        base[name] = s
        return f(dict(base))

    if extrapolate:
        return richardson_fd(along, float(point[name]), order=order, h=h)
    return central_fd(along, float(point[name]), order=order, h=h)


# ---------------------------------------------------------------------------
# Grids

@dataclass(frozen=True)
class GridAxis:
    name: str
    start: float
    stop: float
    count: int

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)

    def __str__(self) -> str:
        return f"{self.name}:{self.start!r}:{self.stop!r}:{self.count}"


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid, row-major in axis-declaration order"""

    axes: Tuple[GridAxis, ...]

    def __post_init__(self):
        if not self.axes:
            raise GridSpecError("grid needs at least one axis")
        names = [axis.name for axis in self.axes]
        if len(set(names)) != len(names):
            raise GridSpecError(f"duplicate axis names in {names}")
        for axis in self.axes:
            if axis.count < 1:
                raise GridSpecError(f"axis '{axis.name}' needs count >= 1")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse "name:start:stop:count" items joined by commas"""
        axes = []
        for item in text.split(","):
            parts = item.strip().split(":")
            if len(parts) != 4 or not parts[0]:
                raise GridSpecError(f"bad grid axis '{item.strip()}'; expected name:start:stop:count")
            name, start, stop, count = parts
            try:
                axes.append(GridAxis(name.strip(), float(start), float(stop), int(count)))
            except ValueError:
                raise GridSpecError(f"bad numbers in grid axis '{item.strip()}'")
        return cls(tuple(axes))

    def __str__(self) -> str:
        return ",".join(str(axis) for axis in self.axes)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(axis.name for axis in self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(axis.count for axis in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> Iterator[Dict[str, float]]:
        for combo in itertools.product(*(axis.values for axis in self.axes)):
            yield {name: float(v) for name, v in zip(self.names, combo)}


@dataclass
class GridField:
    """Sampled channels on a grid with a validity mask and per-cell reason codes"""

    spec: GridSpec
    channels: Dict[str, np.ndarray]
    mask: np.ndarray
    reasons: np.ndarray
    primary: str = "value"

    @property
    def values(self) -> np.ndarray:
        return self.channels[self.primary]

    @property
    def valid_count(self) -> int:
        return int(self.mask.sum())

    def to_frame(self) -> pd.DataFrame:
        """Flat table: axis columns, channels, reason"""
        grids = np.meshgrid(*(axis.values for axis in self.spec.axes), indexing="ij")
        data = {name: grid.ravel() for name, grid in zip(self.spec.names, grids)}
        for name, values in self.channels.items():
            data[name] = np.where(self.mask, values, np.nan).ravel()
        data["reason"] = self.reasons.ravel()
        return pd.DataFrame(data)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n", na_rep="")
        return path

    def to_dict(self) -> Dict:
        frame = self.to_frame().astype(object)
        frame = frame.where(pd.notnull(frame), None)
        return {"grid": str(self.spec), "primary": self.primary, "rows": frame.to_dict("records")}


def sample_grid(f: Callable[[Dict[str, float]], Union[float, Mapping[str, float]]], spec: GridSpec,
                primary: str = "value", workers: Optional[int] = None) -> GridField:
    """Evaluate f on every cell; failures become masked cells with a reason code"""
    points = list(spec.points())
    workers = workers or get_settings().grid_workers

    def cell(point: Dict[str, float]):
        try:
            out = f(point)
        except (PBSError, ArithmeticError, ValueError) as exc:
            return None, type(exc).__name__
        values = {primary: float(out)} if not isinstance(out, Mapping) else {k: float(v) for k, v in out.items()}
        if not math.isfinite(values.get(primary, math.nan)):
            return None, "NonFinite"
        return values, ""

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(cell, points))
    else:
        results = [cell(p) for p in points]

    names: List[str] = []
    for values, _ in results:
        if values:
            names.extend(k for k in values if k not in names)
    if primary not in names:
        names.insert(0, primary)
    channels = {name: np.full(spec.size, np.nan) for name in names}
    mask = np.zeros(spec.size, dtype=bool)
    reasons = np.empty(spec.size, dtype=object)
    for i, (values, reason) in enumerate(results):
        reasons[i] = reason
        if values is None:
            logger.debug("masked cell %s: %s", points[i], reason)
            continue
        mask[i] = True
        for name, v in values.items():
            channels[name][i] = v
    return GridField(spec=spec,
                     channels={k: v.reshape(spec.shape) for k, v in channels.items()},
                     mask=mask.reshape(spec.shape), reasons=reasons.reshape(spec.shape),
                     primary=primary)

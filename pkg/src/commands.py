"""
Command Runners
RunReport and the verify / transform / symmetry / invariant / hierarchy /
hereditary / catalog runners shared by the CLI and the REST API
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import catalog
from .branches import Branch1D, BackgroundSolution, Residual, linearized_residual, pde_residual
from .config import get_settings
from .errors import GridSpecError, ModelValidationError, NumericError, SamplesOutOfDomain
from .expressions import to_text
from .invariants import build_A, build_B, build_G, defining_residual, invariant_residual
from .numeric import GridField, GridSpec
from .recursion import RecursionSpec, hereditary_trials, hierarchy, require_regular
from .transforms import TransformSpec, require_nondegenerate, sample_transform

logger = logging.getLogger(__name__)

PointDict = Dict[str, float]


@dataclass
class CheckRecord:
    name: str
    points: int
    max_residual: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class RunReport:
    """Outcome of one command"""

    command: str
    arguments: Dict[str, Any] = field(default_factory=dict)
    checks: List[CheckRecord] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    data: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def exit_status(self) -> int:
        return 0 if self.passed else 1

    def add_check(self, name: str, residuals: Sequence[float], tolerance: float, detail: str = "") -> CheckRecord:
        """Record a residual check; residuals are already scale-relative"""
        worst = max((abs(float(r)) for r in residuals), default=float("nan"))
        record = CheckRecord(name, len(residuals), worst, tolerance, bool(residuals) and worst <= tolerance, detail)
        self.checks.append(record)
        return record

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "arguments": self.arguments,
            "checks": [_check_dict(c) for c in self.checks],
            "outputs": list(self.outputs),
            "data": self.data,
            "passed": self.passed,
            "exit_status": self.exit_status,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def render(self) -> str:
        lines = [f"{self.command}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            mark = "ok  " if c.passed else "FAIL"
            lines.append(f"  [{mark}] {c.name}: {c.points} points, max residual {c.max_residual:.3e} "
                         f"(tolerance {c.tolerance:.1e}){' - ' + c.detail if c.detail else ''}")
        for key, value in self.data.items():
            if isinstance(value, list) and value and isinstance(value[0], str):
                lines.append(f"  {key}:")
                lines.extend(f"    {i}: {v}" for i, v in enumerate(value))
            elif not isinstance(value, (list, dict)):
                lines.append(f"  {key}: {value}")
        lines.extend(f"  wrote {o}" for o in self.outputs)
        return "\n".join(lines)


def _check_dict(check: CheckRecord) -> Dict[str, Any]:
    data = asdict(check)
    if not np.isfinite(data["max_residual"]):
        data["max_residual"] = None
    return data


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def parse_points(text: str) -> List[PointDict]:
    """"t=-0.5,x=1;t=-0.2,x=2" -> list of coordinate dicts"""
    points = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        point = {}
        for item in chunk.split(","):
            name, sep, value = item.partition("=")
            if not sep:
                raise GridSpecError(f"bad point item '{item.strip()}'; expected name=value")
            try:
                point[name.strip()] = float(value)
            except ValueError:
                raise GridSpecError(f"bad number in point item '{item.strip()}'")
        points.append(point)
    if not points:
        raise GridSpecError("no points given")
    return points


def _sample_points(entry: catalog.CatalogEntry, points: Optional[str], grid: Optional[str],
                   seed_index: int = 0) -> List[PointDict]:
    if points:
        return parse_points(points)
    if grid:
        return list(GridSpec.parse(grid).points())
    if entry.seeds and entry.seed(seed_index).points:
        return list(entry.seed(seed_index).points)
    raise GridSpecError("no sample points: pass points or a grid")


def _background(entry: catalog.CatalogEntry, text: Optional[str]) -> BackgroundSolution:
    if text is None:
        return entry.seed(0).background
    return BackgroundSolution(entry.expression(text), conv=entry.conv)


def _residual_check(report: RunReport, name: str, fn: Callable[[PointDict], Residual],
                    points: Sequence[PointDict], tolerance: float) -> CheckRecord:
    """Evaluate fn at every point; out-of-domain points are skipped and counted"""
    values, skipped = [], 0
    for p in points:
        try:
            values.append(fn(p).relative)
        except NumericError as exc:
            skipped += 1
            logger.debug("%s skipped %s: %s", name, p, exc)
    if not values:
        raise SamplesOutOfDomain(f"{name}: every sample point is outside the domain")
    return report.add_check(name, values, tolerance, f"{skipped} points skipped" if skipped else "")


# ---------------------------------------------------------------------------

def run_verify(entry: catalog.CatalogEntry, solution: str, points: Optional[str] = None,
               grid: Optional[str] = None, tolerance: float = 1e-9) -> RunReport:
    """PDE residual of a closed-form solution"""
    bg = BackgroundSolution(entry.expression(solution), conv=entry.conv)
    report = RunReport("verify", {"model": entry.name, "solution": solution, "points": points, "grid": grid,
                                  "tolerance": tolerance})
    samples = _sample_points(entry, points, grid)
    _residual_check(report, "pde-residual", lambda p: pde_residual(entry.branch, bg, p), samples, tolerance)
    return report


def run_transform(entry: catalog.CatalogEntry, seed: str, g: str, grid: str, out: Optional[Union[str, Path]] = None,
                  expect: Optional[str] = None, epsilon: float = 1.0, tolerance: float = 1e-6,
                  expect_tolerance: float = 1e-9, h: float = 1e-5) -> Tuple[RunReport, GridField]:
    """Generate u' = U(primed point) on a grid and check it against the PDE"""
    report = RunReport("transform", {"model": entry.name, "seed": seed, "g": g, "grid": grid,
                                     "epsilon": epsilon, "expect": expect, "tolerance": tolerance})
    if not entry.pbs:
        raise ModelValidationError(entry.name, "pbs-eligible", "model is for residual checks only")
    spec = GridSpec.parse(grid)
    ts = TransformSpec.create(BackgroundSolution(entry.expression(seed), conv=entry.conv),
                              entry.expression(g), epsilon=epsilon)
    known = entry.find_seed(seed)
    require_nondegenerate(ts.seed, known.points if known and known.points else list(spec.points()))

    field_ = sample_transform(ts, spec, entry.branch, h=h, workers=get_settings().grid_workers)
    valid = field_.mask.ravel()
    report.data["cells"] = int(valid.size)
    report.data["masked"] = int(valid.size - valid.sum())
    residuals = field_.channels.get("residual", np.full(spec.shape, np.nan)).ravel()[valid]
    report.add_check("pde-residual", list(residuals), tolerance)
    if expect:
        closed = BackgroundSolution(entry.expression(expect), conv=entry.conv)
        gaps = []
        for point, ok, u in zip(spec.points(), valid, field_.values.ravel()):
            if ok:
                want = closed.value(point)
                gaps.append(abs(u - want) / max(1.0, abs(want)))
        report.add_check("closed-form", gaps, expect_tolerance, f"expected {to_text(closed.U)}")
    if out:
        report.outputs.append(str(field_.to_csv(out)))
    return report, field_


def run_symmetry(entry: catalog.CatalogEntry, sigma: str, background: Optional[str] = None,
                 points: Optional[str] = None, grid: Optional[str] = None, tolerance: float = 1e-9) -> RunReport:
    """Linearized residual of a candidate symmetry along a background"""
    bg = _background(entry, background)
    s = entry.expression(sigma)
    report = RunReport("symmetry", {"model": entry.name, "sigma": sigma, "background": to_text(bg.U),
                                    "points": points, "grid": grid, "tolerance": tolerance})
    samples = _sample_points(entry, points, grid)
    _residual_check(report, "linearized-residual", lambda p: linearized_residual(entry.branch, bg, s, p),
                    samples, tolerance)
    return report


def parse_jets(text: str) -> List[Tuple[float, float]]:
    return [(p["u"], p["u_x"]) for p in parse_points(text)]


_BUILDERS = {"A": build_A, "B": build_B, "G": build_G}


def run_invariant(entry: catalog.CatalogEntry, phi: Optional[str] = None, background: Optional[str] = None,
                  points: Optional[str] = None, grid: Optional[str] = None, kind: Optional[str] = None,
                  constant: float = 1.0, jets: Optional[str] = None, tolerance: float = 1e-9) -> RunReport:
    """Invariant residual of phi, or the defining relation of a built A/B/G functional"""
    report = RunReport("invariant", {"model": entry.name, "phi": phi, "background": background, "points": points,
                                     "grid": grid, "kind": kind, "constant": constant, "jets": jets,
                                     "tolerance": tolerance})
    if kind is not None:
        if kind not in _BUILDERS:
            raise ModelValidationError(entry.name, "functional-kind", f"kind must be A, B or G, got {kind}")
        if not isinstance(entry.branch, Branch1D):
            raise ModelValidationError(entry.name, "functional-kind", "A/B/G need a separated 1+1 branch")
        fn = _BUILDERS[kind](entry.branch, constant, u_ref=entry.u_ref, bracket=entry.level_set_bracket)
        report.data["functional"] = repr(fn)
        samples = parse_jets(jets) if jets else [(1.2, 0.7), (1.5, 1.1), (2.0, 0.5)]
        values = [defining_residual(entry.branch, kind, fn, constant, u, ux).relative for u, ux in samples]
        report.add_check(f"{kind}-relation", values, max(tolerance, 1e-8))
        return report
    if phi is None:
        raise ModelValidationError(entry.name, "invariant-arguments", "pass phi or a functional kind")
    bg = _background(entry, background)
    expr = entry.expression(phi)
    samples = _sample_points(entry, points, grid)
    _residual_check(report, "invariant-residual", lambda p: invariant_residual(entry.branch, bg, expr, p),
                    samples, tolerance)
    return report


def _recursion_spec(entry: catalog.CatalogEntry, G: Optional[str]) -> RecursionSpec:
    if not isinstance(entry.branch, Branch1D):
        raise ModelValidationError(entry.name, "recursion", "recursion operators need a separated 1+1 branch")
    return RecursionSpec(entry.branch, entry.expression(G) if G else entry.G)


def run_hierarchy(entry: catalog.CatalogEntry, levels: int, G: Optional[str] = None,
                  background: Optional[str] = None, points: Optional[str] = None,
                  tolerance: float = 1e-8) -> RunReport:
    """K_0..K_levels and their linearized residuals"""
    rs = _recursion_spec(entry, G)
    report = RunReport("hierarchy", {"model": entry.name, "levels": levels, "G": to_text(rs.G),
                                     "background": background, "points": points, "tolerance": tolerance})
    flows = hierarchy(rs, levels)
    report.data["levels"] = [to_text(K) for K in flows]
    bg = _background(entry, background)
    samples = _sample_points(entry, points, None)
    jet_names = ("u", "u_x", "u_xx")

    def symmetry_residual(p: PointDict, K, m: int) -> Residual:
        if m:
            require_regular(rs, bg.jet_values(p, jet_names))
        return linearized_residual(entry.branch, bg, K, p)

    for m, K in enumerate(flows):
        _residual_check(report, f"K_{m}-symmetry", lambda p, K=K, m=m: symmetry_residual(p, K, m),
                        samples, tolerance)
    return report


def run_hereditary(entry: catalog.CatalogEntry, G: Optional[str] = None, trials: int = 100,
                   rng_seed: Optional[int] = None, tolerance: float = 1e-9) -> RunReport:
    """Hereditary identity over seeded random cubic (f, g, u) triples"""
    rs = _recursion_spec(entry, G)
    rng_seed = get_settings().rng_seed if rng_seed is None else rng_seed
    report = RunReport("hereditary", {"model": entry.name, "G": to_text(rs.G), "trials": trials,
                                      "rng_seed": rng_seed, "tolerance": tolerance})
    results = hereditary_trials(rs, trials, rng_seed)
    report.add_check("hereditary-identity", [r.relative for _, r in results], tolerance)
    return report


def run_catalog(name: Optional[str] = None) -> RunReport:
    report = RunReport("catalog", {"name": name})
    if name is None:
        report.data["models"] = [f"{n}: {catalog.get(n).description}" for n in catalog.names()]
    else:
        report.data["model"] = catalog.get(name).to_dict()
    return report

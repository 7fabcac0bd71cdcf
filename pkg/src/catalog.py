"""
Model Catalog
Built-in branches with seeds, invariant candidates and known closed-form PBS,
validated on load, plus the JSON model-file format for user models
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from .branches import BackgroundSolution, Branch, Branch1D, BranchND, pde_residual
from .errors import ModelFileError, ModelValidationError, PBSError, UnknownModel
from .expressions import Expr, JetConvention, as_expr, symbol, to_text
from .invariants import invariant_residual
from .transforms import TransformSpec, detect_degenerate_seed, evaluate_pbs

logger = logging.getLogger(__name__)

CHECK_TOLERANCE = 1e-9
CLOSED_FORM_TOLERANCE = 1e-9

PointDict = Dict[str, float]


@dataclass
class SeedEntry:
    expr: str
    domain_note: str = ""
    points: List[PointDict] = field(default_factory=list)
    degenerate: bool = False
    background: Optional[BackgroundSolution] = field(default=None, repr=False)


@dataclass
class InvariantCandidate:
    expr: str
    seed: int = 0
    points: List[PointDict] = field(default_factory=list)


@dataclass
class ClosedForm:
    """Known PBS obtained from seeds[seed] with transform function g"""

    seed: int
    g: str
    expr: str
    points: List[PointDict] = field(default_factory=list)


@dataclass
class CatalogEntry:
    name: str
    n: int
    form: str
    F: str
    description: str = ""
    constants: Dict[str, float] = field(default_factory=dict)
    seeds: List[SeedEntry] = field(default_factory=list)
    invariants: List[InvariantCandidate] = field(default_factory=list)
    closed_forms: List[ClosedForm] = field(default_factory=list)
    recursion_G: Optional[str] = None
    u_ref: float = 1.0
    level_set_bracket: Optional[Tuple[float, float]] = None
    pbs: bool = True
    branch: Branch = field(default=None, repr=False)

    def __post_init__(self):
        if self.form not in ("separated", "implicit"):
            raise ModelFileError(f"model '{self.name}': form must be 'separated' or 'implicit'")
        if self.form == "separated" and self.n != 1:
            raise ModelFileError(f"model '{self.name}': separated form needs n = 1")
        if self.form == "separated":
            self.branch = Branch1D.from_text(self.F, self.constants, name=self.name)
        else:
            self.branch = BranchND.from_text(self.F, self.n, self.constants, name=self.name)
        for seed in self.seeds:
            seed.background = BackgroundSolution(self.expression(seed.expr), conv=self.conv,
                                                 domain_note=seed.domain_note)

    @property
    def conv(self) -> JetConvention:
        return self.branch.conv

    def expression(self, text: str) -> Expr:
        """Parse text and substitute the model constants"""
        e = as_expr(text)
        return e.xreplace({symbol(k): as_expr(float(v)) for k, v in self.constants.items()})

    @property
    def G(self) -> Optional[Expr]:
        return None if self.recursion_G is None else self.expression(self.recursion_G)

    def seed(self, index: int = 0) -> SeedEntry:
        try:
            return self.seeds[index]
        except IndexError:
            raise ModelValidationError(self.name, "seed-index", f"no seed number {index}")

    def find_seed(self, text: str) -> Optional[SeedEntry]:
        target = self.expression(text)
        for seed in self.seeds:
            if seed.background.U == target:
                return seed
        return None

    def transform(self, g: Union[str, Expr], seed: int = 0, epsilon: float = 1.0) -> TransformSpec:
        if not self.pbs:
            raise ModelValidationError(self.name, "pbs-eligible", "verification-only model")
        return TransformSpec.create(self.seed(seed).background, self.expression(g) if isinstance(g, str) else g,
                                    epsilon=epsilon)

    # validation

    def _fail(self, check: str, detail: str) -> None:
        raise ModelValidationError(self.name, check, detail)

    def validate(self) -> "CatalogEntry":
        """Run every load-time check; the first failing one raises"""
        for i, seed in enumerate(self.seeds):
            for p in seed.points:
                r = pde_residual(self.branch, seed.background, p)
                if not r.passes(CHECK_TOLERANCE):
                    self._fail(f"seed[{i}]-residual", f"{seed.expr} leaves {float(r):.3e} at {p}")
            if self.pbs and seed.points:
                flagged = detect_degenerate_seed(seed.background, self.n, seed.points)
                if flagged != seed.degenerate:
                    self._fail(f"seed[{i}]-degeneracy", f"{seed.expr} degenerate={flagged}, declared {seed.degenerate}")
            logger.debug("model %s: seed %d validated", self.name, i)
        for j, inv in enumerate(self.invariants):
            bg = self.seed(inv.seed).background
            for p in inv.points:
                r = invariant_residual(self.branch, bg, self.expression(inv.expr), p)
                if not r.passes(CHECK_TOLERANCE):
                    self._fail(f"invariant[{j}]", f"{inv.expr} leaves {float(r):.3e} at {p}")
        for k, closed in enumerate(self.closed_forms):
            ts = self.transform(closed.g, closed.seed)
            expected = self.expression(closed.expr)
            for p in closed.points:
                try:
                    got = evaluate_pbs(ts, p)
                except PBSError as exc:
                    self._fail(f"closed-form[{k}]", f"transform failed at {p}: {exc}")
                want = BackgroundSolution(expected, conv=self.conv).value(p)
                if abs(got - want) > CLOSED_FORM_TOLERANCE * max(1.0, abs(want)):
                    self._fail(f"closed-form[{k}]", f"{closed.expr}: expected {want!r}, transform gave {got!r} at {p}")
        if self.recursion_G is not None:
            stray = sorted(s.name for s in self.G.free_symbols if s.name not in ("u", "u_x"))
            if stray:
                self._fail("recursion-G", f"G depends on {stray}")
        return self

    # serialization

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "name": self.name,
            "description": self.description,
            "n": self.n,
            "form": self.form,
            "F": self.F,
            "constants": dict(self.constants),
            "seeds": [{"expr": s.expr, "domain_note": s.domain_note, "points": s.points,
                       "degenerate": s.degenerate} for s in self.seeds],
            "invariants": [{"expr": i.expr, "seed": i.seed, "points": i.points} for i in self.invariants],
            "closed_forms": [{"seed": c.seed, "g": c.g, "expr": c.expr, "points": c.points}
                             for c in self.closed_forms],
            "pbs": self.pbs,
            "u_ref": self.u_ref,
        }
        if self.recursion_G is not None:
            data["recursion_G"] = self.recursion_G
        if self.level_set_bracket is not None:
            data["level_set_bracket"] = list(self.level_set_bracket)
        data["branch"] = to_text(self.branch.F)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CatalogEntry":
        if not isinstance(data, dict):
            raise ModelFileError("model definition must be a JSON object")
        missing = [k for k in ("name", "n", "form", "F") if k not in data]
        if missing:
            raise ModelFileError(f"model definition misses {', '.join(missing)}")
        try:
            seeds = [SeedEntry(s["expr"], s.get("domain_note", ""), list(s.get("points", [])),
                               bool(s.get("degenerate", False))) for s in data.get("seeds", [])]
            invariants = [InvariantCandidate(i["expr"], int(i.get("seed", 0)), list(i.get("points", [])))
                          for i in data.get("invariants", [])]
            closed = [ClosedForm(int(c.get("seed", 0)), c["g"], c["expr"], list(c.get("points", [])))
                      for c in data.get("closed_forms", [])]
            bracket = data.get("level_set_bracket")
            return cls(name=str(data["name"]), n=int(data["n"]), form=str(data["form"]), F=str(data["F"]),
                       description=str(data.get("description", "")),
                       constants={k: float(v) for k, v in data.get("constants", {}).items()},
                       seeds=seeds, invariants=invariants, closed_forms=closed,
                       recursion_G=data.get("recursion_G"), u_ref=float(data.get("u_ref", 1.0)),
                       level_set_bracket=tuple(bracket) if bracket else None, pbs=bool(data.get("pbs", True)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFileError(f"model '{data.get('name')}': bad field ({exc})")


def to_json(entry: CatalogEntry) -> str:
    return json.dumps(entry.to_dict(), indent=2, sort_keys=True)


def _pts(*rows: Tuple[float, ...], names: Tuple[str, ...] = ("t", "x")) -> List[PointDict]:
    return [dict(zip(names, row)) for row in rows]


_X3 = ("x0", "x1", "x2")
_X2 = ("x0", "x1")


def _builtin_definitions() -> List[CatalogEntry]:
    toy_seed_points = _pts((-0.5, 1.0), (-0.2, 2.0), (-0.1, 1.0))
    return [
        CatalogEntry(
            name="toy", n=1, form="separated", F="u*u_x",
            description="u_t = u u_x^2, the worked example branch",
            seeds=[
                SeedEntry("x/sqrt(-2*t)", "t < 0", toy_seed_points),
                SeedEntry("sqrt(2*(x+t))", "x + t > 0, travelling wave", _pts((0.1, 1.0), (0.2, 2.0)),
                          degenerate=True),
            ],
            invariants=[InvariantCandidate(e, 0, toy_seed_points)
                        for e in ("u_x/u_t", "x - u/u_x", "2*t + u_x^(-2)")],
            closed_forms=[ClosedForm(0, "eta^2", "sqrt(-2 - x^2/(2*t))", _pts((-0.1, 1.0), (-0.2, 2.5)))],
            recursion_G="u*u_x",
            level_set_bracket=(0.01, 50.0),
        ),
        CatalogEntry(
            name="hopf", n=1, form="separated", F="a*u", constants={"a": 1.0},
            description="Hopf equation u_t = a u u_x",
            seeds=[SeedEntry("x/(1-a*t)", "a t < 1, x != 0", _pts((0.0, 2.0), (0.3, 3.0), (0.5, 2.5)))],
            invariants=[InvariantCandidate("u_x/u_t", 0, _pts((0.0, 2.0), (0.3, 3.0)))],
            recursion_G="a*u",
        ),
        CatalogEntry(
            name="ghopf", n=1, form="separated", F="k*u^2", constants={"k": 1.0},
            description="general Hopf equation u_t = k u^2 u_x",
            seeds=[SeedEntry("sqrt(-x/t)", "t < 0, x > 0", _pts((-0.2, 2.0), (-0.1, 3.0), (-0.3, 2.5)))],
            invariants=[InvariantCandidate("u_x/u_t", 0, _pts((-0.2, 2.0)))],
            recursion_G="k*u^2",
        ),
        CatalogEntry(
            name="hopf-damped", n=1, form="implicit", F="u_x0 - a*u*u_x1 - b*u",
            constants={"a": 1.0, "b": 0.5},
            description="damped Hopf equation u_t = a u u_x + b u (residual checks only)",
            seeds=[SeedEntry("b*x1/(2*exp(-b*x0) - 1)", "2 exp(-b x0) > 1",
                             _pts((0.0, 1.0), (0.5, 2.0), (0.8, -1.0), names=_X2))],
            pbs=False,
        ),
        CatalogEntry(
            name="ghpf", n=1, form="implicit", F="u_x0^2 + u_x1^2 - u^2",
            description="u_x^2 + u_y^2 = u^2, cylindrical surfaces (residual checks only)",
            seeds=[SeedEntry("exp((x0+x1)/sqrt(2))", "entire plane", _pts((0.0, 0.0), (0.5, -1.0), names=_X2))],
            pbs=False,
        ),
        CatalogEntry(
            name="gam3", n=2, form="implicit", F="a0*u_x0^2 + a1*u_x1^2 + a2*u_x2^2 - c",
            constants={"a0": 1.0, "a1": 1.0, "a2": 1.0, "c": 1.0},
            description="differential-game equation sum a_i u_i^2 = c in 2+1 dimensions",
            seeds=[
                SeedEntry("sqrt(x0^2 + x1^2 + x2^2)", "away from the origin",
                          _pts((1.0, 1.0, 1.0), (1.5, 0.5, 0.3), (2.0, 0.2, 0.7), names=_X3)),
                SeedEntry("0.6*x0 + 0.8*x1", "plane wave", _pts((1.0, 1.0, 1.0), (0.5, 2.0, -1.0), names=_X3),
                          degenerate=True),
            ],
            invariants=[InvariantCandidate("u_x1/u_x0", 0, _pts((1.0, 1.0, 1.0), (1.5, 0.5, 0.3), names=_X3))],
        ),
    ]


_REGISTRY: Dict[str, CatalogEntry] = {}


def _ensure_loaded() -> None:
    if _REGISTRY:
        return
    for entry in _builtin_definitions():
        _REGISTRY[entry.name] = entry.validate()
    logger.info("catalog loaded: %s", ", ".join(_REGISTRY))


def names() -> List[str]:
    _ensure_loaded()
    return list(_REGISTRY)


def get(name: str) -> CatalogEntry:
    """Validated catalog entry

    Raises:
        UnknownModel: name not registered (the error lists the available names)
    """
    _ensure_loaded()
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownModel(name, list(_REGISTRY))


def register(entry: CatalogEntry) -> CatalogEntry:
    """Validate and add a user model; an existing name is replaced"""
    _ensure_loaded()
    _REGISTRY[entry.name] = entry.validate()
    return entry


def load_model_dict(data: Dict[str, Any]) -> CatalogEntry:
    return CatalogEntry.from_dict(data).validate()


def load_model_file(path: Union[str, Path]) -> CatalogEntry:
    """Read, build and validate a JSON model definition"""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ModelFileError(f"model file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: invalid JSON ({exc})")
    return load_model_dict(data)

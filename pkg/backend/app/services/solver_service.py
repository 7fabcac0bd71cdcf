"""
Solver Service - Wraps the command runners for API use
"""
from typing import Any, Dict, Optional
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent.parent))

from src import commands
from app.services.catalog_service import CatalogService


def _float(body: Dict[str, Any], key: str, default: float) -> float:
    value = body.get(key)
    return default if value is None else float(value)


def _required(body: Dict[str, Any], key: str) -> str:
    if not body.get(key):
        raise ValueError(f"missing field '{key}'")
    return str(body[key])


class SolverService:
    """Service for verification and generation runs"""

    def __init__(self, catalog_service: CatalogService):
        self.catalog_service = catalog_service

    def _entry(self, body: Dict[str, Any]):
        return self.catalog_service.get_entry(body.get("model") or "toy")

    def verify(self, body: Dict[str, Any]) -> Dict[str, Any]:
        report = commands.run_verify(self._entry(body), _required(body, "solution"), body.get("points"),
                                     body.get("grid"), _float(body, "tolerance", 1e-9))
        return report.to_dict()

    def transform(self, body: Dict[str, Any]) -> Dict[str, Any]:
        """Report plus the sampled rows (no CSV is written)"""
        report, grid_field = commands.run_transform(
            self._entry(body), _required(body, "seed"), _required(body, "g"), _required(body, "grid"),
            expect=body.get("expect"), epsilon=_float(body, "epsilon", 1.0),
            tolerance=_float(body, "tolerance", 1e-6))
        result = report.to_dict()
        result["rows"] = grid_field.to_dict()["rows"]
        return result

    def symmetry(self, body: Dict[str, Any]) -> Dict[str, Any]:
        return commands.run_symmetry(self._entry(body), _required(body, "sigma"), body.get("background"),
                                     body.get("points"), body.get("grid"),
                                     _float(body, "tolerance", 1e-9)).to_dict()

    def invariant(self, body: Dict[str, Any]) -> Dict[str, Any]:
        return commands.run_invariant(self._entry(body), body.get("phi"), body.get("background"),
                                      body.get("points"), body.get("grid"), kind=body.get("kind"),
                                      constant=_float(body, "constant", 1.0), jets=body.get("jets"),
                                      tolerance=_float(body, "tolerance", 1e-9)).to_dict()

    def hierarchy(self, body: Dict[str, Any]) -> Dict[str, Any]:
        return commands.run_hierarchy(self._entry(body), int(body.get("levels", 2)), body.get("G"),
                                      body.get("background"), body.get("points"),
                                      _float(body, "tolerance", 1e-8)).to_dict()

    def hereditary(self, body: Dict[str, Any]) -> Dict[str, Any]:
        rng_seed: Optional[int] = None if body.get("rng_seed") is None else int(body["rng_seed"])
        return commands.run_hereditary(self._entry(body), body.get("G"), int(body.get("trials", 100)), rng_seed,
                                       _float(body, "tolerance", 1e-9)).to_dict()

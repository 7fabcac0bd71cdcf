"""
Catalog Service - Model lookup and session model registration
"""
from typing import Any, Dict, List
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent.parent))

from src import catalog
from src.catalog import CatalogEntry


class CatalogService:
    """Service for catalog and user-model operations"""

    def __init__(self):
        self._session_models: List[str] = []

    def list_models(self) -> List[Dict[str, str]]:
        """Names and one-line descriptions of every registered model"""
        return [{"name": name, "description": catalog.get(name).description} for name in catalog.names()]

    def get_entry(self, name: str) -> CatalogEntry:
        return catalog.get(name)

    def get_model(self, name: str) -> Dict[str, Any]:
        return catalog.get(name).to_dict()

    def register_model(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """
        Validate a model definition and register it for this process.

        Returns:
            The stored model JSON
        """
        entry = catalog.register(CatalogEntry.from_dict(data))
        if entry.name not in self._session_models:
            self._session_models.append(entry.name)
        return entry.to_dict()

    @property
    def session_models(self) -> List[str]:
        return list(self._session_models)

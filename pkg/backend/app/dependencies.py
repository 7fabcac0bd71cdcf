"""
Dependencies for FastAPI routes
"""
from app.services.catalog_service import CatalogService
from app.services.solver_service import SolverService

catalog_service = CatalogService()
solver_service = SolverService(catalog_service)

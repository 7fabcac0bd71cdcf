"""
API Routes for the PBS toolkit
"""
from fastapi import APIRouter, HTTPException, Body
from typing import Dict, Any

from app.dependencies import catalog_service, solver_service

router = APIRouter()


def _run(method, body: Dict[str, Any]) -> Dict[str, Any]:
    """Run a solver call; malformed bodies become 400, PBSError goes to the app handler"""
    try:
        return method(body)
    except (ValueError, TypeError) as e:
        raise HTTPException(status_code=400, detail=str(e))


@router.get("/catalog")
async def list_catalog():
    """Catalog names with one-line descriptions"""
    return {"models": catalog_service.list_models()}


@router.get("/catalog/{name}")
async def get_catalog_entry(name: str):
    """Model JSON of a catalog entry"""
    return catalog_service.get_model(name)


@router.post("/models")
async def register_model(model: Dict[str, Any] = Body(...)):
    """Validate a user model and register it for this session"""
    return {"status": "registered", "model": catalog_service.register_model(model)}


@router.post("/verify")
def verify(body: Dict[str, Any] = Body(...)):
    return _run(solver_service.verify, body)


@router.post("/transform")
def transform(body: Dict[str, Any] = Body(...)):
    """Generated solution on a grid, returned as rows"""
    return _run(solver_service.transform, body)


@router.post("/symmetry")
def symmetry(body: Dict[str, Any] = Body(...)):
    return _run(solver_service.symmetry, body)


@router.post("/invariant")
def invariant(body: Dict[str, Any] = Body(...)):
    return _run(solver_service.invariant, body)


@router.post("/hierarchy")
def hierarchy(body: Dict[str, Any] = Body(...)):
    return _run(solver_service.hierarchy, body)


@router.post("/hereditary")
def hereditary(body: Dict[str, Any] = Body(...)):
    return _run(solver_service.hereditary, body)

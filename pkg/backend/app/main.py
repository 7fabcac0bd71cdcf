"""
FastAPI Backend for the PBS toolkit
Main application entry point
"""
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
import sys
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv(Path(__file__).parent.parent.parent / '.env')

# Add parent directory to path to import src modules
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from src import catalog
from src.config import configure_logging, get_settings
from src.errors import PBSError
from app.api import routes

settings = get_settings()
configure_logging(settings.log_level)

app = FastAPI(
    title="Primary Branch Solution API",
    description="Construct and verify primary branch solutions of first-order scalar PDEs",
    version="1.0.0"
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=list(settings.cors_origins),
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(routes.router, prefix="/api")

@app.get("/")
async def root():
    return {
        "message": "Primary Branch Solution API",
        "status": "running",
        "commands": ["verify", "transform", "symmetry", "invariant", "hierarchy", "hereditary"],
    }

@app.get("/health")
async def health_check():
    # loading the catalog validates every built-in model
    return {"status": "healthy", "models": len(catalog.names())}

@app.exception_handler(PBSError)
async def pbs_exception_handler(request, exc: PBSError):
    # exit code 2 marks input errors; check and numeric failures are 422
    return JSONResponse(
        status_code=400 if exc.exit_code == 2 else 422,
        content={"error": str(exc), "type": type(exc).__name__}
    )

@app.exception_handler(Exception)
async def global_exception_handler(request, exc):
    return JSONResponse(
        status_code=500,
        content={"error": str(exc), "type": type(exc).__name__}
    )

if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)

"""Service layer: FastAPI app, schemas and the in-memory job store."""

from .app import create_app

__all__ = ["create_app"]

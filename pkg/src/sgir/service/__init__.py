"""Service subpackage: FastAPI app and pydantic schemas."""

from .app import app, create_app

__all__ = ["app", "create_app"]

from fastapi import FastAPI

from app.config import app_config

from .routes import router


def create_app() -> FastAPI:
    """FastAPI application with the versioned toolkit routes."""
    app = FastAPI(
        title="SCI Toolkit",
        description="Snapshot compressive imaging: masks, complexity reports and GAP-TV decoding",
        version=app_config.VERSION,
    )
    app.include_router(router)
    return app

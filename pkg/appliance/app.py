"""FastAPI download server: one mirror directory plus the boot history of a machine."""

from __future__ import annotations

import logging
import time
from contextlib import asynccontextmanager
from pathlib import Path
from typing import AsyncGenerator

from fastapi import FastAPI, HTTPException
from fastapi.responses import Response

from .boot.history import BootHistory
from .settings import HISTORY_DB, MIRROR_DIR
from .updates.mirrors import load_mirror_dir

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
)
logger = logging.getLogger(__name__)


def create_app(mirror_dir: Path | str = MIRROR_DIR, history_db: Path | str | None = HISTORY_DB) -> FastAPI:
    mirror_dir = Path(mirror_dir)
    state: dict[str, BootHistory | None] = {"history": None}

    @asynccontextmanager
    async def lifespan(app: FastAPI) -> AsyncGenerator:
        if history_db is not None:
            state["history"] = BootHistory(Path(history_db))
        logger.info("Serving mirror %s", mirror_dir)
        yield
        if state["history"] is not None:
            state["history"].close()
        logger.info("Shutdown complete.")

    app = FastAPI(
        title="Appliance Mirror",
        description="Download server for signed appliance packages",
        version="1.0.0",
        lifespan=lifespan,
    )

    def _mirror() -> tuple[dict[str, bytes], bool]:
        if not mirror_dir.is_dir():
            raise HTTPException(503, f"mirror directory {mirror_dir} is missing")
        files, reachable, _ = load_mirror_dir(mirror_dir)
        return files, reachable

    # -----------------------------------------------------------------------
    # Endpoints
    # -----------------------------------------------------------------------
    @app.get("/api/health")
    async def health_check():
        files, reachable = _mirror()
        return {
            "status": "healthy" if reachable else "down",
            "files": len(files),
            "timestamp": time.time(),
        }

    @app.get("/api/files")
    async def list_files():
        files, reachable = _mirror()
        if not reachable:
            raise HTTPException(503, "mirror is marked down")
        return {"files": sorted(files)}

    @app.get("/api/files/{name}")
    async def get_file(name: str):
        if "/" in name or name in (".", "..") or name.startswith(".tmp-"):
            raise HTTPException(400, f"bad file name: {name}")
        files, reachable = _mirror()
        if not reachable:
            raise HTTPException(503, "mirror is marked down")
        if name not in files:
            raise HTTPException(404, f"{name} not found")
        return Response(content=files[name], media_type="application/octet-stream")

    @app.get("/api/boots")
    async def get_boots(machine_id: str | None = None, limit: int = 100):
        """Boot reports from persistent storage."""
        history = state["history"]
        if history is None:
            raise HTTPException(404, "no boot history configured")
        return {
            "boots": history.get_history(machine_id=machine_id, limit=limit),
            "total_stored": history.get_total_count(),
        }

    return app


app = create_app()

"""Service API: scoreboard retrieval, what-if evaluation, mission updates.

Resource-oriented endpoints over the same documents the CLI writes. Reads and
what-ifs are concurrent; mutations (mission update with rescoring) serialize
through a single-writer lock. What-if never persists anything.
"""

from __future__ import annotations

import threading
from typing import Any

from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import inventory as inv
from .config import EngineConfig, config_hash
from .engine import CycleInputs, CycleRunner, evaluate_whatif
from .errors import InventoryError, KeyTerrainError, NotFoundError, WhatIfError
from .store import SnapshotStore


class WhatIfBody(BaseModel):
    base_version: int | None = Field(default=None, description="defaults to latest")
    overrides: list[dict[str, Any]] = Field(default_factory=list)


class MissionUpdateBody(BaseModel):
    document: dict[str, Any]
    base_version: int | None = None


class EventBody(BaseModel):
    kind: str
    asset_id: str
    payload: dict[str, Any] = Field(default_factory=dict)
    timestamp: str = ""


def create_app(store: SnapshotStore, config: EngineConfig) -> FastAPI:
    app = FastAPI(title="keyterrain", version="0.1.0")
    app.state.store = store
    app.state.config = config
    app.state.config_hash = config_hash(config)
    app.state.writer_lock = threading.Lock()
    app.state.event_queue: list[inv.DiscoveryEvent] = []

    def authorized(authorization: str | None = Header(default=None)) -> None:
        token = config.api_token
        if token and authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or bad bearer token")

    def envelope(version: int, body: dict) -> dict:
        return {
            "scoreboard_version": version,
            "config_hash": app.state.config_hash,
            **body,
        }

    def snapshot_or_404(version: int | None):
        try:
            if version is None:
                snapshot = store.latest()
                if snapshot is None:
                    raise NotFoundError("no scoreboard persisted yet")
                return snapshot
            return store.get(version)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.exception_handler(KeyTerrainError)
    async def domain_error(_, exc: KeyTerrainError):
        return JSONResponse(
            status_code=422,
            content={"code": type(exc).__name__, "message": str(exc)},
        )

    @app.get("/scoreboards/latest", dependencies=[Depends(authorized)])
    def get_latest():
        snapshot = snapshot_or_404(None)
        return envelope(snapshot.version, {"board": snapshot.board})

    @app.get("/scoreboards/{version}", dependencies=[Depends(authorized)])
    def get_version(version: int):
        snapshot = snapshot_or_404(version)
        return envelope(snapshot.version, {"board": snapshot.board})

    @app.post("/whatif", dependencies=[Depends(authorized)])
    def post_whatif(body: WhatIfBody):
        snapshot = snapshot_or_404(body.base_version)
        mission_doc = store.mission_document(snapshot.mission_hash)
        try:
            outcome = evaluate_whatif(snapshot, body.overrides, config, mission_doc)
        except WhatIfError as exc:
            raise HTTPException(
                status_code=422,
                detail={"code": "WhatIfError", "message": str(exc)},
            ) from exc
        return envelope(
            snapshot.version,
            {
                "ephemeral": True,
                "base_version": outcome.base_version,
                "board": outcome.board_doc,
                "diff": outcome.diff,
            },
        )

    @app.get("/missions", dependencies=[Depends(authorized)])
    def get_mission():
        snapshot = snapshot_or_404(None)
        return envelope(
            snapshot.version,
            {"mission": store.mission_document(snapshot.mission_hash)},
        )

    @app.post("/missions", dependencies=[Depends(authorized)])
    def post_mission(body: MissionUpdateBody):
        with app.state.writer_lock:
            snapshot = snapshot_or_404(None)
            if body.base_version is not None and body.base_version != snapshot.version:
                raise HTTPException(
                    status_code=409,
                    detail=(
                        f"base version {body.base_version} is stale; "
                        f"latest is {snapshot.version}"
                    ),
                )
            inputs = CycleInputs(
                mission_doc=body.document,
                tbs_fixture=snapshot.inputs["tbs"],
                vbs_fixture=snapshot.inputs["vbs"],
                events=tuple(app.state.event_queue),
            )
            if snapshot.inputs.get("mode") == "fixture":
                inputs.atas_fixture = snapshot.inputs["atas"]
                inputs.tsas_fixture = snapshot.inputs["tsas"]
            result = CycleRunner(config, store).run(inputs)
            app.state.event_queue.clear()
        return envelope(
            result.version,
            {
                "board": result.board_doc,
                "notifications": [n.to_dict() for n in result.notifications],
            },
        )

    @app.post("/events", status_code=202, dependencies=[Depends(authorized)])
    def post_event(body: EventBody):
        try:
            event = inv.DiscoveryEvent(
                kind=body.kind,
                asset_id=body.asset_id,
                payload=body.payload,
                timestamp=body.timestamp,
            )
        except InventoryError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        app.state.event_queue.append(event)
        return {"queued": len(app.state.event_queue)}

    @app.get("/events", dependencies=[Depends(authorized)])
    def get_events():
        return {
            "queued": [
                {
                    "kind": e.kind,
                    "asset_id": e.asset_id,
                    "payload": e.payload,
                    "timestamp": e.timestamp,
                }
                for e in app.state.event_queue
            ]
        }

    return app

"""HTTP surface of a KVS node.

    GET    /kv/{key}            200 <value> | 404
    PUT    /kv/{key}  <json>    200 {"vc": [...]}
    DELETE /kv/{key}            200 {"vc": [...]}
    POST   /internal/messages   {"msgs": [...]} -> 200, 400 bad encoding, 422 bad clock length
    GET    /metrics             {"mean_dq_after_delivery", "delivered_count", "queued_count"}

A peer POST only queues messages; the drain thread delivers them later.
"""

from __future__ import annotations

import json
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .node import BadPeerMessage, KvsNode, WrongClockLength
from .peers import PeerSender


def _error(status: int, msg: str) -> JSONResponse:
    return JSONResponse({"error": msg}, status_code=status)


async def _json_body(request: Request):
    raw = await request.body()
    return json.loads(raw)


def create_app(node: KvsNode, sender: Optional[PeerSender] = None, manage: bool = True) -> FastAPI:
    """Build the app. With ``manage`` the app starts and stops the node's
    drain thread and the peer sender along with its own lifespan."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if manage:
            if sender is not None:
                sender.start()
            node.start()
        try:
            yield
        finally:
            if manage:
                node.stop()
                if sender is not None:
                    sender.stop()

    app = FastAPI(title=f"cbcast kvs node {node.id}", lifespan=lifespan)

    @app.middleware("http")
    async def require_ready(request: Request, call_next):
        if not node.ready:
            return _error(503, "node not ready")
        return await call_next(request)

    @app.get("/kv/{key}")
    def get_key(key: str):
        found, value = node.get(key)
        if not found:
            return _error(404, f"no such key {key!r}")
        return JSONResponse(value)

    @app.put("/kv/{key}")
    async def put_key(key: str, request: Request):
        try:
            value = await _json_body(request)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            return _error(400, f"body must be JSON: {e}")
        m = node.put(key, value)
        return {"vc": list(m.vc)}

    @app.delete("/kv/{key}")
    def delete_key(key: str):
        m = node.delete(key)
        return {"vc": list(m.vc)}

    @app.post("/internal/messages")
    async def peer_messages(request: Request):
        try:
            payload = await _json_body(request)
            count = node.handle_peer_payload(payload)
        except (json.JSONDecodeError, UnicodeDecodeError, BadPeerMessage) as e:
            return _error(400, str(e))
        except WrongClockLength as e:
            return _error(422, str(e))
        return {"accepted": count}

    @app.get("/metrics")
    def metrics():
        return node.metrics()

    return app

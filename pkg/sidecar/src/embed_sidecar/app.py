"""HTTP surface: POST /embed and GET /health.

Every non-2xx response body is {"error": string} so clients see one error
shape regardless of which layer rejected the request.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool
from starlette.exceptions import HTTPException as StarletteHTTPException

from .encoder import TextEncoder


def create_app(encoder: TextEncoder, *, model_id: str, max_batch: int) -> FastAPI:
    """Wrap a loaded encoder in the wire protocol."""
    app = FastAPI(title="embed-sidecar", docs_url=None, redoc_url=None)

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException) -> JSONResponse:
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc.detail)})

    @app.exception_handler(Exception)
    async def on_unhandled(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=500, content={"error": f"internal error: {exc}"})

    @app.get("/health")
    async def health() -> dict:
        return {"model": model_id, "dim": encoder.dim}

    @app.post("/embed")
    async def embed(request: Request) -> JSONResponse:
        try:
            body = await request.json()
        except Exception:
            return JSONResponse(status_code=400, content={"error": "request body is not valid JSON"})
        if not isinstance(body, dict):
            return JSONResponse(status_code=400, content={"error": "request body must be a JSON object"})
        texts = body.get("texts")
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            return JSONResponse(status_code=400, content={"error": "texts must be a list of strings"})
        if len(texts) > max_batch:
            return JSONResponse(
                status_code=413,
                content={"error": f"batch of {len(texts)} texts exceeds the limit of {max_batch}"},
            )
        # encoder holds its own lock; the threadpool keeps the event loop free
        rows = await run_in_threadpool(encoder.encode, texts)
        return JSONResponse(status_code=200, content={"dim": encoder.dim, "embeddings": rows})

    return app

"""In-process HTTP server speaking the embedding wire protocol.

Backed by the hashing provider, so it needs no model weights. Used to test
the remote embedding client and as the reference implementation any real
embedding service must match.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .providers import hashing_embed


class StubEmbeddingServer:
    """Threaded localhost server. Use as a context manager:

        with StubEmbeddingServer(dim=64) as server:
            requests.post(f"{server.url}/embed", json=...)

    ``embed_requests`` counts POSTs to /embed, for asserting client batching.
    """

    def __init__(self, dim: int = 64, max_batch: int = 64, model: str = "hash-v1"):
        self.dim = dim
        self.max_batch = max_batch
        self.model = model
        self.embed_requests = 0
        self._count_lock = threading.Lock()
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        assert self._httpd is not None, "server not started"
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "StubEmbeddingServer":
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt: str, *args: object) -> None:
                pass

            def _send(self, status: int, body: dict) -> None:
                payload = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def do_GET(self) -> None:
                if self.path == "/health":
                    self._send(200, {"model": server.model, "dim": server.dim})
                else:
                    self._send(404, {"error": f"unknown path {self.path}"})

            def do_POST(self) -> None:
                if self.path != "/embed":
                    self._send(404, {"error": f"unknown path {self.path}"})
                    return
                with server._count_lock:
                    server.embed_requests += 1
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    body = json.loads(self.rfile.read(length))
                    texts = body["texts"]
                    assert isinstance(texts, list) and all(isinstance(t, str) for t in texts)
                except Exception:
                    self._send(400, {"error": "malformed request body"})
                    return
                if len(texts) > server.max_batch:
                    self._send(
                        413,
                        {
                            "error": f"batch of {len(texts)} texts exceeds the "
                            f"limit of {server.max_batch}"
                        },
                    )
                    return
                rows = [hashing_embed(t, server.dim).tolist() for t in texts]
                self._send(200, {"dim": server.dim, "embeddings": rows})

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> "StubEmbeddingServer":
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()

"""The guest kernel's HTTP face.

POST /eval  {"code", "correlation_id", "depth", "origin_kernel"} -> result
POST /exec  same body, statement channel (instantiate/delete land here)
GET  /health liveness and identity
GET  /store  parked objects, key -> typeName

Handlers run on their own threads, so a foreign call arriving while an
earlier evaluation is blocked on the broker still executes; that is the
whole point of the side channel.
"""

from __future__ import annotations

import json
import logging
import threading
import traceback
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .runtime import ForeignCallError, GuestRuntime

log = logging.getLogger("kffi_adapter.server")


def error_payload(exc: Exception, origin: str) -> dict:
    if isinstance(exc, ForeignCallError):
        # Already a cross-kernel failure: pass the original through
        # instead of nesting layers of wrapping.
        return {
            "status": "error",
            "ename": exc.ename,
            "evalue": exc.evalue,
            "trace": exc.trace,
            "origin_kernel": exc.origin,
        }
    return {
        "status": "error",
        "ename": type(exc).__name__,
        "evalue": str(exc),
        "trace": traceback.format_exc(),
        "origin_kernel": origin,
    }


class AdapterServer:
    def __init__(self, runtime: GuestRuntime, host: str = "127.0.0.1", port: int = 0):
        self.runtime = runtime
        self._httpd = ThreadingHTTPServer((host, port), self._make_handler())
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.05),
            name=f"adapter-{runtime.kernel_id}",
            daemon=True,
        )

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "AdapterServer":
        self._thread.start()
        log.info("guest %s serving at %s", self.runtime.kernel_id, self.endpoint)
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def _make_handler(self):
        runtime = self.runtime

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # noqa: N802
                log.debug("adapter %s", fmt % args)

            def _reply(self, code: int, payload: dict):
                body = json.dumps(payload).encode()
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):  # noqa: N802
                if self.path == "/health":
                    self._reply(
                        200,
                        {
                            "status": "ok",
                            "kernel_id": runtime.kernel_id,
                            "lang": "python",
                        },
                    )
                elif self.path == "/store":
                    objects = {
                        key: type(obj).__name__
                        for key, obj in runtime.global_vars.items()
                    }
                    self._reply(
                        200, {"kernel_id": runtime.kernel_id, "objects": objects}
                    )
                else:
                    self._reply(
                        404,
                        {"status": "error", "ename": "NotFound", "evalue": self.path},
                    )

            def do_POST(self):  # noqa: N802
                if self.path not in ("/eval", "/exec"):
                    self._reply(
                        404,
                        {"status": "error", "ename": "NotFound", "evalue": self.path},
                    )
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    data = json.loads(self.rfile.read(length) or b"{}")
                except ValueError as exc:
                    self._reply(400, error_payload(exc, runtime.kernel_id))
                    return
                code = data.get("code")
                if not isinstance(code, str):
                    self._reply(
                        400,
                        {
                            "status": "error",
                            "ename": "BadRequest",
                            "evalue": "body needs a 'code' string",
                            "origin_kernel": runtime.kernel_id,
                        },
                    )
                    return
                runtime.ctx.correlation_id = data.get("correlation_id") or None
                runtime.ctx.depth = int(data.get("depth", 0))
                try:
                    if self.path == "/eval":
                        result = runtime.eval_source(code)
                    else:
                        result = runtime.exec_source(code)
                except Exception as exc:  # noqa: BLE001 - serialized for the caller
                    self._reply(200, error_payload(exc, runtime.kernel_id))
                    return
                self._reply(200, {"status": "ok", "result": result})

        return Handler

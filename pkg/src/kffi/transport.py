"""Transports between kernels: the HTTP side channel and the blocking wire.

Each kernel owns one worker thread (its "wire") that executes cells strictly
one at a time, like any REPL.  Cross-kernel operations can travel two ways:

  * side channel: every kernel also runs a small threaded HTTP server, and
    operations are POSTed to it.  Each request is served on a fresh thread,
    so a kernel whose wire is blocked mid-cell can still evaluate calls that
    re-enter it.  Recursion between kernels just nests HTTP requests.
  * wire: operations are queued on the target kernel's worker thread.  This
    is what a plain single-queue kernel protocol gives you, and it deadlocks
    as soon as a call chain re-enters a kernel that is still blocked, which
    surfaces here as a timeout.

Call metadata (correlation id, hop depth, originating kernel) rides in a
context variable so nested dispatches can be attributed and capped.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import traceback
from contextvars import ContextVar
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import ForeignError, TransportTimeoutError

log = logging.getLogger("kffi.transport")


@dataclass(frozen=True)
class CallInfo:
    """Metadata of the evaluation currently running on this thread.
    ``depth`` is 0 for a user cell and grows by one per cross-kernel hop."""

    correlation_id: str
    depth: int
    origin_kernel: str


CURRENT_CALL: ContextVar[CallInfo | None] = ContextVar("kffi_current_call", default=None)


def with_call_info(info: CallInfo, fn, *args):
    token = CURRENT_CALL.set(info)
    try:
        return fn(*args)
    finally:
        CURRENT_CALL.reset(token)


# ---------------------------------------------------------------------------
# error payloads shared by every HTTP surface


def error_payload(exc: BaseException, origin_kernel: str) -> dict:
    """Serialize an exception for the wire.  Errors that already crossed a
    kernel boundary keep their original identity instead of nesting."""
    if isinstance(exc, ForeignError):
        return {
            "status": "error",
            "ename": exc.ename,
            "evalue": exc.evalue,
            "trace": exc.trace,
            "origin_kernel": exc.origin_kernel or origin_kernel,
        }
    return {
        "status": "error",
        "ename": type(exc).__name__,
        "evalue": str(exc),
        "trace": traceback.format_exc(),
        "origin_kernel": origin_kernel,
    }


def raise_from_payload(data: dict) -> None:
    raise ForeignError(
        ename=data.get("ename", "Error"),
        evalue=data.get("evalue", ""),
        trace=data.get("trace", ""),
        origin_kernel=data.get("origin_kernel", ""),
    )


# ---------------------------------------------------------------------------
# side channel


class SideChannelServer:
    """Threaded HTTP server exposing one kernel's evaluation endpoints.

    POST /eval and POST /exec take {"code", "correlation_id", "depth",
    "origin_kernel"} and answer {"status": "ok", "result": <encoded text>}
    or an error payload.  GET /health reports identity without touching the
    evaluator; GET /store snapshots the kernel's object store.
    """

    def __init__(self, kernel, host: str = "127.0.0.1", port: int = 0):
        self.kernel = kernel
        self._httpd = ThreadingHTTPServer((host, port), self._make_handler())
        self._httpd.daemon_threads = True
        # Small poll interval so shutdown() returns promptly; the default
        # half second adds up badly when tests start many short-lived kernels.
        self._thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.05),
            name=f"side-channel-{kernel.kernel_id}",
            daemon=True,
        )

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "SideChannelServer":
        self._thread.start()
        log.debug("side channel for %s at %s", self.kernel.kernel_id, self.endpoint)
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def _make_handler(self):
        kernel = self.kernel

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # noqa: N802
                log.debug("%s %s", kernel.kernel_id, fmt % args)

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
                        {"status": "ok", "kernel_id": kernel.kernel_id, "lang": kernel.lang},
                    )
                elif self.path == "/store":
                    self._reply(
                        200,
                        {"kernel_id": kernel.kernel_id, "objects": kernel.store.dump()},
                    )
                else:
                    self._reply(404, {"status": "error", "ename": "NotFound", "evalue": self.path})

            def do_POST(self):  # noqa: N802
                if self.path not in ("/eval", "/exec"):
                    self._reply(404, {"status": "error", "ename": "NotFound", "evalue": self.path})
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    data = json.loads(self.rfile.read(length) or b"{}")
                    code = data["code"]
                except (ValueError, KeyError) as exc:
                    self._reply(400, error_payload(exc, kernel.kernel_id))
                    return
                info = CallInfo(
                    correlation_id=data.get("correlation_id", ""),
                    depth=int(data.get("depth", 0)),
                    origin_kernel=data.get("origin_kernel", ""),
                )
                runner = kernel.exec_code if self.path == "/exec" else kernel.eval_code
                try:
                    result = with_call_info(info, runner, code)
                except Exception as exc:  # noqa: BLE001 - serialized for the caller
                    log.debug("eval error on %s: %s", kernel.kernel_id, exc)
                    self._reply(200, error_payload(exc, kernel.kernel_id))
                    return
                self._reply(200, {"status": "ok", "result": result})

        return Handler


# ---------------------------------------------------------------------------
# blocking wire


class _Job:
    __slots__ = ("thunk", "done", "result", "error", "abandoned")

    def __init__(self, thunk):
        self.thunk = thunk
        self.done = threading.Event()
        self.result = None
        self.error: BaseException | None = None
        self.abandoned = False


class BlockingWire:
    """Strict-FIFO executor: one worker thread, jobs run in arrival order.

    This is the primary channel every cell runs on.  When it is also used
    for cross-kernel operations, a chain that re-enters a busy kernel can
    never make progress; submit() then raises a timeout.  A timed-out job
    is marked abandoned and will be skipped if the worker ever reaches it.
    """

    def __init__(self, name: str):
        self.name = name
        self._queue: queue.Queue[_Job | None] = queue.Queue()
        self._thread = threading.Thread(
            target=self._loop, name=f"wire-{name}", daemon=True
        )
        self._thread.start()

    def submit(self, thunk, timeout: float | None = None):
        job = _Job(thunk)
        self._queue.put(job)
        if not job.done.wait(timeout):
            job.abandoned = True
            raise TransportTimeoutError(
                f"operation on kernel {self.name!r} timed out after {timeout}s "
                "(its worker never became free; recursive call over a blocking wire?)"
            )
        if job.error is not None:
            raise job.error
        return job.result

    def close(self) -> None:
        self._queue.put(None)

    def _loop(self) -> None:
        while True:
            job = self._queue.get()
            if job is None:
                return
            if job.abandoned:
                continue
            try:
                job.result = job.thunk()
            except BaseException as exc:  # noqa: BLE001 - handed to submitter
                job.error = exc
            job.done.set()

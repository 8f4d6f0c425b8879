"""The broker: routing, depth accounting, and the public HTTP surface.

One broker serves a session.  It knows every kernel (in-process cellscript
kernels and remote adapters alike), renders each operation into the target's
language, and routes the code over the configured transport.  It is also
where runaway recursion is stopped: every dispatch carries a correlation id
and a hop depth, and chains past the limit are refused.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

import requests

from .codegen import EXEC, PROFILES, generate
from .errors import (
    CodegenError,
    KernelUnavailableError,
    RecursionLimitError,
    TransportTimeoutError,
)
from .registry import Registry
from .transport import (
    CURRENT_CALL,
    BlockingWire,
    CallInfo,
    SideChannelServer,
    error_payload,
    raise_from_payload,
    with_call_info,
)
from .wire import IR, KernelDescriptor, ir_from_json, ir_to_json

log = logging.getLogger("kffi.broker")

SIDE_CHANNEL = "side_channel"
WIRE = "wire"

DEFAULT_TIMEOUT = 30.0
DEFAULT_DEPTH_LIMIT = 64


@dataclass
class KernelBinding:
    descriptor: KernelDescriptor
    kernel: object | None = None  # in-process kernels only
    wire: BlockingWire | None = None
    server: SideChannelServer | None = None


class Broker:
    def __init__(
        self,
        registry: Registry | None = None,
        transport_mode: str = SIDE_CHANNEL,
        call_timeout: float = DEFAULT_TIMEOUT,
        depth_limit: int = DEFAULT_DEPTH_LIMIT,
        trace: Callable[[dict], None] | None = None,
    ):
        if transport_mode not in (SIDE_CHANNEL, WIRE):
            raise ValueError(f"unknown transport mode {transport_mode!r}")
        self.registry = registry if registry is not None else Registry()
        self.transport_mode = transport_mode
        self.call_timeout = call_timeout
        self.depth_limit = depth_limit
        self.trace = trace
        self.bindings: dict[str, KernelBinding] = {}
        self._depth_seen: dict[str, int] = {}
        self._lock = threading.Lock()

    # -- membership -----------------------------------------------------

    def add_local_kernel(self, kernel) -> KernelBinding:
        """Wire an in-process kernel into the session: give it a worker
        thread and, on the side-channel transport, its own HTTP server."""
        wire = BlockingWire(kernel.kernel_id)
        server = None
        endpoint = None
        if self.transport_mode == SIDE_CHANNEL:
            server = SideChannelServer(kernel).start()
            endpoint = server.endpoint
        descriptor = KernelDescriptor(
            kernel_id=kernel.kernel_id,
            lang=kernel.lang,
            type_profile="dynamic",
            eval_capable=True,
            side_channel_endpoint=endpoint,
            exec_split=PROFILES[kernel.lang].channel("instantiate") == EXEC,
        )
        binding = KernelBinding(descriptor, kernel=kernel, wire=wire, server=server)
        self.bindings[kernel.kernel_id] = binding
        self.registry.add_kernel(kernel.kernel_id)
        kernel.dispatch = self._dispatcher_for(kernel.kernel_id)
        return binding

    def register_remote(self, descriptor: KernelDescriptor) -> KernelBinding:
        """Admit a kernel that lives in another process and speaks HTTP."""
        if self.transport_mode != SIDE_CHANNEL:
            raise KernelUnavailableError(
                "remote kernels need the side-channel transport"
            )
        if not descriptor.side_channel_endpoint:
            raise KernelUnavailableError(
                f"kernel {descriptor.kernel_id!r} offers no side-channel endpoint"
            )
        binding = KernelBinding(descriptor)
        self.bindings[descriptor.kernel_id] = binding
        self.registry.add_kernel(descriptor.kernel_id)
        log.info(
            "registered remote kernel %s (%s) at %s",
            descriptor.kernel_id, descriptor.lang, descriptor.side_channel_endpoint,
        )
        return binding

    def descriptors(self) -> list[KernelDescriptor]:
        return [b.descriptor for b in self.bindings.values()]

    def _dispatcher_for(self, origin_kernel: str):
        return lambda target, ir: self.dispatch(target, ir, origin_kernel=origin_kernel)

    # -- dispatch -------------------------------------------------------

    def dispatch(
        self,
        target_kernel: str,
        ir: IR,
        origin_kernel: str,
        correlation_id: str | None = None,
        depth: int | None = None,
    ) -> str:
        """Route one operation to its owning kernel; returns encoded result
        text.  ``correlation_id``/``depth`` describe the CALLER's evaluation
        and default to the call context of the current thread."""
        caller = CURRENT_CALL.get()
        if correlation_id is None:
            correlation_id = caller.correlation_id if caller else str(uuid.uuid4())
        if depth is None:
            depth = caller.depth if caller else 0
        hop_depth = depth + 1
        if hop_depth > self.depth_limit:
            raise RecursionLimitError(
                f"call chain {correlation_id} exceeded {self.depth_limit} cross-kernel hops"
            )
        with self._lock:
            if hop_depth > self._depth_seen.get(correlation_id, 0):
                self._depth_seen[correlation_id] = hop_depth

        binding = self.bindings.get(target_kernel)
        if binding is None:
            raise KernelUnavailableError(f"no kernel {target_kernel!r} in this session")

        fresh_key = str(uuid.uuid4()) if ir.kind == "instantiate" else None
        profile = PROFILES.get(binding.descriptor.lang)
        if profile is None:
            raise CodegenError(f"no code templates for language {binding.descriptor.lang!r}")
        generated = generate(ir, profile, fresh_key=fresh_key)
        self._trace(
            {
                "event": "dispatch",
                "correlation_id": correlation_id,
                "depth": hop_depth,
                "origin": origin_kernel,
                "target": target_kernel,
                "ir": ir_to_json(ir),
                "channel": generated.channel,
            }
        )
        info = CallInfo(correlation_id, hop_depth, origin_kernel)
        if self.transport_mode == SIDE_CHANNEL:
            result = self._route_http(binding, generated, info)
        else:
            result = self._route_wire(binding, generated, info)
        self._trace(
            {
                "event": "result",
                "correlation_id": correlation_id,
                "depth": hop_depth,
                "target": target_kernel,
                "result": result,
            }
        )
        return result

    def _route_http(self, binding: KernelBinding, generated, info: CallInfo) -> str:
        endpoint = binding.descriptor.side_channel_endpoint
        path = "/exec" if generated.channel == EXEC else "/eval"
        payload = {
            "code": generated.code,
            "correlation_id": info.correlation_id,
            "depth": info.depth,
            "origin_kernel": info.origin_kernel,
        }
        try:
            resp = requests.post(endpoint + path, json=payload, timeout=self.call_timeout)
        except requests.exceptions.Timeout:
            raise TransportTimeoutError(
                f"kernel {binding.descriptor.kernel_id!r} did not answer within "
                f"{self.call_timeout}s",
                correlation_id=info.correlation_id,
            ) from None
        except requests.exceptions.ConnectionError as exc:
            raise KernelUnavailableError(
                f"kernel {binding.descriptor.kernel_id!r} unreachable at {endpoint}: {exc}"
            ) from None
        data = resp.json()
        if data.get("status") != "ok":
            raise_from_payload(data)
        return data["result"]

    def _route_wire(self, binding: KernelBinding, generated, info: CallInfo) -> str:
        kernel, wire = binding.kernel, binding.wire
        if kernel is None or wire is None:
            raise KernelUnavailableError(
                f"kernel {binding.descriptor.kernel_id!r} has no in-process wire"
            )
        runner = kernel.exec_code if generated.channel == EXEC else kernel.eval_code
        return wire.submit(
            lambda: with_call_info(info, runner, generated.code),
            timeout=self.call_timeout,
        )

    # -- introspection and lifecycle ------------------------------------

    def max_depth_seen(self, correlation_id: str) -> int:
        with self._lock:
            return self._depth_seen.get(correlation_id, 0)

    def store_dump(self, kernel_id: str) -> dict[str, str]:
        binding = self.bindings.get(kernel_id)
        if binding is None:
            raise KernelUnavailableError(f"no kernel {kernel_id!r} in this session")
        if binding.kernel is not None:
            return binding.kernel.store.dump()
        resp = requests.get(
            binding.descriptor.side_channel_endpoint + "/store", timeout=self.call_timeout
        )
        return resp.json()["objects"]

    def shutdown(self) -> None:
        for binding in self.bindings.values():
            if binding.server is not None:
                binding.server.stop()
            if binding.wire is not None:
                binding.wire.close()

    def _trace(self, event: dict) -> None:
        if self.trace is not None:
            self.trace(event)


# ---------------------------------------------------------------------------
# the broker's own HTTP surface


class BrokerServer:
    """HTTP face of a broker, for adapters in other processes.

    POST /ffi     route an operation: {"target_kernel", "ir", "origin_kernel",
                  "correlation_id", "depth"}
    POST /kernels register a kernel descriptor
    GET  /kernels list descriptors
    GET  /registry symbol table snapshot
    GET  /store/<kernel> object store snapshot
    GET  /stats   per-correlation max hop depth
    GET  /health  liveness
    """

    def __init__(self, broker: Broker, host: str = "127.0.0.1", port: int = 0):
        self.broker = broker
        self._httpd = ThreadingHTTPServer((host, port), self._make_handler())
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.05),
            name="broker-http",
            daemon=True,
        )

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "BrokerServer":
        self._thread.start()
        log.info("broker serving at %s", self.endpoint)
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def _make_handler(self):
        broker = self.broker

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # noqa: N802
                log.debug("broker %s", fmt % args)

            def _reply(self, code: int, payload: dict):
                body = json.dumps(payload).encode()
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def _body(self) -> dict:
                length = int(self.headers.get("Content-Length", "0"))
                return json.loads(self.rfile.read(length) or b"{}")

            def do_GET(self):  # noqa: N802
                if self.path == "/health":
                    self._reply(200, {"status": "ok", "kernels": sorted(broker.bindings)})
                elif self.path == "/kernels":
                    self._reply(
                        200, {"kernels": [d.to_wire() for d in broker.descriptors()]}
                    )
                elif self.path == "/registry":
                    self._reply(200, broker.registry.snapshot())
                elif self.path == "/stats":
                    with broker._lock:
                        seen = dict(broker._depth_seen)
                    self._reply(200, {"depth_seen": seen})
                elif self.path.startswith("/store/"):
                    kernel_id = self.path[len("/store/") :]
                    try:
                        objects = broker.store_dump(kernel_id)
                    except Exception as exc:  # noqa: BLE001
                        self._reply(404, error_payload(exc, "broker"))
                        return
                    self._reply(200, {"kernel_id": kernel_id, "objects": objects})
                else:
                    self._reply(404, {"status": "error", "ename": "NotFound", "evalue": self.path})

            def do_POST(self):  # noqa: N802
                try:
                    data = self._body()
                except ValueError as exc:
                    self._reply(400, error_payload(exc, "broker"))
                    return
                if self.path == "/ffi":
                    self._ffi(data)
                elif self.path == "/kernels":
                    self._register(data)
                else:
                    self._reply(404, {"status": "error", "ename": "NotFound", "evalue": self.path})

            def _ffi(self, data: dict):
                try:
                    raw_ir = data["ir"]
                    ir = ir_from_json(
                        raw_ir if isinstance(raw_ir, str) else json.dumps(raw_ir)
                    )
                    result = broker.dispatch(
                        data["target_kernel"],
                        ir,
                        origin_kernel=data.get("origin_kernel", ""),
                        correlation_id=data.get("correlation_id") or None,
                        depth=int(data.get("depth", 0)),
                    )
                except Exception as exc:  # noqa: BLE001 - serialized for the caller
                    self._reply(200, error_payload(exc, "broker"))
                    return
                self._reply(200, {"status": "ok", "result": result})

            def _register(self, data: dict):
                try:
                    descriptor = KernelDescriptor.from_wire(data)
                    broker.register_remote(descriptor)
                except Exception as exc:  # noqa: BLE001
                    self._reply(400, error_payload(exc, "broker"))
                    return
                self._reply(200, {"status": "ok", "kernel_id": descriptor.kernel_id})

        return Handler

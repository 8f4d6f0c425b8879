"""Sessions: several kernels, one broker, cells executed in order.

A session owns the broker, the symbol registry, and the print log.  Cells
are rewritten against the registry before they run, execute on their
kernel's wire under a fresh correlation id, and contribute their
definitions back to the registry afterwards.

Two execution styles:

  * ``run_cell``: incremental, REPL-style.  A cell only sees symbols from
    cells that already ran.
  * ``run_notebook``: two-phase.  All cells are registered first, then
    executed in order, so mutually recursive definitions across kernels
    work no matter which cell comes first.  (The REPL cannot do this; a
    forward reference there fails at runtime like any undefined name.)
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import requests

from .broker import DEFAULT_DEPTH_LIMIT, DEFAULT_TIMEOUT, SIDE_CHANNEL, WIRE, Broker
from .cellscript.interp import cs_format
from .cellscript.kernel import CellscriptKernel
from .errors import ConfigError, KernelUnavailableError
from .registry import Registry
from .rewriter import rewrite_cell
from .transport import CallInfo, raise_from_payload, with_call_info
from .wire import KernelDescriptor, is_ref_map


@dataclass
class CellOutput:
    kernel_id: str
    index: int
    displayed: str | None
    printed: list[str]
    correlation_id: str
    error: Exception | None = None


def transcript(outputs: list[CellOutput]) -> list[str]:
    """Flatten executed cells into display lines: the prints each cell
    produced (wherever in the session they were emitted), then its result."""
    lines: list[str] = []
    for out in outputs:
        lines.extend(out.printed)
        if out.displayed is not None:
            lines.append("=> " + out.displayed)
    return lines


class Session:
    def __init__(
        self,
        transport_mode: str = SIDE_CHANNEL,
        call_timeout: float = DEFAULT_TIMEOUT,
        depth_limit: int = DEFAULT_DEPTH_LIMIT,
        trace: Callable[[dict], None] | None = None,
        rewrite: bool = True,
    ):
        self.registry = Registry()
        self.broker = Broker(
            registry=self.registry,
            transport_mode=transport_mode,
            call_timeout=call_timeout,
            depth_limit=depth_limit,
            trace=trace,
        )
        self.rewrite_enabled = rewrite
        self.kernels: dict[str, CellscriptKernel] = {}
        self.print_log: list[str] = []
        self._log_lock = threading.Lock()
        self._counter = 0
        self.last_correlation_id: str | None = None

    # -- membership -----------------------------------------------------

    def add_kernel(self, kernel_id: str, lang: str = "cellscript") -> CellscriptKernel:
        if lang != "cellscript":
            raise ConfigError(
                f"kernel {kernel_id!r}: only cellscript kernels run in-process; "
                f"attach {lang!r} kernels through their adapter endpoint"
            )
        if kernel_id in self.broker.bindings:
            raise ConfigError(f"duplicate kernel id {kernel_id!r}")
        kernel = CellscriptKernel(kernel_id, print_sink=self._log_print)
        self.kernels[kernel_id] = kernel
        self.broker.add_local_kernel(kernel)
        return kernel

    def attach_remote(self, descriptor: KernelDescriptor) -> None:
        self.broker.register_remote(descriptor)

    def _log_print(self, line: str) -> None:
        with self._log_lock:
            self.print_log.append(line)

    # -- execution ------------------------------------------------------

    def run_cell(
        self, kernel_id: str, source: str, cell_timeout: float | None = None
    ) -> CellOutput:
        """Execute one cell incrementally and register what it defines."""
        output = self._execute(kernel_id, source, cell_timeout)
        binding = self.broker.bindings[kernel_id]
        self.registry.add_cell(kernel_id, output.index, source, binding.descriptor.lang)
        return output

    def run_notebook(
        self,
        cells: list[tuple[str, str]],
        cell_timeout: float | None = None,
        on_error: str = "raise",
    ) -> list[CellOutput]:
        """Register every cell, then execute in order (two-phase).

        ``on_error="continue"`` turns a failing cell into an output with
        its ``error`` set and keeps going, batch-runner style.
        """
        base = self._counter
        for offset, (kernel_id, source) in enumerate(cells):
            binding = self.broker.bindings.get(kernel_id)
            if binding is None:
                raise KernelUnavailableError(f"no kernel {kernel_id!r} in this session")
            self.registry.add_cell(
                kernel_id, base + offset, source, binding.descriptor.lang
            )
        outputs = []
        for kernel_id, source in cells:
            mark = len(self.print_log)
            try:
                outputs.append(self._execute(kernel_id, source, cell_timeout))
            except Exception as exc:  # noqa: BLE001 - cell errors become outputs
                if on_error != "continue":
                    raise
                outputs.append(
                    CellOutput(
                        kernel_id,
                        self._counter - 1,
                        None,
                        self.print_log[mark:],
                        self.last_correlation_id or "",
                        error=exc,
                    )
                )
        return outputs

    def _execute(
        self, kernel_id: str, source: str, cell_timeout: float | None
    ) -> CellOutput:
        binding = self.broker.bindings.get(kernel_id)
        if binding is None:
            raise KernelUnavailableError(f"no kernel {kernel_id!r} in this session")
        index = self._counter
        self._counter += 1
        corr = str(uuid.uuid4())
        self.last_correlation_id = corr
        mark = len(self.print_log)

        if binding.kernel is None:
            displayed = self._execute_remote(binding, source, corr)
            return CellOutput(kernel_id, index, displayed, [], corr)

        kernel: CellscriptKernel = binding.kernel
        to_run = source
        if self.rewrite_enabled and binding.descriptor.lang == "cellscript":
            to_run = rewrite_cell(
                source, kernel_id, self.registry, set(kernel.interp.globals)
            ).text
        info = CallInfo(corr, 0, kernel_id)
        result = binding.wire.submit(
            lambda: with_call_info(info, kernel.run_cell, to_run),
            timeout=cell_timeout,
        )
        return CellOutput(
            kernel_id, index, result.displayed, self.print_log[mark:], corr
        )

    def _execute_remote(self, binding, source: str, corr: str) -> str | None:
        """Ship a whole cell to an adapter's exec endpoint.  Remote prints
        stay on the remote process's stdout; only the result comes back."""
        endpoint = binding.descriptor.side_channel_endpoint
        try:
            resp = requests.post(
                endpoint + "/exec",
                json={
                    "code": source,
                    "correlation_id": corr,
                    "depth": 0,
                    "origin_kernel": binding.descriptor.kernel_id,
                },
                timeout=self.broker.call_timeout,
            )
        except requests.exceptions.ConnectionError as exc:
            raise KernelUnavailableError(
                f"kernel {binding.descriptor.kernel_id!r} unreachable: {exc}"
            ) from None
        data = resp.json()
        if data.get("status") != "ok":
            raise_from_payload(data)
        return _display_encoded(data.get("result"))

    def close(self) -> None:
        self.broker.shutdown()

    def __enter__(self) -> "Session":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _display_encoded(text: str | None) -> str | None:
    """Display form of an encoded result from a remote kernel."""
    if text is None:
        return None
    value = json.loads(text)
    if value is None:
        return None
    if is_ref_map(value):
        return f"<{value.get('typeName') or 'object'}>"
    return cs_format(value)


# ---------------------------------------------------------------------------
# configuration and notebook files


def session_from_config(cfg: dict, trace=None) -> Session:
    """Build a session from a config mapping (see docs/notebook-format.md)."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    transport = cfg.get("transport", SIDE_CHANNEL)
    if transport not in (SIDE_CHANNEL, WIRE):
        raise ConfigError(f"unknown transport {transport!r}")
    timeout_raw = cfg.get("timeout", cfg.get("call_timeout", DEFAULT_TIMEOUT))
    try:
        call_timeout = float(timeout_raw)
        depth_limit = int(cfg.get("depth_limit", DEFAULT_DEPTH_LIMIT))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric option: {exc}") from None
    if call_timeout <= 0 or depth_limit <= 0:
        raise ConfigError("call_timeout and depth_limit must be positive")
    kernels = cfg.get("kernels")
    if not isinstance(kernels, list) or not kernels:
        raise ConfigError("config needs a non-empty 'kernels' list")
    session = Session(
        transport_mode=transport,
        call_timeout=call_timeout,
        depth_limit=depth_limit,
        trace=trace,
    )
    try:
        for spec in kernels:
            if not isinstance(spec, dict) or "id" not in spec:
                raise ConfigError(f"bad kernel spec {spec!r}")
            lang = spec.get("lang", "cellscript")
            if lang == "cellscript":
                session.add_kernel(spec["id"], lang)
            elif "endpoint" in spec:
                session.attach_remote(
                    KernelDescriptor(
                        kernel_id=spec["id"],
                        lang=lang,
                        side_channel_endpoint=spec["endpoint"],
                        exec_split=lang == "python",
                    )
                )
            else:
                raise ConfigError(
                    f"kernel {spec['id']!r}: non-cellscript kernels need an 'endpoint'"
                )
    except Exception:
        session.close()
        raise
    return session


@dataclass
class Notebook:
    config: dict = field(default_factory=dict)
    cells: list[tuple[str, str]] = field(default_factory=list)


def load_notebook(path: str | Path) -> Notebook:
    """Read a notebook file: session options plus an ordered cell list.

    Two shapes are accepted: a bare JSON array of {kernel, lang, source}
    cells, or an object with a "cells" list plus session options (the
    array form is shorthand for an object with nothing but cells).
    """
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read notebook: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"notebook is not valid JSON: {exc}") from None
    if isinstance(raw, list):
        raw = {"cells": raw}
    if not isinstance(raw, dict) or "cells" not in raw:
        raise ConfigError("notebook needs a 'cells' list")
    cells: list[tuple[str, str]] = []
    langs: dict[str, str] = {}
    for i, cell in enumerate(raw["cells"]):
        if not isinstance(cell, dict) or "kernel" not in cell or "source" not in cell:
            raise ConfigError(f"cell {i} needs 'kernel' and 'source'")
        source = cell["source"]
        if isinstance(source, list):
            source = "".join(source)
        if not isinstance(source, str):
            raise ConfigError(f"cell {i}: source must be text or a list of lines")
        lang = cell.get("lang", "cellscript")
        kernel_id = cell["kernel"]
        if langs.setdefault(kernel_id, lang) != lang:
            raise ConfigError(f"cell {i}: kernel {kernel_id!r} used with two languages")
        cells.append((kernel_id, source))
    config = {k: v for k, v in raw.items() if k != "cells"}
    if "kernels" not in config:
        config["kernels"] = [{"id": kid, "lang": lang} for kid, lang in langs.items()]
    return Notebook(config=config, cells=cells)

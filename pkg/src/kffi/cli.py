"""Command line front end.

Subcommands:

  serve     run the broker as a long-lived service with configured kernels
  run       execute a notebook file in batch, printing a transcript
  repl      interactive multi-kernel prompt
  registry  print the symbol table of a running broker, one JSON line each
  store     print one kernel's parked objects from a running broker
  rewrite   print cells of a notebook after foreign-reference rewriting

Exit codes: 0 success, 1 cell error (run), 2 bad config or usage,
3 port already taken (serve).  KFFI_LOG sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path

import requests

from .errors import ConfigError, ForeignError
from .registry import Registry
from .rewriter import rewrite_cell
from .session import load_notebook, session_from_config

DEFAULT_BROKER = "http://127.0.0.1:8787"


def _setup_logging() -> None:
    level_name = os.environ.get("KFFI_LOG", "").upper()
    level = getattr(logging, level_name, None) if level_name else None
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _print_err(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args) -> int:
    from .broker import BrokerServer

    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        _print_err(f"bad config: {exc}")
        return 2
    try:
        session = session_from_config(cfg)
    except ConfigError as exc:
        _print_err(f"bad config: {exc}")
        return 2

    broker_cfg = cfg.get("broker") or {}
    if not isinstance(broker_cfg, dict):
        session.close()
        _print_err("bad config: 'broker' must be an object")
        return 2
    host = args.host or broker_cfg.get("host", "127.0.0.1")
    port = args.port if args.port is not None else broker_cfg.get("port", 8787)
    try:
        server = BrokerServer(session.broker, host=host, port=int(port))
    except OSError as exc:
        session.close()
        _print_err(f"cannot bind {host}:{port}: {exc}")
        return 3
    server.start()
    for kernel_id, binding in session.broker.bindings.items():
        logging.getLogger("kffi.cli").info(
            "kernel %s (%s) ready", kernel_id, binding.descriptor.lang
        )
    print(f"kffi broker listening on {server.endpoint}", flush=True)

    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    stop.wait()
    server.stop()
    session.close()
    return 0


# ---------------------------------------------------------------------------
# run


def _error_record(out) -> dict:
    exc = out.error
    record = {
        "cell": out.index,
        "kernel": out.kernel_id,
        "error": type(exc).__name__,
        "message": str(exc),
    }
    if isinstance(exc, ForeignError):
        record["error"] = exc.ename
        record["origin"] = exc.origin_kernel
    return record


def cmd_run(args) -> int:
    try:
        nb = load_notebook(args.file)
    except ConfigError as exc:
        _print_err(f"bad notebook: {exc}")
        return 2

    trace = None
    if args.trace:
        # Wire-true trace: each dispatched operation's exact JSON, one per
        # line on stderr so stdout stays a clean transcript.
        def trace(event):
            if event.get("event") == "dispatch":
                print(event["ir"], file=sys.stderr, flush=True)

    try:
        session = session_from_config(nb.config, trace=trace)
    except ConfigError as exc:
        _print_err(f"bad notebook: {exc}")
        return 2
    try:
        outputs = session.run_notebook(nb.cells, on_error="continue")
    finally:
        session.close()

    failed = False
    for out in outputs:
        for line in out.printed:
            print(line)
        if out.displayed is not None:
            print(out.displayed)
        if out.error is not None:
            failed = True
            print(json.dumps(_error_record(out)))
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# repl

REPL_HELP = (
    "commands: :kernel <id>  switch kernel | :registry  list symbols | "
    ":store <id>  list parked objects | :trace on|off  print dispatched "
    "operations | :quit"
)


def _print_registry_lines(snapshot: dict) -> None:
    for kernel_id, table in snapshot.items():
        for name, record in table.items():
            print(json.dumps({"kernel": kernel_id, "name": name, **record}))


def _print_store_lines(objects: dict) -> None:
    for key, type_name in sorted(objects.items()):
        print(json.dumps({"key": key, "typeName": type_name}))


def cmd_repl(args) -> int:
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            _print_err(f"bad config: {exc}")
            return 2
    else:
        cfg = {"kernels": [{"id": "a"}, {"id": "b"}]}

    tracing = {"on": False}

    def trace(event):
        if tracing["on"] and event.get("event") == "dispatch":
            print(event["ir"], flush=True)

    try:
        session = session_from_config(cfg, trace=trace)
    except ConfigError as exc:
        _print_err(f"bad config: {exc}")
        return 2

    current = next(iter(session.broker.bindings))
    print(f"kernels: {', '.join(session.broker.bindings)}; {REPL_HELP}")
    buffer: list[str] = []
    try:
        while True:
            prompt = f"{current}> " if not buffer else f"{current}| "
            try:
                line = input(prompt)
            except EOFError:
                break
            if not buffer and line.startswith(":"):
                words = line.split()
                if words[0] == ":quit":
                    break
                elif words[0] == ":kernel" and len(words) == 2:
                    if words[1] in session.broker.bindings:
                        current = words[1]
                    else:
                        print(f"no kernel {words[1]!r}")
                elif words[0] == ":registry":
                    _print_registry_lines(session.registry.snapshot())
                elif words[0] == ":store" and len(words) == 2:
                    try:
                        _print_store_lines(session.broker.store_dump(words[1]))
                    except Exception as exc:  # noqa: BLE001
                        print(f"error: {exc}")
                elif words[0] == ":trace" and len(words) == 2 and words[1] in ("on", "off"):
                    tracing["on"] = words[1] == "on"
                else:
                    print(REPL_HELP)
                continue
            buffer.append(line)
            source = "\n".join(buffer)
            if not source.strip():
                buffer.clear()
                continue
            try:
                out = session.run_cell(current, source)
            except Exception as exc:  # noqa: BLE001
                if "'eof'" in str(exc):
                    continue  # statement not finished; keep reading
                buffer.clear()
                print(f"error: {exc}")
                continue
            buffer.clear()
            for printed in out.printed:
                print(printed)
            if out.displayed is not None:
                print(out.displayed)
    finally:
        session.close()
    return 0


# ---------------------------------------------------------------------------
# registry / store against a running broker


def cmd_registry(args) -> int:
    url = args.broker.rstrip("/")
    try:
        resp = requests.get(url + "/registry", timeout=10)
    except requests.exceptions.ConnectionError:
        _print_err(f"no broker at {url}")
        return 1
    _print_registry_lines(resp.json())
    return 0


def cmd_store(args) -> int:
    url = args.broker.rstrip("/")
    try:
        resp = requests.get(f"{url}/store/{args.kernel}", timeout=10)
    except requests.exceptions.ConnectionError:
        _print_err(f"no broker at {url}")
        return 1
    data = resp.json()
    if resp.status_code != 200:
        _print_err(f"error: {data.get('evalue', resp.status_code)}")
        return 1
    _print_store_lines(data["objects"])
    return 0


# ---------------------------------------------------------------------------
# rewrite


def cmd_rewrite(args) -> int:
    try:
        nb = load_notebook(args.file)
    except ConfigError as exc:
        _print_err(f"bad notebook: {exc}")
        return 2
    langs = {
        spec["id"]: spec.get("lang", "cellscript") for spec in nb.config["kernels"]
    }
    if args.kernel not in langs:
        _print_err(f"no cells for kernel {args.kernel!r}")
        return 2
    registry = Registry()
    for kernel_id in langs:
        registry.add_kernel(kernel_id)
    for index, (kernel_id, source) in enumerate(nb.cells):
        registry.add_cell(kernel_id, index, source, langs[kernel_id])
    chunks = []
    for kernel_id, source in nb.cells:
        if kernel_id != args.kernel:
            continue
        chunks.append(rewrite_cell(source, kernel_id, registry).text)
    print("\n".join(chunks))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kffi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the broker service")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.set_defaults(fn=cmd_serve)

    p_run = sub.add_parser("run", help="execute a notebook file")
    p_run.add_argument("file")
    p_run.add_argument("--trace", action="store_true")
    p_run.set_defaults(fn=cmd_run)

    p_repl = sub.add_parser("repl", help="interactive prompt")
    p_repl.add_argument("--config", default=None)
    p_repl.set_defaults(fn=cmd_repl)

    p_reg = sub.add_parser("registry", help="dump a running broker's symbols")
    p_reg.add_argument("--broker", default=DEFAULT_BROKER)
    p_reg.set_defaults(fn=cmd_registry)

    p_store = sub.add_parser("store", help="dump one kernel's parked objects")
    p_store.add_argument("kernel")
    p_store.add_argument("--broker", default=DEFAULT_BROKER)
    p_store.set_defaults(fn=cmd_store)

    p_rw = sub.add_parser("rewrite", help="print rewritten notebook cells")
    p_rw.add_argument("--kernel", required=True)
    p_rw.add_argument("file")
    p_rw.set_defaults(fn=cmd_rewrite)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

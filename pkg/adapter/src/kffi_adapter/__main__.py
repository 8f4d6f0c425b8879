"""Launch a Python guest kernel and register it with a running broker.

    python3 -m kffi_adapter --broker http://127.0.0.1:8787 --id py --port 0
"""

import argparse
import logging
import os
import signal
import sys
import threading

from .runtime import BrokerUnreachable, GuestRuntime
from .server import AdapterServer


def main(argv=None) -> int:
    level_name = os.environ.get("KFFI_LOG", "").upper()
    level = getattr(logging, level_name, None) if level_name else None
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = argparse.ArgumentParser(prog="kffi-adapter", description=__doc__)
    parser.add_argument("--broker", required=True, help="broker base URL")
    parser.add_argument("--id", default="py", help="kernel id to register as")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0)
    parser.add_argument("--timeout", type=float, default=30.0)
    args = parser.parse_args(argv)

    runtime = GuestRuntime(args.id, args.broker, timeout=args.timeout)
    try:
        server = AdapterServer(runtime, host=args.host, port=args.port)
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 3
    server.start()
    try:
        runtime.register(server.endpoint)
    except BrokerUnreachable as exc:
        print(f"registration failed: {exc}", file=sys.stderr)
        server.stop()
        return 1
    print(f"kffi-adapter {args.id} serving on {server.endpoint}", flush=True)

    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    stop.wait()
    server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())

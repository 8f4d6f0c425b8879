"""Guest runtime: one persistent Python namespace plus a broker client.

All cross-kernel traffic goes through the broker's /ffi endpoint as an
operation record:

    {"type": "function",    "name": ..., "args": "<json array text>"}
    {"type": "variable",    "name": ...}
    {"type": "method",      "obj": ..., "method": ..., "args": ...}
    {"type": "instantiate", "class": ..., "args": ...}
    {"type": "delete",      "name": ...}

The namespace carries the helper names that generated code uses
(globalVars, myArgsDecode, myReturnEncode, myResolveObj, myMakeRef,
myDeleteVar) and the helpers user cells call directly (kffi_call,
kffi_var, kffi_new, kffi_release).
"""

from __future__ import annotations

import ast
import json
import threading
import time
import urllib.error
import urllib.request
import uuid

from .marshal import EncodedResult, Marshal, MarshalError, RemoteRef


class ForeignCallError(Exception):
    """An operation failed in another kernel; original error preserved."""

    def __init__(self, ename: str, evalue: str, trace: str = "", origin: str = ""):
        self.ename = ename
        self.evalue = evalue
        self.trace = trace
        self.origin = origin
        super().__init__(f"{ename}: {evalue}" + (f" (in kernel {origin})" if origin else ""))


class BrokerUnreachable(Exception):
    pass


class _CallContext(threading.local):
    """Correlation id and hop depth of the evaluation running on this
    thread, stamped by the HTTP server per request."""

    def __init__(self):
        self.correlation_id: str | None = None
        self.depth: int = 0


def _post_json(url: str, payload: dict, timeout: float) -> dict:
    body = json.dumps(payload).encode()
    req = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        try:
            return json.loads(exc.read())
        except (ValueError, OSError):
            raise BrokerUnreachable(f"{url}: HTTP {exc.code}") from None
    except (urllib.error.URLError, OSError) as exc:
        raise BrokerUnreachable(f"{url}: {exc}") from None


class GuestRuntime:
    def __init__(self, kernel_id: str, broker_url: str, timeout: float = 30.0):
        self.kernel_id = kernel_id
        self.broker_url = broker_url.rstrip("/")
        self.timeout = timeout
        self.global_vars: dict[str, object] = {}
        self.marshal = Marshal(kernel_id, self.global_vars, self._make_proxy)
        self.ctx = _CallContext()
        self.ns: dict = {
            "__name__": "__kffi_guest__",
            "globalVars": self.global_vars,
            "myArgsDecode": self._args_decode,
            "myReturnEncode": self._return_encode,
            "myResolveObj": self._resolve_obj,
            "myMakeRef": self._make_ref,
            "myDeleteVar": self._delete_var,
            "kffi_call": self.kffi_call,
            "kffi_var": self.kffi_var,
            "kffi_new": self.kffi_new,
            "kffi_release": self.kffi_release,
        }

    # -- helpers generated code relies on -------------------------------

    def _args_decode(self, text: str) -> list:
        return self.marshal.decode_args(text)

    def _return_encode(self, value) -> EncodedResult:
        return EncodedResult(self.marshal.encode(value))

    def _resolve_obj(self, identifier: str):
        if identifier in self.global_vars:
            return self.global_vars[identifier]
        if identifier in self.ns:
            return self.ns[identifier]
        raise MarshalError(f"unknown object {identifier!r}")

    def _make_ref(self, key: str) -> EncodedResult:
        return EncodedResult(
            json.dumps(self.marshal.ref_map(key), ensure_ascii=False)
        )

    def _delete_var(self, name: str) -> EncodedResult:
        if name in self.global_vars:
            del self.global_vars[name]
        elif name in self.ns:
            del self.ns[name]
        return EncodedResult("null")

    # -- helpers user cells call ----------------------------------------

    def kffi_call(self, kernel: str, name: str, *args):
        op = {"type": "function", "name": name, "args": self.marshal.encode_args(list(args))}
        return self._dispatch(kernel, op)

    def kffi_var(self, kernel: str, name: str):
        return self._dispatch(kernel, {"type": "variable", "name": name})

    def kffi_new(self, kernel: str, class_name: str, *args):
        op = {
            "type": "instantiate",
            "class": class_name,
            "args": self.marshal.encode_args(list(args)),
        }
        return self._dispatch(kernel, op)

    def kffi_release(self, obj) -> bool:
        if isinstance(obj, RemoteRef):
            self._dispatch(obj.lang, {"type": "delete", "name": obj.varname})
            return True
        for key, existing in list(self.global_vars.items()):
            if existing is obj:
                del self.global_vars[key]
                return True
        return False

    # -- dispatch -------------------------------------------------------

    def _make_proxy(self, ref_map: dict) -> RemoteRef:
        return RemoteRef(ref_map, self._call_method)

    def _call_method(self, proxy: RemoteRef, method: str, args: list):
        op = {
            "type": "method",
            "obj": proxy.varname,
            "method": method,
            "args": self.marshal.encode_args(args),
        }
        return self._dispatch(proxy.lang, op)

    def _dispatch(self, target_kernel: str, op: dict):
        correlation = self.ctx.correlation_id or str(uuid.uuid4())
        data = _post_json(
            self.broker_url + "/ffi",
            {
                "target_kernel": target_kernel,
                "ir": op,
                "origin_kernel": self.kernel_id,
                "correlation_id": correlation,
                "depth": self.ctx.depth,
            },
            self.timeout,
        )
        if data.get("status") != "ok":
            raise ForeignCallError(
                data.get("ename", "Error"),
                data.get("evalue", ""),
                data.get("trace", ""),
                data.get("origin_kernel", ""),
            )
        result = data.get("result")
        return None if result is None else self.marshal.decode(result)

    # -- cell execution -------------------------------------------------

    def eval_source(self, code: str) -> str:
        value = eval(code, self.ns)  # noqa: S307 - this is the eval endpoint
        return self._as_text(value)

    def exec_source(self, code: str) -> str:
        """Run statements.  A trailing expression becomes the result;
        otherwise the code may leave its result in myLastResult (the
        convention generated instantiate/delete code follows)."""
        tree = ast.parse(code)
        if tree.body and isinstance(tree.body[-1], ast.Expr):
            head = ast.Module(body=tree.body[:-1], type_ignores=[])
            tail = ast.Expression(body=tree.body[-1].value)
            exec(compile(head, "<cell>", "exec"), self.ns)  # noqa: S102
            value = eval(compile(tail, "<cell>", "eval"), self.ns)  # noqa: S307
        else:
            exec(compile(tree, "<cell>", "exec"), self.ns)  # noqa: S102
            value = self.ns.pop("myLastResult", None)
        return self._as_text(value)

    def _as_text(self, value) -> str:
        if isinstance(value, EncodedResult):
            return value.text
        return self.marshal.encode(value)

    # -- registration ---------------------------------------------------

    def descriptor(self, endpoint: str) -> dict:
        return {
            "kernel_id": self.kernel_id,
            "lang": "python",
            "type_profile": "dynamic",
            "eval_capable": True,
            "side_channel_endpoint": endpoint,
            "exec_split": True,
        }

    def register(self, endpoint: str, retries: int = 40, delay: float = 0.25) -> None:
        """Announce this kernel to the broker, waiting for it to come up."""
        last: Exception | None = None
        for _ in range(retries):
            try:
                data = _post_json(
                    self.broker_url + "/kernels", self.descriptor(endpoint), self.timeout
                )
            except BrokerUnreachable as exc:
                last = exc
                time.sleep(delay)
                continue
            if data.get("status") == "ok":
                return
            raise BrokerUnreachable(f"broker rejected registration: {data}")
        raise BrokerUnreachable(f"broker never became reachable: {last}")

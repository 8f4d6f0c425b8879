"""End-to-end run against a real broker process.

Spawns ``kffi serve`` with two cellscript kernels plus this adapter in its
own process, then drives the public HTTP surfaces only: the broker's /ffi
and /kernels, and the kernels' side-channel /eval and /exec.  Covers every
operation kind, all three ways objects cross the boundary, and mutual
recursion between the guest and a cellscript kernel.
"""

import json
import socket
import subprocess
import sys
import time
import urllib.error
import urllib.request

import pytest

BOOT_TIMEOUT = 15.0


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def get(url):
    with urllib.request.urlopen(url, timeout=10) as resp:
        return resp.status, json.loads(resp.read().decode("utf-8"))


def post(url, payload):
    req = urllib.request.Request(
        url,
        data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read().decode("utf-8"))


def wait_until(check, timeout=BOOT_TIMEOUT, what="condition"):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            value = check()
        except OSError:
            value = None
        if value:
            return value
        time.sleep(0.1)
    raise TimeoutError(f"{what} not reached within {timeout}s")


class Stack:
    """The running processes plus the endpoints discovered from /kernels."""

    def __init__(self, broker_url, endpoints):
        self.broker_url = broker_url
        self.endpoints = endpoints

    def ffi(self, target, ir, origin="test", correlation_id=None, depth=0):
        payload = {
            "target_kernel": target,
            "ir": ir,
            "origin_kernel": origin,
            "depth": depth,
        }
        if correlation_id is not None:
            payload["correlation_id"] = correlation_id
        status, body = post(self.broker_url + "/ffi", payload)
        assert status == 200
        return body

    def run(self, kernel_id, code, path="/eval"):
        """Push source at a kernel's side channel, asserting success."""
        status, body = post(self.endpoints[kernel_id] + path, {"code": code})
        assert status == 200
        assert body["status"] == "ok", body
        return body["result"]

    def store(self, kernel_id):
        status, body = get(self.broker_url + "/store/" + kernel_id)
        assert status == 200
        return body["objects"]


@pytest.fixture(scope="module")
def stack(tmp_path_factory):
    cfg_path = tmp_path_factory.mktemp("cfg") / "session.json"
    cfg_path.write_text(
        json.dumps(
            {
                "transport": "side_channel",
                "kernels": [
                    {"id": "a", "lang": "cellscript"},
                    {"id": "b", "lang": "cellscript"},
                ],
            }
        )
    )
    broker_port = free_port()
    broker_url = f"http://127.0.0.1:{broker_port}"
    serve = subprocess.Popen(
        ["kffi", "serve", "--config", str(cfg_path), "--port", str(broker_port)],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    adapter = None
    try:
        wait_until(
            lambda: get(broker_url + "/health")[1].get("status") == "ok",
            what="broker health",
        )
        adapter = subprocess.Popen(
            [sys.executable, "-m", "kffi_adapter", "--broker", broker_url, "--id", "py"],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        descriptors = wait_until(
            lambda: {
                d["kernel_id"]: d
                for d in get(broker_url + "/kernels")[1]["kernels"]
            }
            if len(get(broker_url + "/kernels")[1]["kernels"]) == 3
            else None,
            what="adapter registration",
        )
        endpoints = {
            kid: d["side_channel_endpoint"] for kid, d in descriptors.items()
        }
        yield Stack(broker_url, endpoints)
    finally:
        for proc in (adapter, serve):
            if proc is None:
                continue
            proc.terminate()
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()


def test_adapter_descriptor(stack):
    _, body = get(stack.broker_url + "/kernels")
    desc = {d["kernel_id"]: d for d in body["kernels"]}["py"]
    assert desc["lang"] == "python"
    assert desc["type_profile"] == "dynamic"
    assert desc["eval_capable"] is True
    assert desc["exec_split"] is True
    assert desc["side_channel_endpoint"].startswith("http://")


def test_function_kind(stack):
    stack.run("py", "def calculate(a, b):\n    return a + b", path="/exec")
    body = stack.ffi(
        "py", {"type": "function", "name": "calculate", "args": "[1, 2]"}
    )
    assert body == {"status": "ok", "result": "3"}


def test_variable_kind(stack):
    stack.run("py", "answer = 6 * 7", path="/exec")
    body = stack.ffi("py", {"type": "variable", "name": "answer"})
    assert body == {"status": "ok", "result": "42"}


def test_method_kind_on_named_variable(stack):
    stack.run(
        "py",
        "class Greeter:\n"
        "    def process(self, text):\n"
        "        return text.upper()\n"
        "greeter = Greeter()",
        path="/exec",
    )
    body = stack.ffi(
        "py",
        {"type": "method", "obj": "greeter", "method": "process", "args": '["data"]'},
    )
    assert body == {"status": "ok", "result": '"DATA"'}


def test_instantiate_method_delete_cycle(stack):
    """Host-side construction: the first of the three reference patterns."""
    stack.run(
        "py",
        "class Tally:\n"
        "    def __init__(self, n):\n"
        "        self.n = n\n"
        "    def bump(self):\n"
        "        self.n += 1\n"
        "        return self.n",
        path="/exec",
    )
    body = stack.ffi(
        "py", {"type": "instantiate", "class": "Tally", "args": "[3]"}
    )
    assert body["status"] == "ok"
    ref = json.loads(body["result"])
    assert ref["__kffi_ref__"] is True
    assert ref["lang"] == "py"
    assert ref["typeName"] == "Tally"
    key = ref["varname"]
    assert stack.store("py")[key] == "Tally"

    body = stack.ffi(
        "py", {"type": "method", "obj": key, "method": "bump", "args": "[]"}
    )
    assert body["result"] == "4"

    body = stack.ffi("py", {"type": "delete", "name": key})
    assert body["status"] == "ok"
    assert key not in stack.store("py")


def test_local_object_driven_from_foreign_kernel(stack):
    """Second pattern: a guest-side object handed out as an argument, then
    driven back through callbacks."""
    stack.run("b", 'fn poke(t) { return t.describe("x"); }')
    result = stack.run(
        "py",
        "class Tool:\n"
        "    def describe(self, tag):\n"
        "        return 'tool-' + tag\n"
        "tool = Tool()\n"
        'kffi_call("b", "poke", tool)',
        path="/exec",
    )
    assert result == '"tool-x"'
    # The hand-out parked the object under some key in the guest's store.
    assert "Tool" in stack.store("py").values()


def test_returned_ref_passed_back_as_argument(stack):
    """Third pattern: a reference returned from one call is an argument to
    the next, resolving to the identical object in its owner."""
    stack.run(
        "b",
        "class Pot { fn init(v) { this.v = v; } "
        "fn add(n) { this.v = this.v + n; return this.v; } }\n"
        "fn fill(p, n) { return p.add(n); }",
    )
    result = stack.run(
        "py",
        'pot = kffi_new("b", "Pot", 5)\n'
        'kffi_call("b", "fill", pot, 6)',
        path="/exec",
    )
    assert result == "11"
    assert "Pot" in stack.store("b").values()
    stack.run("py", "kffi_release(pot)", path="/exec")
    assert "Pot" not in stack.store("b").values()


def test_mutual_recursion_across_processes(stack):
    stack.run(
        "b",
        "fn fact_cs(n) { if (n < 2) { return 1; } "
        'return n * kffi_call("py", "fact_py", n - 1); }',
    )
    stack.run(
        "py",
        "def fact_py(n):\n"
        "    if n < 2:\n"
        "        return 1\n"
        "    return n * kffi_call('b', 'fact_cs', n - 1)",
        path="/exec",
    )
    start = time.monotonic()
    body = stack.ffi(
        "py",
        {"type": "function", "name": "fact_py", "args": "[5]"},
        correlation_id="corr-fact",
    )
    elapsed = time.monotonic() - start
    assert body == {"status": "ok", "result": "120"}
    assert elapsed < 5.0
    # One hop per call: fact_py(5), fact_cs(4), fact_py(3), fact_cs(2), fact_py(1).
    _, stats = get(stack.broker_url + "/stats")
    assert stats["depth_seen"]["corr-fact"] == 5


def test_cellscript_calls_guest(stack):
    stack.run("py", "def negate(x):\n    return -x", path="/exec")
    result = stack.run("a", 'kffi_call("py", "negate", 8)')
    assert result == "-8"


def test_exec_channel_is_required_for_instantiate(stack):
    """The generated constructor code is statements, so only the /exec
    channel can run it; /eval refuses the same shape."""
    status, body = post(
        stack.endpoints["py"] + "/eval",
        {"code": 'globalVars["zz"] = dict()\nmyLastResult = myMakeRef("zz")'},
    )
    assert status == 200
    assert body["status"] == "error"
    assert body["ename"] == "SyntaxError"
    # Instantiate through the broker succeeds because it rides /exec.
    stack.run("py", "class Probe:\n    pass", path="/exec")
    body = stack.ffi("py", {"type": "instantiate", "class": "Probe", "args": "[]"})
    assert body["status"] == "ok"
    key = json.loads(body["result"])["varname"]
    stack.ffi("py", {"type": "delete", "name": key})


def test_error_payload_crosses_processes(stack):
    stack.run(
        "py",
        "def explode():\n    raise ValueError('no good')",
        path="/exec",
    )
    body = stack.ffi("py", {"type": "function", "name": "explode", "args": "[]"})
    assert body["status"] == "error"
    assert body["ename"] == "ValueError"
    assert body["evalue"] == "no good"
    assert body["origin_kernel"] == "py"
    assert "ValueError" in body["trace"]


def test_unknown_symbol_reports_name_error(stack):
    body = stack.ffi("py", {"type": "function", "name": "no_such_fn", "args": "[]"})
    assert body["status"] == "error"
    assert body["ename"] == "NameError"
    assert body["origin_kernel"] == "py"


def test_guest_sees_foreign_error_undiluted(stack):
    """An error raised in cellscript keeps its identity when it surfaces
    inside guest python code."""
    stack.run("b", 'fn fragile() { return get([], 3); }')
    status, body = post(
        stack.endpoints["py"] + "/eval",
        {"code": 'myReturnEncode(kffi_call("b", "fragile"))'},
    )
    assert status == 200
    assert body["status"] == "error"
    assert body["origin_kernel"] == "b"

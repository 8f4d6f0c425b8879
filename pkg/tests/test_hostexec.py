"""Operation execution on a host kernel: semantics, store effects, and
agreement between the direct route and the generated-code route."""

from __future__ import annotations

import json
import random

import pytest

from kffi.cellscript.kernel import CellscriptKernel
from kffi.codegen import PROFILES
from kffi.errors import SymbolNotFoundError, UnknownReferenceError
from kffi.hostexec import execute_ir, execute_via_codegen
from kffi.wire import IR, is_ref_map


@pytest.fixture
def host() -> CellscriptKernel:
    kernel = CellscriptKernel("host")
    kernel.run_cell(
        """
        fn add(a, b) { return a + b; }
        fn shout(s) { return s + "!"; }
        fn pick(lst, i) { return get(lst, i); }
        fn nothing() { return null; }
        class Counter {
          fn init(start) { this.n = start; }
          fn bump(by) { this.n = this.n + by; return this.n; }
          fn value() { return this.n; }
        }
        base = 100
        greeting = "hello"
        """
    )
    return kernel


def both_routes(ir, kernel, fresh_key=None):
    direct = execute_ir(ir, kernel, fresh_key=fresh_key)
    via_code = execute_via_codegen(
        ir, kernel, PROFILES["cellscript"], fresh_key=fresh_key
    )
    return direct, via_code


class TestFunctionOps:
    def test_call_returns_encoded_value(self, host):
        ir = IR("function", name="add", args="[19, 23]")
        assert execute_ir(ir, host) == "42"

    def test_primitive_call_leaves_store_alone(self, host):
        before = len(host.store)
        execute_ir(IR("function", name="shout", args='["hey"]'), host)
        assert len(host.store) == before

    def test_unknown_function(self, host):
        with pytest.raises(SymbolNotFoundError):
            execute_ir(IR("function", name="missing", args="[]"), host)

    def test_null_result(self, host):
        assert execute_ir(IR("function", name="nothing", args="[]"), host) == "null"


class TestVariableOps:
    def test_read(self, host):
        assert execute_ir(IR("variable", name="base"), host) == "100"
        assert execute_ir(IR("variable", name="greeting"), host) == '"hello"'

    def test_unknown_variable(self, host):
        with pytest.raises(SymbolNotFoundError):
            execute_ir(IR("variable", name="nope"), host)

    def test_function_name_is_not_a_variable(self, host):
        with pytest.raises(SymbolNotFoundError):
            execute_ir(IR("variable", name="add"), host)


class TestInstantiateAndMethods:
    def test_instantiate_parks_exactly_one_object(self, host):
        before = len(host.store)
        key = host.store.fresh_key()
        text = execute_ir(IR("instantiate", name="Counter", args="[5]"), host, fresh_key=key)
        raw = json.loads(text)
        assert is_ref_map(raw)
        assert raw["varname"] == key
        assert raw["typeName"] == "Counter"
        assert raw["lang"] == "host"
        assert len(host.store) == before + 1

    def test_method_on_stored_object(self, host):
        key = host.store.fresh_key()
        execute_ir(IR("instantiate", name="Counter", args="[5]"), host, fresh_key=key)
        assert execute_ir(IR("method", obj=key, method="bump", args="[3]"), host) == "8"
        assert execute_ir(IR("method", obj=key, method="value", args="[]"), host) == "8"

    def test_method_on_named_host_variable(self, host):
        # The receiver slot may also name a top-level variable directly.
        host.run_cell("shared = new Counter(1)")
        assert execute_ir(IR("method", obj="shared", method="bump", args="[1]"), host) == "2"

    def test_unknown_receiver(self, host):
        with pytest.raises(UnknownReferenceError):
            execute_ir(IR("method", obj="ghost-key", method="bump", args="[1]"), host)

    def test_unknown_class(self, host):
        with pytest.raises(SymbolNotFoundError):
            execute_ir(
                IR("instantiate", name="Nope", args="[]"), host,
                fresh_key=host.store.fresh_key(),
            )


class TestDelete:
    def test_delete_clears_store_entry(self, host):
        key = host.store.fresh_key()
        execute_ir(IR("instantiate", name="Counter", args="[0]"), host, fresh_key=key)
        assert execute_ir(IR("delete", name=key), host) == "null"
        assert not host.store.contains(key)

    def test_delete_is_idempotent(self, host):
        key = host.store.fresh_key()
        execute_ir(IR("instantiate", name="Counter", args="[0]"), host, fresh_key=key)
        execute_ir(IR("delete", name=key), host)
        assert execute_ir(IR("delete", name=key), host) == "null"

    def test_delete_named_variable_unbinds(self, host):
        host.run_cell("temp = 7")
        execute_ir(IR("delete", name="temp"), host)
        with pytest.raises(SymbolNotFoundError):
            execute_ir(IR("variable", name="temp"), host)


class TestRouteAgreement:
    def test_fixed_cases(self, host):
        cases = [
            (IR("function", name="add", args="[1, 2]"), None),
            (IR("function", name="shout", args='["hi \\"there\\""]'), None),
            (IR("function", name="pick", args='[[5, 6, 7], 1]'), None),
            (IR("variable", name="base"), None),
            (IR("variable", name="greeting"), None),
            (IR("delete", name="unused-key"), None),
        ]
        for ir, key in cases:
            direct, via_code = both_routes(ir, host, fresh_key=key)
            assert direct == via_code, ir

    def test_instantiate_and_method_agree(self, host):
        key = host.store.fresh_key()
        ir = IR("instantiate", name="Counter", args="[10]")
        direct = execute_ir(ir, host, fresh_key=key)
        host.store.delete(key)
        via_code = execute_via_codegen(ir, host, PROFILES["cellscript"], fresh_key=key)
        assert direct == via_code

        bump = IR("method", obj=key, method="bump", args="[4]")
        d1 = execute_ir(bump, host)
        # Undo the state change so the second route sees the same start.
        host.store.get(key).fields["n"] = 10
        d2 = execute_via_codegen(bump, host, PROFILES["cellscript"])
        assert d1 == d2 == "14"

    def test_randomized_agreement(self, host):
        rng = random.Random(2024)
        strings = ["", "x", 'with "quotes"', "unié", "\\backslash"]
        for _ in range(300):
            pick = rng.random()
            if pick < 0.4:
                ir = IR(
                    "function",
                    name="add",
                    args=json.dumps([rng.randrange(-999, 999), rng.randrange(-999, 999)]),
                )
            elif pick < 0.6:
                ir = IR("function", name="shout", args=json.dumps([rng.choice(strings)]))
            elif pick < 0.8:
                lst = [rng.randrange(50) for _ in range(rng.randrange(1, 5))]
                ir = IR("function", name="pick", args=json.dumps([lst, rng.randrange(len(lst))]))
            else:
                ir = IR("variable", name=rng.choice(["base", "greeting"]))
            direct, via_code = both_routes(ir, host)
            assert direct == via_code, ir

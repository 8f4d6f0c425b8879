"""Session-level behaviour: cell ordering, rewriting, notebooks, config."""

import json

import pytest

from kffi.broker import WIRE
from kffi.cellscript import CsError, CsSyntaxError
from kffi.errors import ConfigError, KernelUnavailableError
from kffi.session import (
    Session,
    load_notebook,
    session_from_config,
    transcript,
)


@pytest.fixture()
def ab_session():
    s = Session()
    s.add_kernel("a")
    s.add_kernel("b")
    yield s
    s.close()


class TestRunCell:
    def test_cross_kernel_call(self, ab_session):
        ab_session.run_cell("b", 'fn add(x, y) { return x + y; }')
        out = ab_session.run_cell("a", "add(2, 3)")
        assert out.displayed == "5"
        assert out.printed == []
        assert out.kernel_id == "a"

    def test_indices_increment_across_kernels(self, ab_session):
        o1 = ab_session.run_cell("a", "1")
        o2 = ab_session.run_cell("b", "2")
        o3 = ab_session.run_cell("a", "3")
        assert (o1.index, o2.index, o3.index) == (0, 1, 2)

    def test_correlation_ids_fresh_per_cell(self, ab_session):
        o1 = ab_session.run_cell("a", "1")
        o2 = ab_session.run_cell("a", "2")
        assert o1.correlation_id != o2.correlation_id
        assert ab_session.last_correlation_id == o2.correlation_id

    def test_prints_attributed_to_cell(self, ab_session):
        ab_session.run_cell("b", 'fn noisy(x) { print("inner"); return x; }')
        out = ab_session.run_cell("a", 'print("before")\nnoisy(1)\nprint("after")')
        assert out.printed == ["before", "inner", "after"]
        assert out.displayed is None

    def test_repl_has_no_forward_references(self, ab_session):
        # Incremental mode: b's definition does not exist yet, so the
        # name stays unrewritten and fails inside a at runtime.  Local
        # cell failures raise the kernel's own error, not ForeignError.
        with pytest.raises(CsError, match="unknown name 'later'"):
            ab_session.run_cell("a", "later(1)")
        ab_session.run_cell("b", "fn later(x) { return x; }")
        assert ab_session.run_cell("a", "later(1)").displayed == "1"

    def test_unknown_kernel(self, ab_session):
        with pytest.raises(KernelUnavailableError):
            ab_session.run_cell("nope", "1")

    def test_cell_error_does_not_register_symbols(self, ab_session):
        with pytest.raises(CsSyntaxError):
            ab_session.run_cell("b", 'fn ok(x) { return x; }\nboom(')
        # The parse failed before anything ran, so "ok" must not resolve.
        with pytest.raises(CsError):
            ab_session.run_cell("a", "ok(1)")

    def test_rewrite_can_be_disabled(self):
        s = Session(rewrite=False)
        s.add_kernel("a")
        s.add_kernel("b")
        try:
            s.run_cell("b", "fn f(x) { return x; }")
            with pytest.raises(CsError):
                s.run_cell("a", "f(1)")
        finally:
            s.close()


class TestRunNotebook:
    def test_mutual_recursion_across_kernels(self, ab_session):
        cells = [
            (
                "a",
                "fn even(n) { if (n == 0) { return true; } return odd(n - 1); }",
            ),
            (
                "b",
                "fn odd(n) { if (n == 0) { return false; } return even(n - 1); }",
            ),
            ("a", "even(10)"),
            ("a", "odd(7)"),
        ]
        outs = ab_session.run_notebook(cells)
        assert [o.displayed for o in outs] == [None, None, "true", "true"]

    def test_notebook_transcript(self, ab_session):
        outs = ab_session.run_notebook(
            [
                ("b", 'fn hi(name) { return "hi " + name; }'),
                ("a", 'print(hi("ada"))\nhi("bob")'),
            ]
        )
        assert transcript(outs) == ["hi ada", "=> hi bob"]

    def test_notebook_checks_kernels_before_running(self, ab_session):
        with pytest.raises(KernelUnavailableError):
            ab_session.run_notebook([("a", "1"), ("ghost", "2")])
        # Nothing executed: the counter did not advance.
        assert ab_session.run_cell("a", "1").index == 0


class TestWireMode:
    def test_non_reentrant_calls_work(self):
        s = Session(transport_mode=WIRE)
        s.add_kernel("a")
        s.add_kernel("b")
        try:
            s.run_cell("b", "fn sq(x) { return x * x; }")
            assert s.run_cell("a", "sq(9)").displayed == "81"
        finally:
            s.close()


class TestConfig:
    def test_minimal(self):
        s = session_from_config({"kernels": [{"id": "a"}, {"id": "b"}]})
        try:
            assert set(s.kernels) == {"a", "b"}
        finally:
            s.close()

    def test_options_applied(self):
        s = session_from_config(
            {
                "kernels": [{"id": "a"}],
                "transport": "wire",
                "call_timeout": 2.5,
                "depth_limit": 10,
            }
        )
        try:
            assert s.broker.transport_mode == WIRE
            assert s.broker.call_timeout == 2.5
            assert s.broker.depth_limit == 10
        finally:
            s.close()

    @pytest.mark.parametrize(
        "cfg",
        [
            {},
            {"kernels": []},
            {"kernels": "a"},
            {"kernels": [{"lang": "cellscript"}]},
            {"kernels": [{"id": "a"}], "transport": "pigeon"},
            {"kernels": [{"id": "a"}], "call_timeout": 0},
            {"kernels": [{"id": "a"}], "depth_limit": -1},
            {"kernels": [{"id": "a"}], "call_timeout": "soon"},
            {"kernels": [{"id": "py", "lang": "python"}]},
            {"kernels": [{"id": "a"}, {"id": "a"}]},
        ],
    )
    def test_rejects_bad_config(self, cfg):
        with pytest.raises(ConfigError):
            session_from_config(cfg)

    def test_remote_kernel_needs_only_endpoint(self):
        s = session_from_config(
            {
                "kernels": [
                    {"id": "a"},
                    {"id": "py", "lang": "python", "endpoint": "http://127.0.0.1:1"},
                ]
            }
        )
        try:
            desc = s.broker.bindings["py"].descriptor
            assert desc.lang == "python"
            assert desc.exec_split is True
        finally:
            s.close()


class TestNotebookFile:
    def test_load(self, tmp_path):
        path = tmp_path / "nb.json"
        path.write_text(
            json.dumps(
                {
                    "kernels": [{"id": "a"}, {"id": "b"}],
                    "cells": [
                        {"kernel": "b", "source": ["fn f(x) {\n", " return x; }\n"]},
                        {"kernel": "a", "source": "f(3)"},
                    ],
                }
            )
        )
        nb = load_notebook(path)
        assert nb.cells[0] == ("b", "fn f(x) {\n return x; }\n")
        assert nb.config["kernels"][0]["id"] == "a"
        s = session_from_config(nb.config)
        try:
            outs = s.run_notebook(nb.cells)
            assert outs[-1].displayed == "3"
        finally:
            s.close()

    def test_kernel_list_inferred_from_cells(self, tmp_path):
        path = tmp_path / "nb.json"
        path.write_text(
            json.dumps({"cells": [{"kernel": "x", "source": "1"}]})
        )
        nb = load_notebook(path)
        assert nb.config["kernels"] == [{"id": "x", "lang": "cellscript"}]

    def test_array_form(self, tmp_path):
        path = tmp_path / "nb.json"
        path.write_text(
            json.dumps(
                [
                    {"kernel": "b", "lang": "cellscript", "source": "n = 4"},
                    {"kernel": "a", "source": "n + 1"},
                ]
            )
        )
        nb = load_notebook(path)
        assert nb.cells == [("b", "n = 4"), ("a", "n + 1")]
        assert nb.config["kernels"] == [
            {"id": "b", "lang": "cellscript"},
            {"id": "a", "lang": "cellscript"},
        ]

    def test_rejects_mixed_langs_per_kernel(self, tmp_path):
        path = tmp_path / "nb.json"
        path.write_text(
            json.dumps(
                [
                    {"kernel": "k", "lang": "cellscript", "source": "1"},
                    {"kernel": "k", "lang": "python", "source": "2"},
                ]
            )
        )
        with pytest.raises(ConfigError):
            load_notebook(path)

    def test_run_notebook_continue_collects_errors(self):
        s = Session()
        s.add_kernel("a")
        s.add_kernel("b")
        try:
            outs = s.run_notebook(
                [
                    ("b", "fn half(x) { return x / 2; }"),
                    ("a", "half(10) / 0"),
                    ("a", 'print("still here")\nhalf(8)'),
                ],
                on_error="continue",
            )
            assert outs[1].error is not None
            assert "zero" in str(outs[1].error)
            assert outs[2].error is None
            assert outs[2].printed == ["still here"]
            assert outs[2].displayed == "4"
        finally:
            s.close()

    def test_empty_array_is_empty_notebook(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("[]")
        nb = load_notebook(path)
        assert nb.cells == []

    @pytest.mark.parametrize(
        "raw",
        [
            "{}",
            "{",
            '{"cells": [{"kernel": "a"}]}',
            '{"cells": [{"source": "1"}]}',
            '{"cells": [{"kernel": "a", "source": 5}]}',
        ],
    )
    def test_rejects_bad_notebook(self, tmp_path, raw):
        path = tmp_path / "bad.json"
        path.write_text(raw)
        with pytest.raises(ConfigError):
            load_notebook(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_notebook(tmp_path / "absent.json")

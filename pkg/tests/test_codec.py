"""Codec: by-value round trips, reference identity, and type safety."""

from __future__ import annotations

import json
import random
import string
import time

import pytest

from kffi.codec import Codec, ForeignProxy
from kffi.errors import MarshallingError, UnknownReferenceError
from kffi.store import GlobalStore
from kffi.wire import ObjectRef, is_ref_map, make_ref


def _mk_codec(owner="host"):
    store = GlobalStore(owner)
    calls: list[tuple] = []

    def dispatch(ref, method, args):
        calls.append((ref, method, args))
        return None

    codec = Codec(
        owner_id=owner,
        store=store,
        make_proxy=lambda ref: ForeignProxy(ref, dispatch),
        proxy_ref=lambda v: v.ref if isinstance(v, ForeignProxy) else None,
    )
    return codec, store, calls


class Widget:
    def __init__(self, size):
        self.size = size


class TestPrimitiveRoundTrip:
    def test_scalars(self):
        codec, _, _ = _mk_codec()
        for value in [0, -5, 3_000_000_000, 1.5, -0.25, "", "hi", 'quo"te', True, False, None]:
            assert codec.decode(codec.encode(value)) == value

    def test_containers(self):
        codec, _, _ = _mk_codec()
        for value in [[], [1, 2, 3], [1, [2, ["x"]]], {}, {"a": 1, "b": [True, None]}]:
            assert codec.decode(codec.encode(value)) == value

    def test_tuple_becomes_list(self):
        codec, _, _ = _mk_codec()
        assert codec.decode(codec.encode((1, 2))) == [1, 2]

    def test_args_wire_spacing(self):
        # Argument lists carry a space after each comma, matching the
        # canonical operation examples ("[1, 2]").
        codec, _, _ = _mk_codec()
        assert codec.encode_args([1, 2]) == "[1, 2]"
        assert codec.encode_args(["data"]) == '["data"]'
        assert codec.encode_args([]) == "[]"

    def test_args_round_trip(self):
        codec, _, _ = _mk_codec()
        values = [1, "two", [3, 4], {"five": 6}, None, True]
        assert codec.decode_args(codec.encode_args(values)) == values

    def test_unicode_passthrough(self):
        codec, _, _ = _mk_codec()
        text = codec.encode("héllo ☃")
        assert "héllo ☃" in text  # not ascii-escaped
        assert codec.decode(text) == "héllo ☃"


class TestReferences:
    def test_object_encodes_as_ref(self):
        codec, store, _ = _mk_codec()
        w = Widget(3)
        text = codec.encode(w)
        raw = json.loads(text)
        assert is_ref_map(raw)
        assert raw["lang"] == "host"
        assert raw["typeName"] == "Widget"
        assert store.get(raw["varname"]) is w

    def test_decode_own_ref_returns_original(self):
        # Localization: a reference that comes home resolves to the very
        # object, not a copy or proxy.
        codec, _, _ = _mk_codec()
        w = Widget(7)
        assert codec.decode(codec.encode(w)) is w

    def test_reencode_same_object_reuses_key(self):
        codec, store, _ = _mk_codec()
        w = Widget(1)
        k1 = json.loads(codec.encode(w))["varname"]
        k2 = json.loads(codec.encode(w))["varname"]
        assert k1 == k2
        assert len(store) == 1

    def test_decode_foreign_ref_makes_proxy(self):
        codec, _, calls = _mk_codec(owner="client")
        ref = make_ref("remote-key", "host", "Widget")
        proxy = codec.decode(json.dumps(ref.to_wire()))
        assert isinstance(proxy, ForeignProxy)
        assert repr(proxy) == "<Widget>"
        proxy.poke(1, "x")
        assert calls == [(ref, "poke", [1, "x"])]

    def test_proxy_reencodes_to_same_ref(self):
        # A proxy passed back out carries the owner's reference untouched,
        # not a new reference into our store.
        codec, store, _ = _mk_codec(owner="client")
        ref = make_ref("remote-key", "host", "Widget")
        proxy = codec.decode(json.dumps(ref.to_wire()))
        assert json.loads(codec.encode(proxy)) == ref.to_wire()
        assert len(store) == 0

    def test_refs_inside_containers(self):
        codec, store, _ = _mk_codec()
        w = Widget(2)
        out = codec.decode(codec.encode({"w": w, "n": [1, w]}))
        assert out["w"] is w
        assert out["n"][1] is w
        assert len(store) == 1


class TestTypeSafety:
    def test_reserved_key_rejected(self):
        codec, _, _ = _mk_codec()
        with pytest.raises(MarshallingError):
            codec.encode({"__kffi_ref__": True, "varname": "forged"})

    def test_non_string_map_keys_rejected(self):
        codec, _, _ = _mk_codec()
        with pytest.raises(MarshallingError):
            codec.encode({1: "a"})

    def test_bare_callable_rejected(self):
        codec, _, _ = _mk_codec()
        with pytest.raises(MarshallingError):
            codec.encode(lambda x: x)

    def test_non_finite_float_rejected(self):
        codec, _, _ = _mk_codec()
        for bad in [float("nan"), float("inf"), float("-inf")]:
            with pytest.raises(MarshallingError):
                codec.encode(bad)

    def test_depth_cap(self):
        codec, _, _ = _mk_codec()
        deep: list = []
        tip = deep
        for _ in range(100):
            tip.append([])
            tip = tip[0]
        with pytest.raises(MarshallingError):
            codec.encode(deep)

    def test_unknown_ref_key_raises(self):
        codec, _, _ = _mk_codec()
        ghost = make_ref("never-stored", "host", "T")
        with pytest.raises(UnknownReferenceError):
            codec.decode(json.dumps(ghost.to_wire()))


def _random_value(rng: random.Random, depth=0):
    choices = ["int", "float", "str", "bool", "none"]
    if depth < 3:
        choices += ["list", "dict"]
    kind = rng.choice(choices)
    if kind == "int":
        return rng.randrange(-10**9, 10**9)
    if kind == "float":
        # Round so JSON repr round-trips exactly.
        return round(rng.uniform(-1e6, 1e6), 6)
    if kind == "str":
        alphabet = string.ascii_letters + string.digits + ' _"\\é☃'
        return "".join(rng.choice(alphabet) for _ in range(rng.randrange(12)))
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "none":
        return None
    if kind == "list":
        return [_random_value(rng, depth + 1) for _ in range(rng.randrange(4))]
    keys = ["a", "b", "c", "d", "key_é"]
    return {rng.choice(keys): _random_value(rng, depth + 1) for _ in range(rng.randrange(4))}


def test_round_trip_bulk():
    """At least ten thousand random JSON-shaped values survive a round trip,
    and the batch stays fast."""
    codec, _, _ = _mk_codec()
    rng = random.Random(99)
    started = time.monotonic()
    for _ in range(10_500):
        value = _random_value(rng)
        assert codec.decode(codec.encode(value)) == value
    assert time.monotonic() - started < 20.0


def test_round_trip_bulk_with_refs():
    codec, store, _ = _mk_codec()
    rng = random.Random(7)
    widgets = [Widget(i) for i in range(10)]
    for _ in range(500):
        w = rng.choice(widgets)
        payload = [_random_value(rng), w, {"inner": w}]
        out = codec.decode(codec.encode(payload))
        assert out[1] is w
        assert out[2]["inner"] is w
    assert len(store) == len(widgets)

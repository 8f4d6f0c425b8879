"""Global store: key uniqueness, lookup, idempotent delete, replay property."""

from __future__ import annotations

import random
import threading

import pytest

from kffi.errors import UnknownReferenceError
from kffi.store import GlobalStore


def test_put_get_and_type_name():
    store = GlobalStore("k")
    obj = object()
    key = store.put(obj, "Thing")
    assert store.get(key) is obj
    assert store.type_name(key) == "Thing"
    assert store.contains(key)
    assert len(store) == 1


def test_get_unknown_key_raises():
    store = GlobalStore("k")
    with pytest.raises(UnknownReferenceError):
        store.get("nope")
    with pytest.raises(UnknownReferenceError):
        store.type_name("nope")


def test_delete_is_idempotent():
    store = GlobalStore("k")
    key = store.put(object(), "T")
    assert store.delete(key) is True
    assert store.delete(key) is False
    assert not store.contains(key)
    assert len(store) == 0


def test_caller_supplied_key():
    store = GlobalStore("k")
    key = store.fresh_key()
    assert store.put(object(), "T", key=key) == key
    assert store.contains(key)


def test_find_key_by_identity():
    store = GlobalStore("k")
    a = [1, 2]
    b = [1, 2]  # equal but distinct
    key = store.put(a, "list")
    assert store.find_key(a) == key
    assert store.find_key(b) is None


def test_keys_unique_at_scale():
    store = GlobalStore("k")
    keys = {store.put(i, "int") for i in range(100_000)}
    assert len(keys) == 100_000
    assert len(store) == 100_000


def test_dump_snapshot():
    store = GlobalStore("k")
    k1 = store.put(object(), "A")
    k2 = store.put(object(), "B")
    assert store.dump() == {k1: "A", k2: "B"}


def test_concurrent_put_delete():
    store = GlobalStore("k")
    errors: list[Exception] = []

    def worker(seed: int):
        rng = random.Random(seed)
        mine: list[str] = []
        try:
            for _ in range(500):
                if mine and rng.random() < 0.4:
                    store.delete(mine.pop())
                else:
                    mine.append(store.put(object(), "T"))
            for key in mine:
                store.delete(key)
        except Exception as exc:  # noqa: BLE001 - surfaced below
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(store) == 0


def test_random_op_replay_matches_model():
    """The store agrees with a plain-dict model over a random op sequence."""
    rng = random.Random(42)
    store = GlobalStore("k")
    model: dict[str, tuple[object, str]] = {}
    live: list[str] = []

    for step in range(2000):
        op = rng.random()
        if op < 0.5 or not live:
            obj = ("obj", step)
            key = store.put(obj, f"T{step % 7}")
            model[key] = (obj, f"T{step % 7}")
            live.append(key)
        elif op < 0.8:
            key = rng.choice(live)
            assert store.get(key) is model[key][0]
            assert store.type_name(key) == model[key][1]
        else:
            key = live.pop(rng.randrange(len(live)))
            assert store.delete(key) is True
            del model[key]

    assert store.dump() == {k: t for k, (_, t) in model.items()}

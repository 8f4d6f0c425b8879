"""Per-kernel global object store.

Every kernel keeps exactly one of these.  Objects that cross a language
boundary are parked here under a fresh uuid key and travel as references;
the peer kernel resolves those references back through this table, and a
delete operation removes the entry so the object can be collected.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

from .errors import UnknownReferenceError


@dataclass
class GlobalStore:
    """Thread-safe mapping from generated keys to (object, type name)."""

    owner: str
    _entries: dict[str, tuple[object, str]] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def fresh_key(self) -> str:
        return str(uuid.uuid4())

    def put(self, obj: object, type_name: str, key: str | None = None) -> str:
        """Park an object and return its key.  The caller may supply the key
        (the broker pre-mints keys for instantiate operations)."""
        if key is None:
            key = self.fresh_key()
        with self._lock:
            self._entries[key] = (obj, type_name)
        return key

    def get(self, key: str) -> object:
        with self._lock:
            try:
                return self._entries[key][0]
            except KeyError:
                raise UnknownReferenceError(key) from None

    def type_name(self, key: str) -> str:
        with self._lock:
            try:
                return self._entries[key][1]
            except KeyError:
                raise UnknownReferenceError(key) from None

    def contains(self, key: str) -> bool:
        with self._lock:
            return key in self._entries

    def delete(self, key: str) -> bool:
        """Drop an entry.  Idempotent; returns whether anything was removed."""
        with self._lock:
            return self._entries.pop(key, None) is not None

    def find_key(self, obj: object) -> str | None:
        """Key under which this exact object (by identity) is parked, if any.

        Re-encoding the same live object must yield the same reference, so
        peers see a stable identity for it.
        """
        with self._lock:
            for key, (stored, _) in self._entries.items():
                if stored is obj:
                    return key
        return None

    def dump(self) -> dict[str, str]:
        """Snapshot of key -> type name, for inspection endpoints."""
        with self._lock:
            return {k: t for k, (_, t) in self._entries.items()}

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

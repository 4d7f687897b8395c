"""File-backed key store: one `key-id<TAB>base64-key` entry per line.

Master and federation keys live here, separate from the identity
directory.
"""

from __future__ import annotations

import base64
import os
from random import Random
from typing import Optional

from .keyexchange import KEY_SIZE, rand_bytes


class KeyStoreError(Exception):
    pass


class KeyStore:
    def __init__(self, keys: Optional[dict[str, bytes]] = None):
        self._keys: dict[str, bytes] = dict(keys or {})
        for key_id, key in self._keys.items():
            _check_entry(key_id, key)

    def get(self, key_id: str) -> bytes:
        try:
            return self._keys[key_id]
        except KeyError:
            raise KeyStoreError(f"key id {key_id!r} not in store") from None

    def __contains__(self, key_id: str) -> bool:
        return key_id in self._keys

    def add(self, key_id: str, key: bytes) -> None:
        _check_entry(key_id, key)
        self._keys[key_id] = key

    def generate(self, key_id: str, rng: Optional[Random] = None) -> bytes:
        key = rand_bytes(rng, KEY_SIZE)
        self.add(key_id, key)
        return key

    def key_ids(self) -> list[str]:
        return sorted(self._keys)

    def save(self, path: str) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for key_id in self.key_ids():
                encoded = base64.b64encode(self._keys[key_id]).decode("ascii")
                fh.write(f"{key_id}\t{encoded}\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "KeyStore":
        keys: dict[str, bytes] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    key_id, encoded = line.split("\t")
                    keys[key_id] = base64.b64decode(encoded, validate=True)
                except Exception as exc:
                    raise KeyStoreError(f"{path} line {lineno}: {exc}") from exc
        return cls(keys)


def _check_entry(key_id: str, key: bytes) -> None:
    if not key_id or any(c in key_id for c in "\t\n"):
        raise KeyStoreError(f"bad key id {key_id!r}")
    if len(key) != KEY_SIZE:
        raise KeyStoreError(f"key {key_id!r} must be {KEY_SIZE} octets")

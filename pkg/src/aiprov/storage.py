"""Content-addressed directory store for encrypted payloads.

Objects live under ``<root>/<sha256 hex>`` and are addressed as
``store://<hex>``.  ``file://<absolute path>`` URLs are readable too, for
payloads hosted elsewhere on the filesystem.
"""

from __future__ import annotations

import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .errors import IntegrityMismatch, NotFound, StoreUnavailable
from .primitives import sha256

_HEX64 = re.compile(r"[0-9a-f]{64}")


@dataclass(frozen=True)
class StorageUrl:
    scheme: str
    locator: str

    def __post_init__(self):
        if self.scheme == "store":
            if not _HEX64.fullmatch(self.locator):
                raise ValueError(f"store locator must be 64 lowercase hex chars: {self.locator!r}")
        elif self.scheme == "file":
            if not self.locator.startswith("/"):
                raise ValueError("file URLs need an absolute path")
        else:
            raise ValueError(f"unsupported URL scheme {self.scheme!r}")

    @classmethod
    def parse(cls, text: str) -> "StorageUrl":
        scheme, sep, locator = text.partition("://")
        if not sep:
            raise ValueError(f"not a storage URL: {text!r}")
        return cls(scheme, locator)

    def __str__(self) -> str:
        return f"{self.scheme}://{self.locator}"


class ObjectStore:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def path_for(self, address: str) -> Path:
        return self.root / address

    def put(self, ciphertext: bytes) -> StorageUrl:
        address = sha256(ciphertext).hex()
        target = self.path_for(address)
        if target.exists():
            return StorageUrl("store", address)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".put-")
            with os.fdopen(fd, "wb") as fh:
                fh.write(ciphertext)
            os.replace(tmp, target)
        except OSError as exc:
            raise StoreUnavailable(f"cannot write to {self.root}: {exc}") from exc
        return StorageUrl("store", address)

    def get(self, url: StorageUrl | str) -> bytes:
        if isinstance(url, str):
            url = StorageUrl.parse(url)
        path = self.path_for(url.locator) if url.scheme == "store" else Path(url.locator)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise NotFound(str(url)) from None
        except OSError as exc:
            raise StoreUnavailable(str(exc)) from exc
        if url.scheme == "store" and sha256(data).hex() != url.locator:
            raise IntegrityMismatch(f"{url} does not hash to its address")
        return data

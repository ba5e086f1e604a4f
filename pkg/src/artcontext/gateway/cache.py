"""Content-addressed result cache in front of a gateway.

Keys are ``(op, image digest, params)``. Encodings and interrogations may
also be persisted under a directory; generations are cached in memory only
because the mock backend keeps per-process state about generated images.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path
from typing import Optional

import numpy as np

from ..imaging import digest_hex
from .base import GenerationParams, ModelGateway


def _key(op: str, *parts) -> str:
    raw = json.dumps([op, *parts], sort_keys=True, default=str).encode()
    return hashlib.blake2b(raw, digest_size=16).hexdigest()


class CachedGateway(ModelGateway):
    def __init__(self, inner: ModelGateway, directory: Optional[str] = None):
        self.inner = inner
        self.checkpoint_id = inner.checkpoint_id
        self.directory = Path(directory) if directory else None
        self._mem = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _disk_path(self, key: str, suffix: str) -> Optional[Path]:
        if self.directory is None:
            return None
        return self.directory / self.checkpoint_id / key[:2] / f"{key}{suffix}"

    def _lookup(self, key, suffix=None):
        with self._lock:
            if key in self._mem:
                self.hits += 1
                return self._mem[key]
        path = self._disk_path(key, suffix) if suffix else None
        if path is not None and path.exists():
            value = np.load(path) if suffix == ".npy" else path.read_text(encoding="utf-8")
            with self._lock:
                self._mem[key] = value
                self.hits += 1
            return value
        return None

    def _store(self, key, value, suffix=None):
        with self._lock:
            self._mem[key] = value
            self.misses += 1
        path = self._disk_path(key, suffix) if suffix else None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(f"{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
            if suffix == ".npy":
                with open(tmp, "wb") as fh:
                    np.save(fh, value)
            else:
                tmp.write_text(value, encoding="utf-8")
            os.replace(tmp, path)  # last write wins; values are deterministic

    def _cached(self, op, image, compute, suffix):
        key = _key(op, digest_hex(image))
        hit = self._lookup(key, suffix)
        if hit is not None:
            return hit.copy() if isinstance(hit, np.ndarray) else hit
        value = compute(image)
        self._store(key, value, suffix)
        return value.copy() if isinstance(value, np.ndarray) else value

    def encode_formal(self, image):
        return self._cached("encode_formal", image, self.inner.encode_formal, ".npy")

    def encode_context(self, image):
        return self._cached("encode_context", image, self.inner.encode_context, ".npy")

    def interrogate(self, image):
        return self._cached("interrogate", image, self.inner.interrogate, ".txt")

    def decode_formal(self, latent):
        return self.inner.decode_formal(latent)

    def count_tokens(self, prompt):
        return self.inner.count_tokens(prompt)

    def generate(self, image, params: GenerationParams):
        key = _key("generate", digest_hex(image), params.as_dict())
        hit = self._lookup(key)
        if hit is not None:
            return hit.copy()
        out = self.inner.generate(image, params)
        self._store(key, out)
        return out.copy()

"""On-disk embedding matrices.

A store is a directory holding ``manifest.json``, ``vectors.f32``
(little-endian float32, row-major) and ``ids.txt`` (one id per line). The
manifest is written last via rename, so a store without a manifest is
treated as absent.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractViolation, CorruptionError, MissingArtifactError

SPACE_DIMS = {"A": 16384, "C": 1024}
MANIFEST = "manifest.json"
VECTORS = "vectors.f32"
IDS = "ids.txt"


def checksum(values: np.ndarray) -> str:
    data = np.ascontiguousarray(values, dtype="<f4").tobytes()
    return hashlib.blake2b(data, digest_size=8).hexdigest()


@dataclass
class EmbeddingMatrix:
    space: str
    values: np.ndarray
    ids: list
    checkpoint_id: str = ""

    def __post_init__(self):
        if self.space not in SPACE_DIMS:
            raise ContractViolation(f"unknown latent space {self.space!r}")
        d = SPACE_DIMS[self.space]
        self.values = np.asarray(self.values, dtype=np.float32).reshape(-1, d)
        self.ids = [str(i) for i in self.ids]
        if len(self.ids) != self.values.shape[0]:
            raise ContractViolation(f"{len(self.ids)} ids for {self.values.shape[0]} rows")
        if len(set(self.ids)) != len(self.ids):
            raise ContractViolation("ids must be unique")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def checksum(self) -> str:
        return checksum(self.values)

    def row_of(self) -> dict:
        return {pid: i for i, pid in enumerate(self.ids)}

    def subset(self, ids: Sequence[str]) -> "EmbeddingMatrix":
        rows = self.row_of()
        idx = [rows[i] for i in ids]
        return EmbeddingMatrix(self.space, self.values[idx], list(ids), self.checkpoint_id)


@dataclass(frozen=True)
class Receipt:
    path: Path
    checksum: str


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def save_embeddings(m: EmbeddingMatrix, path) -> Receipt:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    # drop any previous manifest first so a half-rewritten store reads as absent
    (path / MANIFEST).unlink(missing_ok=True)
    digest = m.checksum
    try:
        _atomic_write(path / VECTORS, np.ascontiguousarray(m.values, dtype="<f4").tobytes())
        _atomic_write(path / IDS, "".join(f"{i}\n" for i in m.ids).encode("utf-8"))
        manifest = {
            "space": m.space,
            "n": m.n,
            "d": m.d,
            "dtype": "float32-le",
            "ids_file": IDS,
            "vectors_file": VECTORS,
            "checksum": digest,
            "checkpoint_id": m.checkpoint_id,
        }
        _atomic_write(path / MANIFEST, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    except OSError:
        for name in (VECTORS, IDS):
            (path / name).unlink(missing_ok=True)
        raise
    return Receipt(path, digest)


def has_store(path) -> bool:
    return (Path(path) / MANIFEST).is_file()


def load_embeddings(path) -> EmbeddingMatrix:
    path = Path(path)
    if not has_store(path):
        raise MissingArtifactError(path / MANIFEST)
    manifest = json.loads((path / MANIFEST).read_text(encoding="utf-8"))
    space, n, d = manifest["space"], int(manifest["n"]), int(manifest["d"])
    if space not in SPACE_DIMS or SPACE_DIMS[space] != d:
        raise ContractViolation(f"manifest declares space {space!r} with d={d}")

    raw = (path / manifest.get("vectors_file", VECTORS)).read_bytes()
    if len(raw) != n * d * 4:
        raise CorruptionError(f"payload has {len(raw)} bytes, expected {n * d * 4}")
    values = np.frombuffer(raw, dtype="<f4").reshape(n, d).astype(np.float32)
    if checksum(values) != manifest["checksum"]:
        raise CorruptionError(f"checksum mismatch in {path}")

    ids = (path / manifest.get("ids_file", IDS)).read_text(encoding="utf-8").splitlines()
    if len(ids) != n:
        raise ContractViolation(f"ids file lists {len(ids)} ids, manifest says n={n}")
    return EmbeddingMatrix(space, values, ids, manifest.get("checkpoint_id", ""))

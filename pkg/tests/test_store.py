import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from artcontext import store
from artcontext.errors import ContractViolation, CorruptionError, MissingArtifactError
from artcontext.store import EmbeddingMatrix, has_store, load_embeddings, save_embeddings


def matrix(space, n, seed=0):
    d = store.SPACE_DIMS[space]
    values = np.random.default_rng(seed).standard_normal((n, d)).astype(np.float32)
    return EmbeddingMatrix(space, values, [f"id{i:03d}" for i in range(n)], "ckpt")


@pytest.mark.parametrize("space, n", [("C", 0), ("C", 3), ("A", 5), ("A", 0)])
def test_round_trip_bit_exact(tmp_path, space, n):
    m = matrix(space, n)
    receipt = save_embeddings(m, tmp_path / "s")
    back = load_embeddings(tmp_path / "s")
    assert back.values.tobytes() == m.values.tobytes()
    assert back.ids == m.ids and back.space == space and back.checkpoint_id == "ckpt"
    assert receipt.checksum == back.checksum


@settings(max_examples=20, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(0, 4), st.just(1024)),
              elements=st.floats(width=32, allow_nan=False, allow_infinity=False)))
def test_round_trip_property(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("prop")
    m = EmbeddingMatrix("C", values, [str(i) for i in range(values.shape[0])], "x")
    save_embeddings(m, path)
    assert load_embeddings(path).values.tobytes() == values.tobytes()


def test_absent_store(tmp_path):
    assert not has_store(tmp_path)
    with pytest.raises(MissingArtifactError) as err:
        load_embeddings(tmp_path)
    assert err.value.path == tmp_path / "manifest.json"


def test_interrupted_save_leaves_no_manifest(tmp_path, monkeypatch):
    save_embeddings(matrix("C", 3), tmp_path / "s")
    real = store._atomic_write

    def dying(path, data):
        if path.name == "manifest.json":
            raise OSError("disk full")
        real(path, data)

    monkeypatch.setattr(store, "_atomic_write", dying)
    with pytest.raises(OSError):
        save_embeddings(matrix("C", 4, seed=1), tmp_path / "s")
    assert not has_store(tmp_path / "s")
    with pytest.raises(MissingArtifactError):
        load_embeddings(tmp_path / "s")


def test_truncated_payload(tmp_path):
    save_embeddings(matrix("A", 5), tmp_path)
    p = tmp_path / "vectors.f32"
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(CorruptionError):
        load_embeddings(tmp_path)


def test_flipped_byte_fails_checksum(tmp_path):
    save_embeddings(matrix("C", 3), tmp_path)
    p = tmp_path / "vectors.f32"
    raw = bytearray(p.read_bytes())
    raw[100] ^= 0x01
    p.write_bytes(bytes(raw))
    with pytest.raises(CorruptionError):
        load_embeddings(tmp_path)


@pytest.mark.parametrize("edit", [{"d": 1023}, {"space": "B"}, {"space": "A"}])
def test_manifest_mismatch(tmp_path, edit):
    save_embeddings(matrix("C", 3), tmp_path)
    mp = tmp_path / "manifest.json"
    manifest = json.loads(mp.read_text())
    manifest.update(edit)
    mp.write_text(json.dumps(manifest))
    with pytest.raises(ContractViolation):
        load_embeddings(tmp_path)


def test_matrix_validation():
    with pytest.raises((ContractViolation, ValueError)):
        EmbeddingMatrix("C", np.zeros((2, 1023), np.float32), ["a", "b"], "x")
    with pytest.raises((ContractViolation, ValueError)):
        EmbeddingMatrix("C", np.zeros((2, 1024), np.float32), ["a"], "x")


def test_subset_orders_by_request():
    m = matrix("C", 4)
    sub = m.subset(["id002", "id000"])
    assert sub.ids == ["id002", "id000"]
    assert np.array_equal(sub.values, m.values[[2, 0]])

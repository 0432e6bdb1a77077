import itertools

import numpy as np
import pytest

from sgir.embeddings import (
    UNKNOWN_LABEL,
    EmbeddingTable,
    deterministic_embedding,
    load_embeddings,
)
from sgir.errors import ConfigError, EmbeddingLookupError, EmbeddingParseError
from sgir.scene_graph import CLEVR_SCHEMA, RELATIONS


def test_load_simple_file(tmp_path):
    path = tmp_path / "vecs.txt"
    path.write_text("red 0.1 0.2 0.3\nblue -1 0 2.5\n")
    table = load_embeddings(path, dimension=3)
    assert np.allclose(table.lookup("red"), [0.1, 0.2, 0.3])
    assert np.allclose(table.lookup("blue"), [-1.0, 0.0, 2.5])


def test_unknown_label_is_zero(tmp_path):
    path = tmp_path / "vecs.txt"
    path.write_text("red 0.1 0.2 0.3\n")
    table = load_embeddings(path, dimension=3)
    assert np.array_equal(table.lookup(UNKNOWN_LABEL), np.zeros(3))
    det = EmbeddingTable.deterministic(["red"], 8, 1)
    assert np.array_equal(det.lookup(UNKNOWN_LABEL), np.zeros(8))


def test_wrong_component_count_names_line(tmp_path):
    path = tmp_path / "vecs.txt"
    path.write_text("red 0.1 0.2\n")
    with pytest.raises(EmbeddingParseError) as exc:
        load_embeddings(path, dimension=3)
    assert exc.value.line_number == 1


def test_non_numeric_component(tmp_path):
    path = tmp_path / "vecs.txt"
    path.write_text("red 0.1 0.2 0.3\nblue 0.1 x 0.3\n")
    with pytest.raises(EmbeddingParseError) as exc:
        load_embeddings(path, dimension=3)
    assert exc.value.line_number == 2


def test_duplicate_labels_keep_first(tmp_path):
    path = tmp_path / "vecs.txt"
    path.write_text("red 1 1 1\nred 2 2 2\n")
    table = load_embeddings(path, dimension=3)
    assert np.allclose(table.lookup("red"), [1, 1, 1])


def test_bad_dimension_is_config_error(tmp_path):
    path = tmp_path / "vecs.txt"
    path.write_text("red 1 1 1\n")
    with pytest.raises(ConfigError):
        load_embeddings(path, dimension=0)


def test_lookup_miss_without_fallback(tmp_path):
    path = tmp_path / "vecs.txt"
    path.write_text("red 1 1 1\n")
    table = load_embeddings(path, dimension=3)
    with pytest.raises(EmbeddingLookupError):
        table.lookup("magenta")


def test_deterministic_embedding_is_pure():
    a = deterministic_embedding("red", 16, 7)
    b = deterministic_embedding("red", 16, 7)
    assert np.array_equal(a, b)


def test_deterministic_embedding_unit_norm_and_range():
    for label in ("red", "cube", "left"):
        vec = deterministic_embedding(label, 16, 7)
        assert abs(np.linalg.norm(vec) - 1.0) < 1e-9
        assert np.all(vec >= -1.0) and np.all(vec <= 1.0)


def test_full_vocabulary_pairwise_distinct():
    labels = list(RELATIONS)
    for name in CLEVR_SCHEMA.attribute_names:
        labels.extend(CLEVR_SCHEMA.value_vocab[name])
    vecs = {lab: deterministic_embedding(lab, 16, 7) for lab in labels}
    for a, b in itertools.combinations(labels, 2):
        assert not np.array_equal(vecs[a], vecs[b]), (a, b)


def test_table_lookup_is_bit_stable():
    table = EmbeddingTable.deterministic(["red"], 16, 7)
    first = table.lookup("green")  # fallback path
    second = table.lookup("green")
    assert first is second or np.array_equal(first, second)


def test_fingerprint_depends_on_seed():
    t1 = EmbeddingTable.from_schema(CLEVR_SCHEMA, 16, 7)
    t2 = EmbeddingTable.from_schema(CLEVR_SCHEMA, 16, 8)
    t3 = EmbeddingTable.from_schema(CLEVR_SCHEMA, 16, 7)
    assert t1.fingerprint != t2.fingerprint
    assert t1.fingerprint == t3.fingerprint

import itertools
import json

import numpy as np
import pytest

from sgir.errors import SceneParseError, SchemaError
from sgir.scene_graph import (
    CLEVR_SCHEMA,
    ObjectNode,
    load_clevr_scenes,
    node_matrix,
    save_scenes,
)
from sgir.synthetic import random_scenes


def _write_doc(tmp_path, doc):
    path = tmp_path / "scenes.json"
    path.write_text(json.dumps(doc))
    return path


def _two_object_doc():
    return {
        "scenes": [
            {
                "image_index": 0,
                "objects": [
                    {"size": "small", "color": "red", "material": "rubber", "shape": "cube"},
                    {"size": "large", "color": "blue", "material": "metal", "shape": "sphere"},
                ],
                "relationships": {
                    "left": [[], [0]],
                    "right": [[1], []],
                    "front": [[], [0]],
                    "behind": [[1], []],
                },
            }
        ]
    }


def test_relationship_lists_become_edges(tmp_path):
    scenes = load_clevr_scenes(_write_doc(tmp_path, _two_object_doc()), CLEVR_SCHEMA)
    edges = {(e.head, e.relation, e.tail) for e in scenes[0].edges}
    assert (1, "left", 0) in edges
    assert (0, "right", 1) in edges
    assert len(edges) == 4


def test_single_object_scene_has_no_edges(tmp_path):
    doc = {
        "scenes": [
            {
                "image_index": 5,
                "objects": [
                    {"size": "small", "color": "red", "material": "rubber", "shape": "cube"}
                ],
                "relationships": {r: [[]] for r in ("left", "right", "front", "behind")},
            }
        ]
    }
    scenes = load_clevr_scenes(_write_doc(tmp_path, doc), CLEVR_SCHEMA)
    assert len(scenes[0].nodes) == 1
    assert scenes[0].edges == ()


def test_unknown_value_is_schema_error(tmp_path):
    doc = _two_object_doc()
    doc["scenes"][0]["objects"][0]["color"] = "magenta"
    with pytest.raises(SchemaError) as exc:
        load_clevr_scenes(_write_doc(tmp_path, doc), CLEVR_SCHEMA)
    assert "magenta" in str(exc.value)
    assert "0" in str(exc.value)  # names the image


def test_malformed_document(tmp_path):
    path = tmp_path / "scenes.json"
    path.write_text("{not json")
    with pytest.raises(SceneParseError):
        load_clevr_scenes(path, CLEVR_SCHEMA)


def test_duplicate_triples_deduplicated(tmp_path):
    doc = _two_object_doc()
    doc["scenes"][0]["relationships"]["left"][1] = [0, 0]
    scenes = load_clevr_scenes(_write_doc(tmp_path, doc), CLEVR_SCHEMA)
    assert len(scenes[0].edges) == 4


def test_max_edges_per_node(tmp_path):
    scenes = load_clevr_scenes(
        _write_doc(tmp_path, _two_object_doc()), CLEVR_SCHEMA, max_edges_per_node=1
    )
    by_head = {}
    for e in scenes[0].edges:
        by_head[e.head] = by_head.get(e.head, 0) + 1
    assert all(count <= 1 for count in by_head.values())


def test_node_matrix_rows_match_lookups(table):
    node = ObjectNode(("small", "red", "rubber", "cube"))
    mat = node_matrix(node, CLEVR_SCHEMA, table)
    assert mat.values.shape == (4, table.dimension)
    assert np.all(mat.mask)
    for i, label in enumerate(node.attribute_values):
        assert np.array_equal(mat.values[i], table.lookup(label))


def test_identical_tuples_give_identical_matrices(table):
    a = node_matrix(ObjectNode(("small", "red", "rubber", "cube")), CLEVR_SCHEMA, table)
    b = node_matrix(ObjectNode(("small", "red", "rubber", "cube")), CLEVR_SCHEMA, table)
    assert np.array_equal(a.values, b.values)


def test_node_key_injective_over_vocabulary_product():
    combos = itertools.product(
        *(CLEVR_SCHEMA.value_vocab[n] for n in CLEVR_SCHEMA.attribute_names)
    )
    keys = {}
    count = 0
    for values in combos:
        count += 1
        key = ObjectNode(tuple(values)).node_key
        assert key not in keys
        keys[key] = values
    assert count == 144


def test_round_trip_preserves_scenes(tmp_path):
    scenes = random_scenes(20, CLEVR_SCHEMA, seed=5)
    path = tmp_path / "scenes.json"
    save_scenes(scenes, CLEVR_SCHEMA, path)
    reloaded = load_clevr_scenes(path, CLEVR_SCHEMA)
    assert len(reloaded) == len(scenes)
    for a, b in zip(scenes, reloaded):
        assert a.image_id == b.image_id
        assert a.node_keys() == b.node_keys()
        assert set(a.triple_keys()) == set(b.triple_keys())


def test_edge_count_bound():
    for scene in random_scenes(20, CLEVR_SCHEMA, seed=9):
        n = len(scene.nodes)
        assert len(scene.edges) <= 4 * n * (n - 1)

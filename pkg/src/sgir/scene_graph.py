"""Scene-graph data model and ingestion of CLEVR-style scene annotation files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingTable
from .errors import SceneParseError, SchemaError

RELATIONS = ("left", "right", "front", "behind")

NODE_KEY_SEP = "|"


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered attribute names plus the legal value vocabulary of each."""

    attribute_names: tuple
    value_vocab: dict

    def __post_init__(self):
        if len(set(self.attribute_names)) != len(self.attribute_names):
            raise SchemaError("attribute names must be unique")
        for name in self.attribute_names:
            vocab = self.value_vocab.get(name)
            if not vocab:
                raise SchemaError(f"empty vocabulary for attribute {name!r}")

    @property
    def num_attributes(self) -> int:
        return len(self.attribute_names)

    def validate_value(self, attribute: str, value: str) -> None:
        if value not in self.value_vocab[attribute]:
            raise SchemaError(f"unknown {attribute} value {value!r}")

    def to_dict(self) -> dict:
        return {
            "attribute_names": list(self.attribute_names),
            "value_vocab": {k: list(v) for k, v in self.value_vocab.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AttributeSchema":
        return cls(
            attribute_names=tuple(data["attribute_names"]),
            value_vocab={k: tuple(v) for k, v in data["value_vocab"].items()},
        )


CLEVR_SCHEMA = AttributeSchema(
    attribute_names=("size", "color", "material", "shape"),
    value_vocab={
        "size": ("small", "medium", "large"),
        "color": ("gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow"),
        "material": ("rubber", "metal"),
        "shape": ("cube", "sphere", "cylinder"),
    },
)


@dataclass(frozen=True)
class ObjectNode:
    attribute_values: tuple

    @property
    def node_key(self) -> str:
        return NODE_KEY_SEP.join(self.attribute_values)


@dataclass(frozen=True)
class RelationEdge:
    head: int
    relation: str
    tail: int


@dataclass
class SceneGraph:
    image_id: int
    nodes: tuple
    edges: tuple

    def __post_init__(self):
        if not self.nodes:
            raise SceneParseError(f"image {self.image_id}: scene has no objects")
        n = len(self.nodes)
        seen = set()
        for e in self.edges:
            if not (0 <= e.head < n and 0 <= e.tail < n):
                raise SceneParseError(
                    f"image {self.image_id}: edge endpoints out of range"
                )
            if e.head == e.tail:
                raise SceneParseError(f"image {self.image_id}: self-loop edge")
            if e.relation not in RELATIONS:
                raise SceneParseError(
                    f"image {self.image_id}: unknown relation {e.relation!r}"
                )
            key = (e.head, e.relation, e.tail)
            if key in seen:
                raise SceneParseError(f"image {self.image_id}: duplicate edge {key}")
            seen.add(key)

    def node_keys(self):
        return [node.node_key for node in self.nodes]

    def triple_keys(self):
        return [
            (self.nodes[e.head].node_key, e.relation, self.nodes[e.tail].node_key)
            for e in self.edges
        ]


@dataclass
class NodeMatrix:
    """M x N attribute-embedding matrix plus the known-attribute mask."""

    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.mask is None:
            self.mask = np.ones(self.values.shape[0], dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (self.values.shape[0],):
            raise ValueError("mask length must equal the number of attribute rows")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("node matrix has non-finite entries")


def node_matrix(node: ObjectNode, schema: AttributeSchema, table: EmbeddingTable) -> NodeMatrix:
    rows = [table.lookup(value) for value in node.attribute_values]
    return NodeMatrix(values=np.stack(rows), mask=np.ones(len(rows), dtype=bool))


def _scene_from_record(record: dict, schema: AttributeSchema, max_edges_per_node=None) -> SceneGraph:
    image_id = record["image_index"]
    objects = record.get("objects", [])
    nodes = []
    for obj in objects:
        values = []
        for name in schema.attribute_names:
            if name not in obj:
                raise SceneParseError(
                    f"image {image_id}: object missing attribute {name!r}"
                )
            value = obj[name]
            if value not in schema.value_vocab[name]:
                raise SchemaError(
                    f"image {image_id}: unknown {name} value {value!r}"
                )
            values.append(value)
        nodes.append(ObjectNode(tuple(values)))

    edges = []
    seen = set()
    relationships = record.get("relationships", {})
    for relation, per_head in relationships.items():
        if relation not in RELATIONS:
            raise SceneParseError(
                f"image {image_id}: unknown relation {relation!r}"
            )
        if len(per_head) != len(nodes):
            raise SceneParseError(
                f"image {image_id}: relationship list length mismatch for {relation!r}"
            )
        for head, tails in enumerate(per_head):
            for tail in tails:
                key = (head, relation, tail)
                if key in seen:
                    continue
                seen.add(key)
                edges.append(RelationEdge(head=head, relation=relation, tail=tail))
    if max_edges_per_node is not None:
        budget = {head: max_edges_per_node for head in range(len(nodes))}
        kept = []
        for e in edges:
            if budget[e.head] > 0:
                budget[e.head] -= 1
                kept.append(e)
        edges = kept
    return SceneGraph(image_id=image_id, nodes=tuple(nodes), edges=tuple(edges))


def load_clevr_scenes(path, schema: AttributeSchema, max_edges_per_node=None) -> list:
    """Load a CLEVR-style scenes document into SceneGraphs."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SceneParseError(f"malformed scenes document: {exc}")
    if not isinstance(doc, dict) or "scenes" not in doc:
        raise SceneParseError("scenes document must contain a top-level 'scenes' list")
    scenes = [
        _scene_from_record(record, schema, max_edges_per_node)
        for record in doc["scenes"]
    ]
    ids = [s.image_id for s in scenes]
    if len(set(ids)) != len(ids):
        raise SceneParseError("duplicate image_index in scenes document")
    return scenes


def scenes_to_document(scenes, schema: AttributeSchema) -> dict:
    """Inverse of load_clevr_scenes: rebuild the annotation document."""
    records = []
    for scene in scenes:
        objects = [
            {name: value for name, value in zip(schema.attribute_names, node.attribute_values)}
            for node in scene.nodes
        ]
        relationships = {
            rel: [[] for _ in scene.nodes] for rel in RELATIONS
        }
        for e in scene.edges:
            relationships[e.relation][e.head].append(e.tail)
        for rel in RELATIONS:
            for tails in relationships[rel]:
                tails.sort()
        records.append(
            {
                "image_index": scene.image_id,
                "objects": objects,
                "relationships": relationships,
            }
        )
    return {"scenes": records}


def save_scenes(scenes, schema: AttributeSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenes_to_document(scenes, schema), fh, sort_keys=True)

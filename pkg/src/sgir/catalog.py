"""Consolidated catalog graph with inverted indices and persistence.

All scene graphs are merged into a single graph: attribute-identical objects
collapse into one catalog node, and every node/triple keeps a posting list of
the images it occurs in. Per-image occurrence lists allow exact recovery of
each source scene graph. After construction the catalog is immutable; a set
of flattened numpy arrays is precomputed for fast per-image best-match
aggregation at query time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingTable
from .errors import (
    CatalogBuildError,
    CompatibilityError,
    CorruptIndexError,
    IndexVersionError,
    UnknownImageError,
)
from .scene_graph import RELATIONS, AttributeSchema, node_matrix

INDEX_FORMAT_VERSION = 1


@dataclass
class CatalogNode:
    node_key: str
    matrix: np.ndarray  # M x N, fully specified
    image_postings: list  # sorted list of (image_id, local node index)


@dataclass
class CatalogTriple:
    head_key: str
    relation: str
    tail_key: str
    image_postings: list  # sorted list of image_ids


@dataclass
class CatalogGraph:
    schema: AttributeSchema
    node_keys: list
    node_matrices: np.ndarray  # (K, M, N)
    node_postings: list
    triple_keys: list  # list of (head_key, relation, tail_key)
    triple_postings: list
    images: dict  # image_id -> (node idx list with multiplicity, triple idx list)
    relation_vectors: np.ndarray  # (len(RELATIONS), N)
    embedding_fingerprint: str
    embedding_config: dict = field(default_factory=dict)

    def __post_init__(self):
        self._node_index = {k: i for i, k in enumerate(self.node_keys)}
        self._triple_index = {tuple(k): i for i, k in enumerate(self.triple_keys)}
        self._relation_index = {r: i for i, r in enumerate(RELATIONS)}
        self._finalize()

    def _finalize(self):
        self.image_ids = np.array(sorted(self.images), dtype=np.int64)
        node_lists = [self.images[i][0] for i in self.image_ids]
        triple_lists = [self.images[i][1] for i in self.image_ids]
        self._node_concat = np.array(
            [idx for lst in node_lists for idx in lst], dtype=np.int64
        )
        self._node_lengths = np.array([len(lst) for lst in node_lists], dtype=np.int64)
        self._node_starts = np.concatenate(([0], np.cumsum(self._node_lengths)[:-1]))
        self._triple_concat = np.array(
            [idx for lst in triple_lists for idx in lst], dtype=np.int64
        )
        self._triple_lengths = np.array(
            [len(lst) for lst in triple_lists], dtype=np.int64
        )
        self._triple_starts = np.concatenate(
            ([0], np.cumsum(self._triple_lengths)[:-1])
        )
        if self.triple_keys:
            self._triple_head_idx = np.array(
                [self._node_index[k[0]] for k in self.triple_keys], dtype=np.int64
            )
            self._triple_tail_idx = np.array(
                [self._node_index[k[2]] for k in self.triple_keys], dtype=np.int64
            )
            self._triple_rel_idx = np.array(
                [self._relation_index[k[1]] for k in self.triple_keys], dtype=np.int64
            )
        else:
            self._triple_head_idx = np.zeros(0, dtype=np.int64)
            self._triple_tail_idx = np.zeros(0, dtype=np.int64)
            self._triple_rel_idx = np.zeros(0, dtype=np.int64)
        self._image_pos = {int(i): p for p, i in enumerate(self.image_ids)}

    # -- lookups -----------------------------------------------------------

    @property
    def num_images(self) -> int:
        return len(self.image_ids)

    def node(self, node_key: str) -> CatalogNode:
        idx = self._node_index[node_key]
        return CatalogNode(
            node_key=node_key,
            matrix=self.node_matrices[idx],
            image_postings=self.node_postings[idx],
        )

    def triple(self, triple_key) -> CatalogTriple:
        idx = self._triple_index[tuple(triple_key)]
        h, r, t = self.triple_keys[idx]
        return CatalogTriple(
            head_key=h, relation=r, tail_key=t, image_postings=self.triple_postings[idx]
        )

    def image_subgraph(self, image_id: int):
        """Recover the exact node-key multiset and triple set of one image."""
        if image_id not in self.images:
            raise UnknownImageError(f"image {image_id} not in catalog")
        node_idx, triple_idx = self.images[image_id]
        nodes = [
            CatalogNode(
                node_key=self.node_keys[i],
                matrix=self.node_matrices[i],
                image_postings=self.node_postings[i],
            )
            for i in node_idx
        ]
        triples = [
            CatalogTriple(
                head_key=self.triple_keys[i][0],
                relation=self.triple_keys[i][1],
                tail_key=self.triple_keys[i][2],
                image_postings=self.triple_postings[i],
            )
            for i in triple_idx
        ]
        return nodes, triples

    def restrict(self, image_ids) -> "CatalogGraph":
        """New catalog covering only the given images (postings refiltered)."""
        keep = set(int(i) for i in image_ids)
        unknown = keep - set(self.images)
        if unknown:
            raise UnknownImageError(f"images not in catalog: {sorted(unknown)[:5]}")
        images = {}
        node_used: dict = {}
        triple_used: dict = {}
        for image_id in sorted(keep):
            node_idx, triple_idx = self.images[image_id]
            images[image_id] = (
                [node_used.setdefault(i, len(node_used)) for i in node_idx],
                [triple_used.setdefault(i, len(triple_used)) for i in triple_idx],
            )
        old_nodes = sorted(node_used, key=node_used.get)
        old_triples = sorted(triple_used, key=triple_used.get)
        return CatalogGraph(
            schema=self.schema,
            node_keys=[self.node_keys[i] for i in old_nodes],
            node_matrices=self.node_matrices[old_nodes]
            if old_nodes
            else self.node_matrices[:0],
            node_postings=[
                [p for p in self.node_postings[i] if p[0] in keep] for i in old_nodes
            ],
            triple_keys=[self.triple_keys[i] for i in old_triples],
            triple_postings=[
                [p for p in self.triple_postings[i] if p in keep] for i in old_triples
            ],
            images=images,
            relation_vectors=self.relation_vectors,
            embedding_fingerprint=self.embedding_fingerprint,
            embedding_config=self.embedding_config,
        )


def build_catalog(
    scenes,
    schema: AttributeSchema,
    table: EmbeddingTable,
    embedding_config: dict | None = None,
) -> CatalogGraph:
    if not scenes:
        raise CatalogBuildError("cannot build a catalog from zero scenes")
    ids = [s.image_id for s in scenes]
    if len(set(ids)) != len(ids):
        raise CatalogBuildError("duplicate image_id in scenes")

    node_keys: list = []
    node_index: dict = {}
    node_matrices: list = []
    node_postings: list = []
    triple_keys: list = []
    triple_index: dict = {}
    triple_postings: list = []
    images: dict = {}

    for scene in scenes:
        node_idx_list = []
        for local, node in enumerate(scene.nodes):
            key = node.node_key
            idx = node_index.get(key)
            if idx is None:
                idx = len(node_keys)
                node_index[key] = idx
                node_keys.append(key)
                node_matrices.append(node_matrix(node, schema, table).values)
                node_postings.append([])
            node_postings[idx].append((scene.image_id, local))
            node_idx_list.append(idx)
        triple_idx_list = []
        seen_triples = set()
        for key in scene.triple_keys():
            idx = triple_index.get(key)
            if idx is None:
                idx = len(triple_keys)
                triple_index[key] = idx
                triple_keys.append(key)
                triple_postings.append([])
            if idx not in seen_triples:
                seen_triples.add(idx)
                triple_postings[idx].append(scene.image_id)
                triple_idx_list.append(idx)
        images[scene.image_id] = (node_idx_list, triple_idx_list)

    for postings in node_postings:
        postings.sort()
    for postings in triple_postings:
        postings.sort()

    relation_vectors = np.stack([table.lookup(rel) for rel in RELATIONS])
    return CatalogGraph(
        schema=schema,
        node_keys=node_keys,
        node_matrices=np.stack(node_matrices),
        node_postings=node_postings,
        triple_keys=triple_keys,
        triple_postings=triple_postings,
        images=images,
        relation_vectors=relation_vectors,
        embedding_fingerprint=table.fingerprint,
        embedding_config=embedding_config or {},
    )


# -- persistence -------------------------------------------------------------


def _catalog_to_document(catalog: CatalogGraph) -> dict:
    return {
        "version": INDEX_FORMAT_VERSION,
        "schema": catalog.schema.to_dict(),
        "embedding_fingerprint": catalog.embedding_fingerprint,
        "embedding_config": catalog.embedding_config,
        "relation_vectors": catalog.relation_vectors.tolist(),
        "nodes": [
            {
                "key": key,
                "matrix": catalog.node_matrices[i].tolist(),
                "postings": [list(p) for p in catalog.node_postings[i]],
            }
            for i, key in enumerate(catalog.node_keys)
        ],
        "triples": [
            {"key": list(catalog.triple_keys[i]), "postings": catalog.triple_postings[i]}
            for i in range(len(catalog.triple_keys))
        ],
        "images": {
            str(image_id): {"nodes": nodes, "triples": triples}
            for image_id, (nodes, triples) in sorted(catalog.images.items())
        },
    }


def save_catalog(catalog: CatalogGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_catalog_to_document(catalog), fh, sort_keys=True)


def load_catalog(path, table: EmbeddingTable | None = None) -> CatalogGraph:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptIndexError(f"cannot parse index file: {exc}")
    if not isinstance(doc, dict) or "version" not in doc:
        raise CorruptIndexError("index file missing version field")
    if doc["version"] != INDEX_FORMAT_VERSION:
        raise IndexVersionError(
            f"index version {doc['version']} unsupported (expected {INDEX_FORMAT_VERSION})"
        )
    required = {"schema", "embedding_fingerprint", "nodes", "triples", "images"}
    missing = required - set(doc)
    if missing:
        raise CorruptIndexError(f"index file missing fields: {sorted(missing)}")
    if table is not None and table.fingerprint != doc["embedding_fingerprint"]:
        raise CompatibilityError(
            "embedding table fingerprint does not match the index"
        )
    try:
        catalog = CatalogGraph(
            schema=AttributeSchema.from_dict(doc["schema"]),
            node_keys=[n["key"] for n in doc["nodes"]],
            node_matrices=np.array([n["matrix"] for n in doc["nodes"]], dtype=np.float64),
            node_postings=[
                [tuple(p) for p in n["postings"]] for n in doc["nodes"]
            ],
            triple_keys=[tuple(t["key"]) for t in doc["triples"]],
            triple_postings=[list(t["postings"]) for t in doc["triples"]],
            images={
                int(image_id): (entry["nodes"], entry["triples"])
                for image_id, entry in doc["images"].items()
            },
            relation_vectors=np.array(doc["relation_vectors"], dtype=np.float64),
            embedding_fingerprint=doc["embedding_fingerprint"],
            embedding_config=doc.get("embedding_config", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptIndexError(f"index file structurally invalid: {exc}")
    return catalog

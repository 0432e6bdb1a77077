"""Subsumption scoring, attention maps, and per-image retrieval probabilities.

Node score: 1 / (1 + d) with d the masked, attribute-weighted Frobenius
distance between projected node matrices. Only attributes known on the query
side enter the distance, so a fully unknown query node scores 1 against
everything. Triple score: mean of head, tail, and edge scores, each in (0, 1].

An image's raw score is the product, over query nodes and triples, of the
best match inside that image; products are accumulated as sums of logs with a
per-factor floor to avoid underflow. Probabilities are the softmax of the log
raw scores. Pruned mode restricts exact scoring to candidate images drawn
from the inverted index; everything else gets the floor score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalog import CatalogGraph
from .errors import CompatibilityError, EmbeddingLookupError
from .query import QueryGraph
from .scene_graph import RELATIONS, NodeMatrix

DEFAULT_TOP_T = 64
DEFAULT_SUBSUMPTION_THRESHOLD = 0.99


@dataclass
class ScoringParams:
    """Trainable parameters: positive attribute weights, positive edge weight,
    optional shared projection. Weights are stored as unconstrained logs."""

    raw_attribute_weights: np.ndarray
    raw_edge_weight: float = 0.0
    projection: np.ndarray | None = None
    epsilon: float = 1e-6

    def __post_init__(self):
        self.raw_attribute_weights = np.asarray(
            self.raw_attribute_weights, dtype=np.float64
        )
        if self.projection is not None:
            self.projection = np.asarray(self.projection, dtype=np.float64)
            if not np.all(np.isfinite(self.projection)):
                raise ValueError("projection must be finite")

    @classmethod
    def initial(cls, num_attributes: int, dimension: int | None = None, with_projection=False):
        projection = np.eye(dimension) if with_projection else None
        if with_projection and dimension is None:
            raise ValueError("dimension required for a projection")
        return cls(
            raw_attribute_weights=np.zeros(num_attributes), projection=projection
        )

    @property
    def attribute_weights(self) -> np.ndarray:
        return np.exp(self.raw_attribute_weights)

    @property
    def edge_weight(self) -> float:
        return float(np.exp(self.raw_edge_weight))

    def copy(self) -> "ScoringParams":
        return ScoringParams(
            raw_attribute_weights=self.raw_attribute_weights.copy(),
            raw_edge_weight=self.raw_edge_weight,
            projection=None if self.projection is None else self.projection.copy(),
            epsilon=self.epsilon,
        )

    def to_dict(self) -> dict:
        return {
            "raw_attribute_weights": self.raw_attribute_weights.tolist(),
            "raw_edge_weight": self.raw_edge_weight,
            "projection": None if self.projection is None else self.projection.tolist(),
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoringParams":
        return cls(
            raw_attribute_weights=np.array(data["raw_attribute_weights"]),
            raw_edge_weight=float(data["raw_edge_weight"]),
            projection=None
            if data.get("projection") is None
            else np.array(data["projection"]),
            epsilon=float(data.get("epsilon", 1e-6)),
        )


@dataclass
class AttentionMap:
    node_scores: list  # per query node: {catalog node_key: score}
    triple_scores: list  # per query triple: {catalog triple key: score}
    candidate_image_ids: list | None = None  # populated in pruned mode


@dataclass
class RetrievalResult:
    probabilities: dict  # image_id -> probability
    ranking: list  # image ids, descending probability, ties by ascending id
    attention: AttentionMap | None = None
    mode: str = "dense"
    log_probabilities: dict = field(default_factory=dict)


def _project_rows(diff: np.ndarray, projection) -> np.ndarray:
    if projection is None:
        return diff
    return diff @ projection.T


def node_subsumption(query: NodeMatrix, cat: NodeMatrix, params: ScoringParams) -> float:
    if query.values.shape != cat.values.shape:
        raise ValueError("node matrices must share M and N")
    if not np.all(cat.mask):
        raise ValueError("catalog node mask must be all-true")
    rows = np.flatnonzero(query.mask)
    if rows.size == 0:
        return 1.0
    diff = _project_rows(cat.values[rows] - query.values[rows], params.projection)
    d2 = float(np.sum((diff * diff).sum(axis=1) * params.attribute_weights[rows]))
    return 1.0 / (1.0 + np.sqrt(d2))


def edge_subsumption(query_vec, cat_vec, params: ScoringParams) -> float:
    diff = _project_rows(np.atleast_2d(cat_vec - query_vec), params.projection)
    r = float(np.linalg.norm(diff))
    return 1.0 / (1.0 + params.edge_weight * r)


def _node_score_vector(qnode, catalog: CatalogGraph, params: ScoringParams) -> np.ndarray:
    """Scores of one query node against every distinct catalog node."""
    k = len(catalog.node_keys)
    rows = np.flatnonzero(qnode.matrix.mask)
    if rows.size == 0:
        return np.ones(k)
    diff = catalog.node_matrices[:, rows, :] - qnode.matrix.values[rows]
    diff = _project_rows(diff, params.projection)
    d2 = np.einsum("kmn,kmn->km", diff, diff) @ params.attribute_weights[rows]
    return 1.0 / (1.0 + np.sqrt(np.maximum(d2, 0.0)))


def _edge_score_row(relation: str, catalog: CatalogGraph, params: ScoringParams) -> np.ndarray:
    """Scores of one query relation against every catalog relation label."""
    if relation not in RELATIONS:
        raise EmbeddingLookupError(f"unknown relation label {relation!r}")
    q = catalog.relation_vectors[RELATIONS.index(relation)]
    diff = _project_rows(catalog.relation_vectors - q, params.projection)
    r = np.linalg.norm(diff, axis=1)
    return 1.0 / (1.0 + params.edge_weight * r)


def triple_subsumption(
    query_head: NodeMatrix,
    query_relation: str,
    query_tail: NodeMatrix,
    cat_head: NodeMatrix,
    cat_relation: str,
    cat_tail: NodeMatrix,
    relation_vectors: dict,
    params: ScoringParams,
) -> float:
    for rel in (query_relation, cat_relation):
        if rel not in relation_vectors:
            raise EmbeddingLookupError(f"unknown relation label {rel!r}")
    s_head = node_subsumption(query_head, cat_head, params)
    s_tail = node_subsumption(query_tail, cat_tail, params)
    s_edge = edge_subsumption(
        relation_vectors[query_relation], relation_vectors[cat_relation], params
    )
    return (s_head + s_tail + s_edge) / 3.0


def _check_compatible(query: QueryGraph, catalog: CatalogGraph) -> None:
    if query.embedding_fingerprint and query.embedding_fingerprint != catalog.embedding_fingerprint:
        raise CompatibilityError(
            "query and catalog were built from different embedding tables"
        )


def _score_vectors(query: QueryGraph, catalog: CatalogGraph, params: ScoringParams):
    node_vecs = [_node_score_vector(qn, catalog, params) for qn in query.nodes]
    triple_vecs = []
    for head, relation, tail in query.triples:
        edge_row = _edge_score_row(relation, catalog, params)
        vec = (
            node_vecs[head][catalog._triple_head_idx]
            + node_vecs[tail][catalog._triple_tail_idx]
            + edge_row[catalog._triple_rel_idx]
        ) / 3.0
        triple_vecs.append(vec)
    return node_vecs, triple_vecs


def attention(
    query: QueryGraph,
    catalog: CatalogGraph,
    params: ScoringParams,
    mode: str = "dense",
    top_t: int = DEFAULT_TOP_T,
) -> AttentionMap:
    _check_compatible(query, catalog)
    node_vecs, triple_vecs = _score_vectors(query, catalog, params)
    candidates = None
    if mode == "pruned":
        candidates = _candidate_images(node_vecs, catalog, top_t)
    node_scores = [
        dict(zip(catalog.node_keys, vec.tolist())) for vec in node_vecs
    ]
    triple_scores = [
        {tuple(k): s for k, s in zip(catalog.triple_keys, vec.tolist())}
        for vec in triple_vecs
    ]
    return AttentionMap(
        node_scores=node_scores,
        triple_scores=triple_scores,
        candidate_image_ids=None if candidates is None else candidates.tolist(),
    )


def _candidate_images(node_vecs, catalog: CatalogGraph, top_t: int) -> np.ndarray:
    """Union of posting lists of the top-T catalog nodes per query node."""
    ids = set()
    for vec in node_vecs:
        t = min(top_t, vec.size)
        top = np.argpartition(-vec, t - 1)[:t] if t < vec.size else np.arange(vec.size)
        for idx in top:
            ids.update(p[0] for p in catalog.node_postings[idx])
    return np.array(sorted(ids), dtype=np.int64)


def _segment_max(values: np.ndarray, starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Max per segment of a concatenated array; empty segments yield -inf."""
    out = np.full(len(starts), -np.inf)
    nonempty = lengths > 0
    if not np.any(nonempty):
        return out
    if np.all(nonempty):
        out[:] = np.maximum.reduceat(values, starts)
    else:
        # starts of nonempty segments are strictly increasing and valid, and
        # consecutive ones bound exactly one segment (empties have length 0)
        out[nonempty] = np.maximum.reduceat(values, starts[nonempty])
    return out


def _restricted_gather(concat, starts, lengths, positions):
    """Concatenated slices for a subset of segments."""
    sub_starts = starts[positions]
    sub_lengths = lengths[positions]
    total = int(sub_lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=concat.dtype), np.zeros(len(positions), dtype=np.int64), sub_lengths
    out_starts = np.cumsum(sub_lengths) - sub_lengths
    idx = (
        np.arange(total)
        - np.repeat(out_starts, sub_lengths)
        + np.repeat(sub_starts, sub_lengths)
    )
    return concat[idx], out_starts, sub_lengths


def _log_raw_scores(
    query: QueryGraph,
    catalog: CatalogGraph,
    params: ScoringParams,
    node_vecs,
    triple_vecs,
    positions=None,
) -> np.ndarray:
    """Per-image sum of floored log best-match factors.

    positions: indices into catalog.image_ids to score (None = all images).
    """
    log_eps = np.log(params.epsilon)
    if positions is None:
        node_concat = catalog._node_concat
        node_starts, node_lengths = catalog._node_starts, catalog._node_lengths
        triple_concat = catalog._triple_concat
        triple_starts, triple_lengths = catalog._triple_starts, catalog._triple_lengths
    else:
        node_concat, node_starts, node_lengths = _restricted_gather(
            catalog._node_concat, catalog._node_starts, catalog._node_lengths, positions
        )
        triple_concat, triple_starts, triple_lengths = _restricted_gather(
            catalog._triple_concat,
            catalog._triple_starts,
            catalog._triple_lengths,
            positions,
        )
    n = len(node_starts)
    total = np.zeros(n)
    for vec in node_vecs:
        best = _segment_max(vec[node_concat], node_starts, node_lengths)
        total += np.maximum(np.log(best), log_eps)
    for vec in triple_vecs:
        if len(triple_concat):
            best = _segment_max(vec[triple_concat], triple_starts, triple_lengths)
            with np.errstate(divide="ignore"):
                logs = np.where(best > 0, np.log(np.maximum(best, 1e-300)), -np.inf)
            total += np.maximum(logs, log_eps)
        else:
            total += log_eps
    return total


def image_probabilities(
    query: QueryGraph,
    catalog: CatalogGraph,
    params: ScoringParams,
    mode: str = "dense",
    top_t: int = DEFAULT_TOP_T,
    include_attention: bool = False,
) -> RetrievalResult:
    _check_compatible(query, catalog)
    if catalog.num_images == 0:
        raise ValueError("catalog contains no images")
    if mode not in ("dense", "pruned"):
        raise ValueError(f"unknown mode {mode!r}")

    node_vecs, triple_vecs = _score_vectors(query, catalog, params)
    num_images = catalog.num_images
    num_factors = len(query.nodes) + len(query.triples)
    log_eps = np.log(params.epsilon)

    candidates = None
    if mode == "pruned":
        candidates = _candidate_images(node_vecs, catalog, top_t)
        positions = np.searchsorted(catalog.image_ids, candidates)
        log_raw = np.full(num_images, num_factors * log_eps)
        if len(positions) == num_images:
            log_raw = _log_raw_scores(query, catalog, params, node_vecs, triple_vecs)
        else:
            log_raw[positions] = _log_raw_scores(
                query, catalog, params, node_vecs, triple_vecs, positions=positions
            )
    else:
        log_raw = _log_raw_scores(query, catalog, params, node_vecs, triple_vecs)

    shifted = log_raw - np.max(log_raw)
    raw = np.exp(shifted)
    probs = raw / raw.sum()
    probs = probs / probs.sum()  # tighten normalization to 1e-9
    log_probs = shifted - np.log(raw.sum())

    order = np.lexsort((catalog.image_ids, -probs))
    ranking = catalog.image_ids[order].tolist()

    attn = None
    if include_attention:
        node_scores = [dict(zip(catalog.node_keys, v.tolist())) for v in node_vecs]
        triple_scores = [
            {tuple(k): s for k, s in zip(catalog.triple_keys, v.tolist())}
            for v in triple_vecs
        ]
        attn = AttentionMap(
            node_scores=node_scores,
            triple_scores=triple_scores,
            candidate_image_ids=None if candidates is None else candidates.tolist(),
        )

    ids = [int(i) for i in catalog.image_ids]
    return RetrievalResult(
        probabilities=dict(zip(ids, probs.tolist())),
        ranking=[int(i) for i in ranking],
        attention=attn,
        mode=mode,
        log_probabilities=dict(zip(ids, log_probs.tolist())),
    )


def is_subsumed(
    query: QueryGraph,
    catalog: CatalogGraph,
    image_id: int,
    params: ScoringParams,
    threshold: float = DEFAULT_SUBSUMPTION_THRESHOLD,
) -> bool:
    """Thresholded boolean view of the soft subsumption scores for one image."""
    _check_compatible(query, catalog)
    node_vecs, triple_vecs = _score_vectors(query, catalog, params)
    node_idx, triple_idx = catalog.images[image_id]
    for vec in node_vecs:
        if max(vec[i] for i in node_idx) < threshold:
            return False
    for vec in triple_vecs:
        if not triple_idx or max(vec[i] for i in triple_idx) < threshold:
            return False
    return True

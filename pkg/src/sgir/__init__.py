"""Scene-graph based caption-to-image retrieval."""

from .embeddings import EmbeddingTable, deterministic_embedding, load_embeddings
from .scene_graph import (
    CLEVR_SCHEMA,
    RELATIONS,
    AttributeSchema,
    NodeMatrix,
    ObjectNode,
    RelationEdge,
    SceneGraph,
    load_clevr_scenes,
    node_matrix,
)
from .catalog import CatalogGraph, build_catalog, load_catalog, save_catalog
from .query import QueryGraph, QueryNode, caption_grammar_generate, parse_caption, sample_partial_query
from .scoring import AttentionMap, RetrievalResult, ScoringParams, attention, image_probabilities
from .training import RewardSpec, TrainConfig, gradient, objective, reward, train
from .evaluation import EvalReport, evaluate, node_drop_experiment

__all__ = [
    "EmbeddingTable",
    "deterministic_embedding",
    "load_embeddings",
    "CLEVR_SCHEMA",
    "RELATIONS",
    "AttributeSchema",
    "NodeMatrix",
    "ObjectNode",
    "RelationEdge",
    "SceneGraph",
    "load_clevr_scenes",
    "node_matrix",
    "CatalogGraph",
    "build_catalog",
    "load_catalog",
    "save_catalog",
    "QueryGraph",
    "QueryNode",
    "caption_grammar_generate",
    "parse_caption",
    "sample_partial_query",
    "AttentionMap",
    "RetrievalResult",
    "ScoringParams",
    "attention",
    "image_probabilities",
    "RewardSpec",
    "TrainConfig",
    "gradient",
    "objective",
    "reward",
    "train",
    "EvalReport",
    "evaluate",
    "node_drop_experiment",
]

"""Pydantic request/response models for the retrieval service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class EmbeddingConfig(BaseModel):
    dimension: int = 50
    seed: int = 0
    path: str | None = None  # word-vector file; deterministic hashing if absent


class GenerateScenesRequest(BaseModel):
    output_path: str
    num_scenes: int = Field(gt=0)
    seed: int = 0
    generator: str = "clustered"  # or "random"
    base_size: int = 6
    variant_fraction: float = 0.87
    min_objects: int = 3
    max_objects: int = 10


class GenerateScenesResponse(BaseModel):
    output_path: str
    num_scenes: int


class BuildIndexRequest(BaseModel):
    scenes_path: str
    embedding: EmbeddingConfig = EmbeddingConfig()
    index_path: str | None = None
    max_edges_per_node: int | None = None


class CatalogInfo(BaseModel):
    num_images: int
    num_nodes: int
    num_triples: int
    embedding_fingerprint: str


class LoadIndexRequest(BaseModel):
    index_path: str


class ParseCaptionRequest(BaseModel):
    caption: str
    embedding: EmbeddingConfig | None = None  # defaults to the loaded table


class QueryNodeModel(BaseModel):
    known_attributes: dict
    mask: list
    span: tuple | None = None


class QueryGraphModel(BaseModel):
    nodes: list[QueryNodeModel]
    triples: list  # [head index, relation, tail index]


class RetrieveRequest(BaseModel):
    caption: str
    top_k: int = Field(default=10, gt=0)
    mode: str = "dense"
    top_t: int = 64
    include_attention: bool = False


class RankedImage(BaseModel):
    rank: int
    image_id: int
    probability: float


class RetrieveResponse(BaseModel):
    results: list[RankedImage]
    mode: str
    num_candidates: int | None = None
    attention: dict | None = None


class TrainRequest(BaseModel):
    scenes_path: str | None = None  # defaults to the scenes the index was built from
    num_examples: int = Field(default=50, gt=0)
    drop_fraction: float = 0.2
    attribute_mask_fraction: float = 0.0
    epochs: int = Field(default=1, gt=0)
    learning_rate: float = 0.01
    baseline_mode: str = "running_mean"
    objective_mode: str = "full_distribution"
    gradient_clip: float | None = None
    seed: int = 0
    params_path: str | None = None
    with_projection: bool = False


class EpochMetricsModel(BaseModel):
    epoch: int
    mean_objective: float
    mean_reward: float
    top1_accuracy: float


class TrainResponse(BaseModel):
    metrics: list[EpochMetricsModel]
    params_path: str | None = None


class EvalRequest(BaseModel):
    scenes_path: str | None = None
    drop_fractions: list[float] = [0.0, 0.2, 0.3]
    queries_per_fraction: int = Field(default=1000, gt=0)
    attribute_mask_fraction: float = 0.0
    seed: int = 0
    mode: str = "dense"
    top_t: int = 64
    threads: int = 1
    output_path: str | None = None


class EvalResponse(BaseModel):
    reports: list[dict]
    table: str
    output_path: str | None = None


class LoadParamsRequest(BaseModel):
    params_path: str

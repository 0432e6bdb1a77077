"""FastAPI service wrapping the retrieval engine.

The service keeps one catalog (plus its embedding table, parameters, and the
scenes it was built from) in application state. The CLI is a thin client over
these endpoints; `uvicorn sgir.service.app:app` serves the same API remotely.
"""

from __future__ import annotations

import json

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import evaluation, query, scoring, synthetic, training
from ..catalog import build_catalog, load_catalog, save_catalog
from ..embeddings import EmbeddingTable, load_embeddings
from ..errors import (
    CaptionParseError,
    CatalogBuildError,
    CompatibilityError,
    ConfigError,
    CorruptIndexError,
    EmbeddingLookupError,
    EmbeddingParseError,
    IndexVersionError,
    SceneParseError,
    SchemaError,
    SgirError,
    UnknownImageError,
)
from ..scene_graph import CLEVR_SCHEMA, load_clevr_scenes, save_scenes
from ..scoring import ScoringParams
from . import schemas

INPUT_ERROR_KINDS = (
    EmbeddingParseError,
    EmbeddingLookupError,
    SchemaError,
    SceneParseError,
    CaptionParseError,
    ConfigError,
    CorruptIndexError,
    IndexVersionError,
    CompatibilityError,
    UnknownImageError,
    CatalogBuildError,
)


def _make_table(schema, cfg: schemas.EmbeddingConfig) -> EmbeddingTable:
    if cfg.path:
        return load_embeddings(cfg.path, cfg.dimension)
    return EmbeddingTable.from_schema(schema, cfg.dimension, cfg.seed)


def _table_from_config(schema, config: dict) -> EmbeddingTable:
    cfg = schemas.EmbeddingConfig(**config) if config else schemas.EmbeddingConfig()
    return _make_table(schema, cfg)


def create_app() -> FastAPI:
    app = FastAPI(title="sgir", description="scene-graph caption-to-image retrieval")
    state = {
        "schema": CLEVR_SCHEMA,
        "table": None,
        "catalog": None,
        "params": None,
        "scenes": None,
        "scenes_path": None,
    }
    app.state.engine = state

    @app.exception_handler(SgirError)
    async def _sgir_error(request, exc: SgirError):
        category = "input" if isinstance(exc, INPUT_ERROR_KINDS) else "runtime"
        return _json_error(400, type(exc).__name__, str(exc), category)

    @app.exception_handler(ValueError)
    async def _value_error(request, exc: ValueError):
        return _json_error(400, "ValueError", str(exc), "input")

    @app.exception_handler(FileNotFoundError)
    async def _missing_file(request, exc: FileNotFoundError):
        return _json_error(400, "FileNotFoundError", str(exc), "input")

    def _require_catalog():
        if state["catalog"] is None:
            raise HTTPException(
                status_code=409,
                detail={
                    "kind": "NoCatalog",
                    "message": "no catalog loaded; call /catalog/build or /catalog/load first",
                    "category": "input",
                },
            )
        return state["catalog"]

    def _params(with_projection=False):
        if state["params"] is None:
            state["params"] = ScoringParams.initial(
                state["schema"].num_attributes,
                dimension=state["table"].dimension if with_projection else None,
                with_projection=with_projection,
            )
        return state["params"]

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/scenes/generate", response_model=schemas.GenerateScenesResponse)
    def generate_scenes(req: schemas.GenerateScenesRequest):
        if req.generator == "clustered":
            scenes = synthetic.clustered_scenes(
                req.num_scenes,
                state["schema"],
                req.seed,
                base_size=req.base_size,
                variant_fraction=req.variant_fraction,
            )
        elif req.generator == "random":
            scenes = synthetic.random_scenes(
                req.num_scenes,
                state["schema"],
                req.seed,
                min_objects=req.min_objects,
                max_objects=req.max_objects,
            )
        else:
            raise ConfigError(f"unknown generator {req.generator!r}")
        save_scenes(scenes, state["schema"], req.output_path)
        return schemas.GenerateScenesResponse(
            output_path=req.output_path, num_scenes=len(scenes)
        )

    @app.post("/catalog/build", response_model=schemas.CatalogInfo)
    def build_index(req: schemas.BuildIndexRequest):
        schema = state["schema"]
        table = _make_table(schema, req.embedding)
        scenes = load_clevr_scenes(req.scenes_path, schema, req.max_edges_per_node)
        catalog = build_catalog(
            scenes, schema, table, embedding_config=req.embedding.model_dump()
        )
        if req.index_path:
            save_catalog(catalog, req.index_path)
        state.update(
            table=table, catalog=catalog, scenes=scenes, scenes_path=req.scenes_path, params=None
        )
        return _info(catalog)

    @app.post("/catalog/load", response_model=schemas.CatalogInfo)
    def load_index(req: schemas.LoadIndexRequest):
        catalog = load_catalog(req.index_path)
        table = _table_from_config(catalog.schema, catalog.embedding_config)
        if table.fingerprint != catalog.embedding_fingerprint:
            raise CompatibilityError(
                "embedding table reconstructed from the index config does not match"
            )
        state.update(
            schema=catalog.schema, table=table, catalog=catalog, scenes=None, scenes_path=None
        )
        return _info(catalog)

    @app.get("/catalog/info", response_model=schemas.CatalogInfo)
    def catalog_info():
        return _info(_require_catalog())

    @app.post("/caption/parse", response_model=schemas.QueryGraphModel)
    def parse_caption(req: schemas.ParseCaptionRequest):
        schema = state["schema"]
        if req.embedding is not None or state["table"] is None:
            table = _make_table(schema, req.embedding or schemas.EmbeddingConfig())
        else:
            table = state["table"]
        graph = query.parse_caption(req.caption, schema, table)
        return _query_graph_model(graph)

    @app.post("/retrieve", response_model=schemas.RetrieveResponse)
    def retrieve(req: schemas.RetrieveRequest):
        catalog = _require_catalog()
        graph = query.parse_caption(req.caption, state["schema"], state["table"])
        result = scoring.image_probabilities(
            graph,
            catalog,
            _params(),
            mode=req.mode,
            top_t=req.top_t,
            include_attention=req.include_attention,
        )
        top = result.ranking[: req.top_k]
        attention = None
        num_candidates = None
        if result.attention is not None:
            if result.attention.candidate_image_ids is not None:
                num_candidates = len(result.attention.candidate_image_ids)
            attention = {
                "node_scores": result.attention.node_scores,
                "triple_scores": [
                    {"||".join(k): v for k, v in scores.items()}
                    for scores in result.attention.triple_scores
                ],
                "candidate_image_ids": result.attention.candidate_image_ids,
            }
        return schemas.RetrieveResponse(
            results=[
                schemas.RankedImage(
                    rank=i + 1, image_id=img, probability=result.probabilities[img]
                )
                for i, img in enumerate(top)
            ],
            mode=result.mode,
            num_candidates=num_candidates,
            attention=attention,
        )

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_params(req: schemas.TrainRequest):
        catalog = _require_catalog()
        schema, table = state["schema"], state["table"]
        scenes = state["scenes"]
        if req.scenes_path and req.scenes_path != state["scenes_path"]:
            scenes = load_clevr_scenes(req.scenes_path, schema)
        if scenes is None:
            raise ConfigError("no scenes available; pass scenes_path")
        scene_by_id = {s.image_id: s for s in scenes if s.image_id in catalog.images}
        ids = sorted(scene_by_id)
        rng = np.random.default_rng(req.seed)
        dataset = []
        for _ in range(req.num_examples):
            gold = ids[int(rng.integers(len(ids)))]
            q = query.sample_partial_query(
                scene_by_id[gold],
                req.drop_fraction,
                req.attribute_mask_fraction,
                int(rng.integers(2**63)),
                schema,
                table,
            )
            dataset.append((q, gold))
        config = training.TrainConfig(
            learning_rate=req.learning_rate,
            epochs=req.epochs,
            baseline_mode=req.baseline_mode,
            objective_mode=req.objective_mode,
            rng_seed=req.seed,
            gradient_clip=req.gradient_clip,
        )
        initial = ScoringParams.initial(
            schema.num_attributes,
            dimension=table.dimension,
            with_projection=req.with_projection,
        )
        params, metrics = training.train(dataset, catalog, config, params=initial)
        state["params"] = params
        if req.params_path:
            artifact = {
                "params": params.to_dict(),
                "config": req.model_dump(),
                "metrics": [m.to_dict() for m in metrics],
            }
            with open(req.params_path, "w", encoding="utf-8") as fh:
                json.dump(artifact, fh, sort_keys=True, indent=2)
        return schemas.TrainResponse(
            metrics=[schemas.EpochMetricsModel(**m.to_dict()) for m in metrics],
            params_path=req.params_path,
        )

    @app.post("/params/load")
    def load_params(req: schemas.LoadParamsRequest):
        try:
            with open(req.params_path, "r", encoding="utf-8") as fh:
                artifact = json.load(fh)
            state["params"] = ScoringParams.from_dict(artifact["params"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot load params file: {exc}")
        return {"status": "ok"}

    @app.post("/eval/node-drop", response_model=schemas.EvalResponse)
    def eval_node_drop(req: schemas.EvalRequest):
        catalog = _require_catalog()
        schema, table = state["schema"], state["table"]
        scenes = state["scenes"]
        if req.scenes_path and req.scenes_path != state["scenes_path"]:
            scenes = load_clevr_scenes(req.scenes_path, schema)
        if scenes is None:
            raise ConfigError("no scenes available; pass scenes_path")
        reports = evaluation.node_drop_experiment(
            catalog,
            scenes,
            req.drop_fractions,
            req.queries_per_fraction,
            req.seed,
            _params(),
            schema,
            table,
            attribute_mask_fraction=req.attribute_mask_fraction,
            mode=req.mode,
            top_t=req.top_t,
            threads=req.threads,
        )
        table_text = evaluation.reports_table(reports)
        if req.output_path:
            artifact = {
                "config": req.model_dump(),
                "reports": [r.to_dict(include_timing=False) for r in reports],
            }
            with open(req.output_path, "w", encoding="utf-8") as fh:
                json.dump(artifact, fh, sort_keys=True, indent=2)
        return schemas.EvalResponse(
            reports=[r.to_dict() for r in reports],
            table=table_text,
            output_path=req.output_path,
        )

    return app


def _json_error(status: int, kind: str, message: str, category: str):
    from fastapi.responses import JSONResponse

    return JSONResponse(
        status_code=status,
        content={"detail": {"kind": kind, "message": message, "category": category}},
    )


def _info(catalog) -> "schemas.CatalogInfo":
    return schemas.CatalogInfo(
        num_images=catalog.num_images,
        num_nodes=len(catalog.node_keys),
        num_triples=len(catalog.triple_keys),
        embedding_fingerprint=catalog.embedding_fingerprint,
    )


def _query_graph_model(graph) -> "schemas.QueryGraphModel":
    nodes = [
        schemas.QueryNodeModel(
            known_attributes=known,
            mask=node.matrix.mask.tolist(),
            span=node.span,
        )
        for node, known in zip(graph.nodes, graph.known_values)
    ]
    return schemas.QueryGraphModel(
        nodes=nodes, triples=[list(t) for t in graph.triples]
    )


app = create_app()

"""Retrieval metrics and the node-drop sanity experiment."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .catalog import CatalogGraph
from .errors import UnknownImageError
from .query import sample_partial_query
from .scoring import ScoringParams, image_probabilities

RECALL_KS = (1, 5, 10)


@dataclass
class EvalReport:
    drop_fraction: float
    num_queries: int
    top1_accuracy: float
    recall_at_k: dict
    mean_reciprocal_rank: float
    mean_wall_time_s: float
    duplicates_removed: int = 0
    attribute_mask_fraction: float = 0.0
    seed: int | None = None

    def to_dict(self, include_timing: bool = True) -> dict:
        data = {
            "drop_fraction": self.drop_fraction,
            "num_queries": self.num_queries,
            "top1_accuracy": self.top1_accuracy,
            "recall_at_k": {str(k): v for k, v in self.recall_at_k.items()},
            "mean_reciprocal_rank": self.mean_reciprocal_rank,
            "duplicates_removed": self.duplicates_removed,
            "attribute_mask_fraction": self.attribute_mask_fraction,
            "seed": self.seed,
        }
        if include_timing:  # timings vary run to run; reproducible artifacts omit them
            data["mean_wall_time_s"] = self.mean_wall_time_s
        return data


def _ranks(catalog, eval_set, params, mode, top_t, threads):
    def one(item):
        query, gold = item
        if gold not in catalog.images:
            raise UnknownImageError(f"gold image {gold} not in catalog")
        start = time.perf_counter()
        result = image_probabilities(query, catalog, params, mode=mode, top_t=top_t)
        elapsed = time.perf_counter() - start
        return result.ranking.index(gold) + 1, elapsed

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, eval_set))
    else:
        outcomes = [one(item) for item in eval_set]
    ranks = [r for r, _ in outcomes]
    times = [t for _, t in outcomes]
    return ranks, times


def evaluate(
    catalog: CatalogGraph,
    eval_set,
    params: ScoringParams,
    mode: str = "dense",
    top_t: int = 64,
    threads: int = 1,
    drop_fraction: float = 0.0,
    duplicates_removed: int = 0,
    attribute_mask_fraction: float = 0.0,
    seed: int | None = None,
) -> EvalReport:
    """Rank metrics over (query, gold image id) pairs."""
    if not eval_set:
        raise ValueError("eval_set must be non-empty")
    ranks, times = _ranks(catalog, eval_set, params, mode, top_t, threads)
    n = len(ranks)
    recall = {k: sum(1 for r in ranks if r <= k) / n for k in RECALL_KS}
    return EvalReport(
        drop_fraction=drop_fraction,
        num_queries=n,
        top1_accuracy=recall[1],
        recall_at_k=recall,
        mean_reciprocal_rank=sum(1.0 / r for r in ranks) / n,
        mean_wall_time_s=sum(times) / n,
        duplicates_removed=duplicates_removed,
        attribute_mask_fraction=attribute_mask_fraction,
        seed=seed,
    )


def dedup_scenes(scenes):
    """Remove scenes whose graphs are identical; keeps the first occurrence."""
    kept = []
    removed = 0
    seen = set()
    for scene in scenes:
        sig = (tuple(sorted(scene.node_keys())), frozenset(scene.triple_keys()))
        if sig in seen:
            removed += 1
            continue
        seen.add(sig)
        kept.append(scene)
    return kept, removed


def node_drop_experiment(
    catalog: CatalogGraph,
    scenes,
    drop_fractions,
    queries_per_fraction: int,
    rng_seed: int,
    params: ScoringParams,
    schema,
    table,
    attribute_mask_fraction: float = 0.0,
    mode: str = "dense",
    top_t: int = 64,
    threads: int = 1,
) -> list:
    """Sample partial queries at each drop fraction and measure rank metrics.

    The catalog is deduplicated first (identical scene graphs make top-1
    ill-posed); the removal count is reported on every returned EvalReport.
    """
    for f in drop_fractions:
        if not 0.0 <= f < 1.0:
            raise ValueError("drop fractions must be in [0, 1)")
    kept, removed = dedup_scenes(scenes)
    if removed:
        catalog = catalog.restrict([s.image_id for s in kept])
    scene_by_id = {s.image_id: s for s in kept}
    ids = sorted(scene_by_id)

    reports = []
    for fi, fraction in enumerate(drop_fractions):
        rng = np.random.default_rng((rng_seed, fi))
        eval_set = []
        for _ in range(queries_per_fraction):
            gold = ids[int(rng.integers(len(ids)))]
            sub_seed = int(rng.integers(2**63))
            query = sample_partial_query(
                scene_by_id[gold],
                fraction,
                attribute_mask_fraction,
                sub_seed,
                schema,
                table,
            )
            eval_set.append((query, gold))
        reports.append(
            evaluate(
                catalog,
                eval_set,
                params,
                mode=mode,
                top_t=top_t,
                threads=threads,
                drop_fraction=fraction,
                duplicates_removed=removed,
                attribute_mask_fraction=attribute_mask_fraction,
                seed=rng_seed,
            )
        )
    return reports


def reports_table(reports) -> str:
    """Flat one-row-per-fraction table for plotting."""
    lines = ["drop_fraction\tnum_queries\ttop1\trecall@5\trecall@10\tmrr"]
    for r in reports:
        lines.append(
            f"{r.drop_fraction}\t{r.num_queries}\t{r.top1_accuracy:.4f}"
            f"\t{r.recall_at_k[5]:.4f}\t{r.recall_at_k[10]:.4f}"
            f"\t{r.mean_reciprocal_rank:.4f}"
        )
    return "\n".join(lines) + "\n"

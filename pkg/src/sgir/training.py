"""REINFORCE training of the scoring parameters.

The objective is J = sum_images P(image) * [R(image) - B] * log P(image),
summed over the whole catalog in full_distribution mode, or using a single
sampled image's summand in sampled mode. R is an L2 reward between gold and
retrieved image representations and is treated as constant with respect to
the parameters; the analytic gradient flows through the probabilities, the
per-image best-match maxima (routed to the argmax, lowest index on ties), and
the node/edge distances into the attribute weights, edge weight, and the
optional projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalog import CatalogGraph
from .errors import TrainingDivergedError, UnknownImageError
from .query import QueryGraph
from .scene_graph import RELATIONS, AttributeSchema, SceneGraph, node_matrix
from .scoring import ScoringParams, _score_vectors, _log_raw_scores


@dataclass
class RewardSpec:
    kind: str = "l2_representation"
    epsilon: float = 1e-9
    normalizer: str = "sum_norms"  # or "max_distance" (corpus max per call)

    def __post_init__(self):
        if self.kind != "l2_representation":
            raise ValueError(f"unknown reward kind {self.kind!r}")
        if self.normalizer not in ("sum_norms", "max_distance"):
            raise ValueError(f"unknown normalizer {self.normalizer!r}")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 1
    baseline_mode: str = "running_mean"  # or "zero"
    baseline_decay: float = 0.9
    objective_mode: str = "full_distribution"  # or "sampled"
    rng_seed: int = 0
    gradient_clip: float | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValueError("baseline_decay must be in [0, 1)")
        if self.baseline_mode not in ("zero", "running_mean"):
            raise ValueError(f"unknown baseline_mode {self.baseline_mode!r}")
        if self.objective_mode not in ("full_distribution", "sampled"):
            raise ValueError(f"unknown objective_mode {self.objective_mode!r}")


@dataclass
class Gradient:
    raw_attribute_weights: np.ndarray
    raw_edge_weight: float = 0.0
    projection: np.ndarray | None = None
    tie: bool = False

    def norm(self) -> float:
        total = float(np.sum(self.raw_attribute_weights**2)) + self.raw_edge_weight**2
        if self.projection is not None:
            total += float(np.sum(self.projection**2))
        return float(np.sqrt(total))

    def scaled(self, factor: float) -> "Gradient":
        return Gradient(
            raw_attribute_weights=self.raw_attribute_weights * factor,
            raw_edge_weight=self.raw_edge_weight * factor,
            projection=None if self.projection is None else self.projection * factor,
            tie=self.tie,
        )


# -- representations and reward ----------------------------------------------


def image_representation(scene: SceneGraph, schema: AttributeSchema, table) -> np.ndarray:
    """Mean over the scene's node matrices, flattened row-major."""
    mats = [node_matrix(node, schema, table).values for node in scene.nodes]
    return np.mean(mats, axis=0).ravel()


def catalog_representations(catalog: CatalogGraph) -> np.ndarray:
    """Per-image representations aligned with catalog.image_ids (cached)."""
    cached = getattr(catalog, "_representations", None)
    if cached is not None:
        return cached
    reps = np.empty((catalog.num_images, catalog.node_matrices[0].size))
    for pos, image_id in enumerate(catalog.image_ids):
        node_idx, _ = catalog.images[int(image_id)]
        reps[pos] = catalog.node_matrices[node_idx].mean(axis=0).ravel()
    catalog._representations = reps
    return reps


def reward_from_representations(gold: np.ndarray, retrieved: np.ndarray, spec: RewardSpec) -> float:
    dist = float(np.linalg.norm(gold - retrieved))
    norm = float(np.linalg.norm(gold) + np.linalg.norm(retrieved)) + spec.epsilon
    return 1.0 - dist / norm


def reward(catalog: CatalogGraph, gold_image_id: int, retrieved_image_id: int, spec: RewardSpec) -> float:
    pos = catalog._image_pos
    for image_id in (gold_image_id, retrieved_image_id):
        if image_id not in pos:
            raise UnknownImageError(f"image {image_id} not in catalog")
    # max_distance normalizes against the whole corpus, so go through the vector
    return float(_reward_vector(catalog, gold_image_id, spec)[pos[retrieved_image_id]])


def _reward_vector(catalog: CatalogGraph, gold_image_id: int, spec: RewardSpec) -> np.ndarray:
    reps = catalog_representations(catalog)
    if gold_image_id not in catalog._image_pos:
        raise UnknownImageError(f"gold image {gold_image_id} not in catalog")
    gold = reps[catalog._image_pos[gold_image_id]]
    dists = np.linalg.norm(reps - gold, axis=1)
    if spec.normalizer == "max_distance":
        norm = max(float(dists.max()), spec.epsilon)
        return 1.0 - dists / norm
    norms = np.linalg.norm(reps, axis=1) + np.linalg.norm(gold) + spec.epsilon
    return 1.0 - dists / norms


# -- objective and gradient ----------------------------------------------------


def _distribution(query: QueryGraph, catalog: CatalogGraph, params: ScoringParams):
    node_vecs, triple_vecs = _score_vectors(query, catalog, params)
    log_raw = _log_raw_scores(query, catalog, params, node_vecs, triple_vecs)
    shifted = log_raw - np.max(log_raw)
    raw = np.exp(shifted)
    total = raw.sum()
    probs = raw / total
    log_probs = shifted - np.log(total)
    return node_vecs, triple_vecs, probs, log_probs


def objective(
    query: QueryGraph,
    catalog: CatalogGraph,
    gold_image_id: int,
    params: ScoringParams,
    config: TrainConfig,
    baseline: float = 0.0,
    reward_spec: RewardSpec | None = None,
) -> float:
    spec = reward_spec or RewardSpec()
    rewards = _reward_vector(catalog, gold_image_id, spec)
    _, _, probs, log_probs = _distribution(query, catalog, params)
    advantage = rewards - baseline
    if config.objective_mode == "sampled":
        rng = np.random.default_rng(config.rng_seed)
        k = int(rng.choice(len(probs), p=probs / probs.sum()))
        return float(probs[k] * advantage[k] * log_probs[k])
    return float(np.sum(probs * advantage * log_probs))


def _summand_gradient_weights(probs, log_probs, advantage, sampled: int | None) -> np.ndarray:
    """dJ/d(log raw score) per image.

    Full distribution: g_K = P_K A_K (1 + log P_K) - P_K sum_I P_I A_I (1 + log P_I).
    Sampled summand k: g_K = A_k P_k (delta_kK - P_K)(1 + log P_k).
    """
    one_plus = 1.0 + log_probs
    if sampled is None:
        s = float(np.sum(probs * advantage * one_plus))
        return probs * advantage * one_plus - probs * s
    k = sampled
    g = -advantage[k] * probs[k] * one_plus[k] * probs
    g[k] += advantage[k] * probs[k] * one_plus[k]
    return g


def _accumulate_node_pair(qnode, key_idx, coeff, catalog, params, grad: Gradient):
    rows = np.flatnonzero(qnode.matrix.mask)
    if rows.size == 0:
        return
    u = catalog.node_matrices[key_idx][rows] - qnode.matrix.values[rows]
    pu = u @ params.projection.T if params.projection is not None else u
    sqn = (pu * pu).sum(axis=1)
    w = params.attribute_weights[rows]
    d2 = float(w @ sqn)
    if d2 <= 0.0:
        return  # exact match: flat subgradient
    d = np.sqrt(d2)
    s = 1.0 / (1.0 + d)
    base = -coeff * s * s / (2.0 * d)
    grad.raw_attribute_weights[rows] += base * sqn * w
    if grad.projection is not None:
        grad.projection += base * 2.0 * np.einsum("i,in,im->nm", w, pu, u)


def _accumulate_edge_pair(query_rel, cat_rel_idx, coeff, catalog, params, grad: Gradient):
    v = catalog.relation_vectors[cat_rel_idx] - catalog.relation_vectors[
        RELATIONS.index(query_rel)
    ]
    pv = params.projection @ v if params.projection is not None else v
    r = float(np.linalg.norm(pv))
    if r == 0.0:
        return
    w_e = params.edge_weight
    s = 1.0 / (1.0 + w_e * r)
    grad.raw_edge_weight += -coeff * s * s * r * w_e
    if grad.projection is not None:
        grad.projection += (-coeff * s * s * w_e / r) * np.outer(pv, v)


def gradient(
    query: QueryGraph,
    catalog: CatalogGraph,
    gold_image_id: int,
    params: ScoringParams,
    config: TrainConfig,
    baseline: float = 0.0,
    reward_spec: RewardSpec | None = None,
    sampled_index: int | None = None,
) -> Gradient:
    spec = reward_spec or RewardSpec()
    rewards = _reward_vector(catalog, gold_image_id, spec)
    node_vecs, triple_vecs, probs, log_probs = _distribution(query, catalog, params)
    advantage = rewards - baseline

    sampled = None
    if config.objective_mode == "sampled":
        sampled = sampled_index
        if sampled is None:
            rng = np.random.default_rng(config.rng_seed)
            sampled = int(rng.choice(len(probs), p=probs / probs.sum()))
    g = _summand_gradient_weights(probs, log_probs, advantage, sampled)

    grad = Gradient(
        raw_attribute_weights=np.zeros_like(params.raw_attribute_weights),
        projection=None if params.projection is None else np.zeros_like(params.projection),
    )
    node_pairs: dict = {}
    edge_pairs: dict = {}
    eps = params.epsilon
    tie = False

    for pos, image_id in enumerate(catalog.image_ids):
        if g[pos] == 0.0:
            continue
        node_idx, triple_idx = catalog.images[int(image_id)]
        node_idx_arr = np.asarray(node_idx)
        for qi, vec in enumerate(node_vecs):
            vals = vec[node_idx_arr]
            b = int(np.argmax(vals))
            best = float(vals[b])
            if len(set(node_idx_arr[vals == best].tolist())) > 1:
                tie = True  # distinct elements tied: subgradient is argmax-dependent
            if best <= eps:
                continue  # floored factor, constant
            key = (qi, int(node_idx_arr[b]))
            node_pairs[key] = node_pairs.get(key, 0.0) + g[pos] / best
        if not triple_idx:
            continue  # floored factors, constant
        triple_idx_arr = np.asarray(triple_idx)
        for qt, (head, relation, tail_) in enumerate(query.triples):
            vals = triple_vecs[qt][triple_idx_arr]
            b = int(np.argmax(vals))
            best = float(vals[b])
            if len(set(triple_idx_arr[vals == best].tolist())) > 1:
                tie = True
            if best <= eps:
                continue
            ct = int(triple_idx_arr[b])
            coeff = g[pos] / (3.0 * best)
            key = (head, int(catalog._triple_head_idx[ct]))
            node_pairs[key] = node_pairs.get(key, 0.0) + coeff
            key = (tail_, int(catalog._triple_tail_idx[ct]))
            node_pairs[key] = node_pairs.get(key, 0.0) + coeff
            key = (relation, int(catalog._triple_rel_idx[ct]))
            edge_pairs[key] = edge_pairs.get(key, 0.0) + coeff

    for (qi, key_idx), coeff in node_pairs.items():
        _accumulate_node_pair(query.nodes[qi], key_idx, coeff, catalog, params, grad)
    for (query_rel, cat_rel_idx), coeff in edge_pairs.items():
        _accumulate_edge_pair(query_rel, cat_rel_idx, coeff, catalog, params, grad)
    grad.tie = tie
    return grad


# -- training loop -------------------------------------------------------------


@dataclass
class EpochMetrics:
    epoch: int
    mean_objective: float
    mean_reward: float
    top1_accuracy: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "mean_objective": self.mean_objective,
            "mean_reward": self.mean_reward,
            "top1_accuracy": self.top1_accuracy,
        }


def train(
    dataset,
    catalog: CatalogGraph,
    config: TrainConfig,
    params: ScoringParams | None = None,
    reward_spec: RewardSpec | None = None,
):
    """Gradient ascent on the objective; returns (params, per-epoch metrics)."""
    if not dataset:
        raise ValueError("dataset must be non-empty")
    spec = reward_spec or RewardSpec()
    params = (params or ScoringParams.initial(catalog.schema.num_attributes)).copy()
    for _, gold in dataset:
        if gold not in catalog.images:
            raise UnknownImageError(f"gold image {gold} not in catalog")

    baseline = 0.0
    metrics = []
    for epoch in range(config.epochs):
        sum_j = 0.0
        sum_reward = 0.0
        hits = 0
        for step, (query, gold) in enumerate(dataset):
            rewards = _reward_vector(catalog, gold, spec)
            node_vecs, triple_vecs, probs, log_probs = _distribution(query, catalog, params)
            b_used = baseline if config.baseline_mode == "running_mean" else 0.0
            advantage = rewards - b_used
            sampled = None
            if config.objective_mode == "sampled":
                rng = np.random.default_rng((config.rng_seed, epoch, step))
                sampled = int(rng.choice(len(probs), p=probs / probs.sum()))
                j = float(probs[sampled] * advantage[sampled] * log_probs[sampled])
            else:
                j = float(np.sum(probs * advantage * log_probs))
            if not np.isfinite(j):
                raise TrainingDivergedError(
                    f"non-finite objective at epoch {epoch} step {step}: {j}"
                )
            grad = gradient(
                query,
                catalog,
                gold,
                params,
                config,
                baseline=b_used,
                reward_spec=spec,
                sampled_index=sampled,
            )
            if config.gradient_clip is not None:
                norm = grad.norm()
                if norm > config.gradient_clip:
                    grad = grad.scaled(config.gradient_clip / norm)
            lr = config.learning_rate
            params.raw_attribute_weights = params.raw_attribute_weights + lr * grad.raw_attribute_weights
            params.raw_edge_weight = params.raw_edge_weight + lr * grad.raw_edge_weight
            if params.projection is not None and grad.projection is not None:
                params.projection = params.projection + lr * grad.projection

            expected_reward = float(np.sum(probs * rewards))
            sum_j += j
            sum_reward += expected_reward
            top_pos = int(np.lexsort((catalog.image_ids, -probs))[0])
            if int(catalog.image_ids[top_pos]) == gold:
                hits += 1
            if config.baseline_mode == "running_mean":
                baseline = (
                    config.baseline_decay * baseline
                    + (1.0 - config.baseline_decay) * expected_reward
                )
        n = len(dataset)
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                mean_objective=sum_j / n,
                mean_reward=sum_reward / n,
                top1_accuracy=hits / n,
            )
        )
    return params, metrics

"""Synthetic CLEVR-style scene generation.

Two generators:

* ``random_scenes`` draws independent scenes with uniformly random objects.
* ``clustered_scenes`` draws a set of distinct base scenes and then emits
  variants, each variant being a base scene plus one extra object. Variant
  catalogs are the interesting case for partial-query retrieval: once the
  extra object is dropped from a query, the query graph is contained in the
  base scene as well, so top-1 retrieval becomes ambiguous.

Objects carry continuous (x, y) positions used only to derive the spatial
relation closure: edge (head, "left", tail) means the head object sits to the
left of the tail object, and "front" means closer to the camera.
"""

from __future__ import annotations

import itertools

import numpy as np

from .scene_graph import AttributeSchema, ObjectNode, RelationEdge, SceneGraph


def _edges_from_positions(xs, ys) -> tuple:
    edges = []
    n = len(xs)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            edges.append(
                RelationEdge(i, "left" if xs[i] < xs[j] else "right", j)
            )
            edges.append(
                RelationEdge(i, "front" if ys[i] < ys[j] else "behind", j)
            )
    return tuple(edges)


def _random_tuple(rng, schema: AttributeSchema) -> tuple:
    return tuple(
        schema.value_vocab[name][rng.integers(len(schema.value_vocab[name]))]
        for name in schema.attribute_names
    )


def _scene(image_id, tuples, xs, ys) -> SceneGraph:
    nodes = tuple(ObjectNode(t) for t in tuples)
    return SceneGraph(image_id=image_id, nodes=nodes, edges=_edges_from_positions(xs, ys))


def random_scenes(num_scenes, schema: AttributeSchema, seed, min_objects=3, max_objects=10) -> list:
    rng = np.random.default_rng(seed)
    scenes = []
    for image_id in range(num_scenes):
        n = int(rng.integers(min_objects, max_objects + 1))
        tuples = [_random_tuple(rng, schema) for _ in range(n)]
        xs = rng.random(n)
        ys = rng.random(n)
        scenes.append(_scene(image_id, tuples, xs, ys))
    return scenes


def _signature(tuples, xs, ys):
    order_x = tuple(int(r) for r in np.argsort(xs))
    order_y = tuple(int(r) for r in np.argsort(ys))
    return (tuple(tuples), order_x, order_y)


def clustered_scenes(
    num_scenes,
    schema: AttributeSchema,
    seed,
    base_size=6,
    variant_fraction=0.87,
) -> list:
    """Base scenes followed by one-extra-object variants.

    Bases occupy the lowest image ids so that when a partial query ties
    between a base and its variants, the base wins the deterministic
    id tie-break. All scenes are pairwise distinct by construction.
    """
    if not 0.0 <= variant_fraction < 1.0:
        raise ValueError("variant_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    num_bases = max(1, num_scenes - int(round(num_scenes * variant_fraction)))
    num_variants = num_scenes - num_bases

    all_tuples = list(
        itertools.product(*(schema.value_vocab[n] for n in schema.attribute_names))
    )

    bases = []
    seen = set()
    while len(bases) < num_bases:
        tuples = [_random_tuple(rng, schema) for _ in range(base_size)]
        xs = rng.random(base_size)
        ys = rng.random(base_size)
        sig = _signature(tuples, xs, ys)
        if sig in seen:
            continue
        seen.add(sig)
        bases.append((tuples, xs, ys))

    scenes = [
        _scene(image_id, tuples, xs, ys)
        for image_id, (tuples, xs, ys) in enumerate(bases)
    ]

    used_extras = [set(map(tuple, b[0])) for b in bases]
    for k in range(num_variants):
        b = k % num_bases
        tuples, xs, ys = bases[b]
        # the extra tuple is unique within the base's family, so no variant
        # subsumes a sibling and full-graph self-retrieval stays exact
        candidates = [t for t in all_tuples if t not in used_extras[b]]
        if not candidates:
            raise ValueError("vocabulary too small for the requested variant count")
        extra = candidates[int(rng.integers(len(candidates)))]
        used_extras[b].add(extra)
        vx = np.append(xs, rng.random())
        vy = np.append(ys, rng.random())
        scenes.append(_scene(num_bases + k, list(tuples) + [extra], vx, vy))
    return scenes

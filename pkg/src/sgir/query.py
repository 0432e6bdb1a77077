"""Query graphs: caption parsing, caption generation, and partial-scene sampling.

The accepted caption language is deliberately small, matching templated
CLEVR-style captions::

    CAPTION := "there is" NP (REL NP)*
    NP      := article? attribute-word* shape-word
    REL     := "left of" | "right of" | "in front of" | "behind"

Attribute words may appear in any order inside a noun phrase; the phrase is
terminated by a shape word, where "thing" and "object" are shape words that
carry no shape attribute. Chained relation phrases attach each REL to the
immediately preceding noun phrase as head. "in front of" normalizes to the
relation label ``front``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingTable
from .errors import CaptionParseError
from .scene_graph import RELATIONS, AttributeSchema, NodeMatrix, SceneGraph

ARTICLES = ("a", "an", "the")
GENERIC_SHAPE_WORDS = ("thing", "object")

# word -> (attribute, value); CLEVR's documented synonym list
SYNONYMS = {
    "big": ("size", "large"),
    "tiny": ("size", "small"),
    "shiny": ("material", "metal"),
    "metallic": ("material", "metal"),
    "matte": ("material", "rubber"),
    "ball": ("shape", "sphere"),
    "block": ("shape", "cube"),
}

# multi-word relation phrases, longest first
_REL_PHRASES = (
    (("in", "front", "of"), "front"),
    (("left", "of"), "left"),
    (("right", "of"), "right"),
    (("behind",), "behind"),
)


@dataclass
class QueryNode:
    matrix: NodeMatrix
    span: tuple | None = None  # (start, end) character range in the caption

    def __post_init__(self):
        masked = ~self.matrix.mask
        if np.any(self.matrix.values[masked] != 0.0):
            raise ValueError("unknown attribute rows must be exactly zero")


@dataclass
class QueryGraph:
    nodes: list
    triples: list  # (head index, relation label, tail index)
    embedding_fingerprint: str = ""
    known_values: list = field(default_factory=list)  # per node: {attribute: value}

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("query graph must contain at least one node")
        in_triple = set()
        for head, relation, tail in self.triples:
            if relation not in RELATIONS:
                raise ValueError(f"unknown relation {relation!r}")
            if not (0 <= head < len(self.nodes) and 0 <= tail < len(self.nodes)):
                raise ValueError("triple endpoints out of range")
            in_triple.update((head, tail))
        for i, node in enumerate(self.nodes):
            if not np.any(node.matrix.mask) and i not in in_triple:
                raise ValueError(
                    f"query node {i} has no known attribute and no relation"
                )


def _word_meaning(word: str, schema: AttributeSchema):
    """Classify one word: ('attr', attribute, value), ('shape_word', value|None), or None."""
    if word in GENERIC_SHAPE_WORDS:
        return ("shape_word", None)
    if word in SYNONYMS:
        attribute, value = SYNONYMS[word]
        if attribute == "shape":
            return ("shape_word", value)
        return ("attr", attribute, value)
    for attribute in schema.attribute_names:
        if word in schema.value_vocab[attribute]:
            if attribute == "shape":
                return ("shape_word", word)
            return ("attr", attribute, word)
    return None


def _build_query_node(
    known: dict, span, schema: AttributeSchema, table: EmbeddingTable
) -> QueryNode:
    m = schema.num_attributes
    values = np.zeros((m, table.dimension))
    mask = np.zeros(m, dtype=bool)
    for i, attribute in enumerate(schema.attribute_names):
        if attribute in known:
            values[i] = table.lookup(known[attribute])
            mask[i] = True
    return QueryNode(matrix=NodeMatrix(values=values, mask=mask), span=span)


def parse_caption(
    caption: str, schema: AttributeSchema, table: EmbeddingTable
) -> QueryGraph:
    tokens = [(m.group(0), m.start(), m.end()) for m in re.finditer(r"\S+", caption)]
    pos = 0

    def fail(message, token_index):
        at = tokens[token_index][1] if token_index < len(tokens) else len(caption)
        raise CaptionParseError(message, at)

    if len(tokens) < 2 or tokens[0][0] != "there" or tokens[1][0] != "is":
        fail("caption must start with 'there is'", 0)
    pos = 2

    def parse_np():
        nonlocal pos
        if pos >= len(tokens):
            fail("expected a noun phrase", pos)
        start_tok = pos
        if tokens[pos][0] in ARTICLES:
            pos += 1
        known: dict = {}
        while pos < len(tokens):
            word = tokens[pos][0]
            meaning = _word_meaning(word, schema)
            if meaning is None:
                fail(f"unrecognized token {word!r}", pos)
            if meaning[0] == "shape_word":
                if meaning[1] is not None:
                    known["shape"] = meaning[1]
                pos += 1
                span = (tokens[start_tok][1], tokens[pos - 1][2])
                return known, span
            _, attribute, value = meaning
            if attribute in known:
                fail(f"duplicate {attribute} word {word!r}", pos)
            known[attribute] = value
            pos += 1
        fail("noun phrase missing its shape word", pos)

    def try_parse_rel():
        nonlocal pos
        for words, label in _REL_PHRASES:
            if pos + len(words) <= len(tokens) and all(
                tokens[pos + k][0] == w for k, w in enumerate(words)
            ):
                pos += len(words)
                return label
        return None

    known_list = []
    spans = []
    triples = []
    known, span = parse_np()
    known_list.append(known)
    spans.append(span)
    while pos < len(tokens):
        rel_start = pos
        label = try_parse_rel()
        if label is None:
            fail(f"expected a relation phrase, found {tokens[pos][0]!r}", pos)
        if pos >= len(tokens):
            fail("relation phrase without a second noun phrase", rel_start)
        known, span = parse_np()
        known_list.append(known)
        spans.append(span)
        triples.append((len(known_list) - 2, label, len(known_list) - 1))

    nodes = [
        _build_query_node(known, span, schema, table)
        for known, span in zip(known_list, spans)
    ]
    try:
        return QueryGraph(
            nodes=nodes,
            triples=triples,
            embedding_fingerprint=table.fingerprint,
            known_values=known_list,
        )
    except ValueError as exc:
        raise CaptionParseError(str(exc), 0)


def query_from_scene(
    scene: SceneGraph,
    schema: AttributeSchema,
    table: EmbeddingTable,
    node_indices=None,
    masks=None,
) -> QueryGraph:
    """Query graph from (a subset of) a gold scene graph."""
    if node_indices is None:
        node_indices = list(range(len(scene.nodes)))
    index_map = {orig: new for new, orig in enumerate(node_indices)}
    nodes = []
    known_list = []
    for k, orig in enumerate(node_indices):
        obj = scene.nodes[orig]
        known = dict(zip(schema.attribute_names, obj.attribute_values))
        if masks is not None:
            known = {
                a: v
                for (a, v), keep in zip(known.items(), masks[k])
                if keep
            }
        known_list.append(known)
        nodes.append(_build_query_node(known, None, schema, table))
    triples = [
        (index_map[e.head], e.relation, index_map[e.tail])
        for e in scene.edges
        if e.head in index_map and e.tail in index_map
    ]
    return QueryGraph(
        nodes=nodes,
        triples=triples,
        embedding_fingerprint=table.fingerprint,
        known_values=known_list,
    )


def sample_partial_query(
    scene: SceneGraph,
    node_drop_fraction: float,
    attribute_mask_fraction: float,
    rng_seed,
    schema: AttributeSchema,
    table: EmbeddingTable,
) -> QueryGraph:
    """Drop a fraction of nodes and optionally mask retained attributes."""
    if not 0.0 <= node_drop_fraction < 1.0:
        raise ValueError("node_drop_fraction must be in [0, 1)")
    if not 0.0 <= attribute_mask_fraction < 1.0:
        raise ValueError("attribute_mask_fraction must be in [0, 1)")
    rng = np.random.default_rng(rng_seed)
    n = len(scene.nodes)
    num_drop = min(int(node_drop_fraction * n), n - 1)
    dropped = set(rng.choice(n, size=num_drop, replace=False).tolist())
    retained = [i for i in range(n) if i not in dropped]

    m = schema.num_attributes
    masks = []
    for k, _ in enumerate(retained):
        keep = rng.random(m) >= attribute_mask_fraction
        if not np.any(keep):
            keep[int(rng.integers(m))] = True  # keep the node identifiable
        masks.append(keep)
    return query_from_scene(scene, schema, table, node_indices=retained, masks=masks)


def caption_grammar_generate(scene: SceneGraph, rng_seed, schema: AttributeSchema) -> str:
    """Random caption in the supported grammar describing part of the scene."""
    rng = np.random.default_rng(rng_seed)
    rel_words = {"left": "left of", "right": "right of", "front": "in front of", "behind": "behind"}
    # words that may replace canonical values, exercising the synonym map
    alternates = {
        ("size", "large"): ("large", "big"),
        ("size", "small"): ("small", "tiny"),
        ("material", "metal"): ("metal", "shiny", "metallic"),
        ("material", "rubber"): ("rubber", "matte"),
        ("shape", "sphere"): ("sphere", "ball"),
        ("shape", "cube"): ("cube", "block"),
    }

    def np_words(obj) -> str:
        attrs = dict(zip(schema.attribute_names, obj.attribute_values))
        names = list(schema.attribute_names)
        expressed = [a for a in names if rng.random() < 0.6]
        if not expressed:
            expressed = [names[int(rng.integers(len(names)))]]
        words = []
        for a in names:
            if a == "shape":
                continue
            if a in expressed:
                value = attrs[a]
                options = alternates.get((a, value), (value,))
                words.append(options[int(rng.integers(len(options)))])
        if "shape" in expressed:
            value = attrs["shape"]
            options = alternates.get(("shape", value), (value,))
            shape_word = options[int(rng.integers(len(options)))]
        else:
            shape_word = GENERIC_SHAPE_WORDS[int(rng.integers(2))]
        words.append(shape_word)
        article = "an" if words[0][0] in "aeiou" else "a"
        return article + " " + " ".join(words)

    chain_length = int(rng.integers(0, min(3, len(scene.nodes))))
    current = int(rng.integers(len(scene.nodes)))
    used = {current}
    parts = ["there is", np_words(scene.nodes[current])]
    for _ in range(chain_length):
        options = [
            e for e in scene.edges if e.head == current and e.tail not in used
        ]
        if not options:
            break
        edge = options[int(rng.integers(len(options)))]
        used.add(edge.tail)
        parts.append(rel_words[edge.relation])
        parts.append(np_words(scene.nodes[edge.tail]))
        current = edge.tail
    return " ".join(parts)

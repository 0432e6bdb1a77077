"""Label embeddings: word-vector file loading and a deterministic hashed fallback.

Every label used by the engine (attribute values and relation names) maps to a
fixed N-dimensional vector. The reserved label UNKNOWN_LABEL always maps to the
zero vector, which is what unknown query attributes are scored with.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmbeddingLookupError, EmbeddingParseError

UNKNOWN_LABEL = "⟨unknown⟩"  # ⟨unknown⟩

SOURCE_FILE = "file"
SOURCE_DETERMINISTIC = "deterministic-hash"


def deterministic_embedding(label: str, dimension: int, seed: int) -> np.ndarray:
    """Unit-norm vector that is a pure function of (label, dimension, seed)."""
    if not label:
        raise ValueError("label must be non-empty")
    if dimension <= 0:
        raise ValueError("dimension must be positive")
    digest = hashlib.sha256(f"{seed}:{dimension}:{label}".encode("utf-8")).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
    vec = rng.uniform(-1.0, 1.0, size=dimension)
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:  # unreachable in practice, keeps the contract total
        vec[0] = 1.0
        norm = 1.0
    return vec / norm


def _fingerprint_file(dimension: int, entries: dict, fallback_seed) -> str:
    h = hashlib.sha256()
    h.update(f"file:{dimension}:{fallback_seed}".encode())
    for label in sorted(entries):
        h.update(label.encode("utf-8"))
        h.update(np.asarray(entries[label], dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


@dataclass
class EmbeddingTable:
    dimension: int
    entries: dict = field(default_factory=dict)
    source: str = SOURCE_DETERMINISTIC
    fallback_seed: int | None = None
    fingerprint: str = ""

    def __post_init__(self):
        if self.dimension <= 0:
            raise ConfigError("embedding dimension must be positive")
        self.entries.setdefault(UNKNOWN_LABEL, np.zeros(self.dimension))
        for label, vec in self.entries.items():
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (self.dimension,):
                raise ConfigError(
                    f"vector for {label!r} has {v.shape} components, expected {self.dimension}"
                )
            if not np.all(np.isfinite(v)):
                raise ConfigError(f"vector for {label!r} has non-finite components")
            self.entries[label] = v
        if not self.fingerprint:
            if self.source == SOURCE_DETERMINISTIC:
                self.fingerprint = hashlib.sha256(
                    f"det:{self.dimension}:{self.fallback_seed}".encode()
                ).hexdigest()[:16]
            else:
                self.fingerprint = _fingerprint_file(
                    self.dimension, self.entries, self.fallback_seed
                )

    def lookup(self, label: str) -> np.ndarray:
        vec = self.entries.get(label)
        if vec is not None:
            return vec
        if self.fallback_seed is None:
            raise EmbeddingLookupError(f"no embedding for label {label!r}")
        vec = deterministic_embedding(label, self.dimension, self.fallback_seed)
        self.entries[label] = vec  # cache keeps lookups bit-stable
        return vec

    def __contains__(self, label: str) -> bool:
        return label in self.entries

    @classmethod
    def deterministic(cls, labels, dimension: int, seed: int) -> "EmbeddingTable":
        entries = {
            label: deterministic_embedding(label, dimension, seed) for label in labels
        }
        return cls(
            dimension=dimension,
            entries=entries,
            source=SOURCE_DETERMINISTIC,
            fallback_seed=seed,
        )

    @classmethod
    def from_schema(cls, schema, dimension: int, seed: int) -> "EmbeddingTable":
        """Deterministic table covering a schema's vocabulary plus relations."""
        from .scene_graph import RELATIONS

        labels = list(RELATIONS)
        for name in schema.attribute_names:
            labels.extend(schema.value_vocab[name])
        return cls.deterministic(labels, dimension, seed)


def load_embeddings(path, dimension: int) -> EmbeddingTable:
    """Parse a word-vector text file: one `label v1 ... vN` entry per line."""
    if dimension <= 0:
        raise ConfigError("dimension must be positive")
    entries: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != dimension + 1:
                raise EmbeddingParseError(
                    f"expected {dimension + 1} fields, found {len(parts)}", line_number
                )
            label = parts[0]
            try:
                vec = np.array([float(tok) for tok in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingParseError(f"non-numeric component: {exc}", line_number)
            if label not in entries:  # duplicates keep the first occurrence
                entries[label] = vec
    entries[UNKNOWN_LABEL] = np.zeros(dimension)
    return EmbeddingTable(dimension=dimension, entries=entries, source=SOURCE_FILE)

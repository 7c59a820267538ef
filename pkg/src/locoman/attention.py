"""Language conditioning: dense feature maps, text embeddings, and the
per-cell cosine cross-attention that turns a query string into a spatial
probability-like map.

Feature maps are synthetic or imported; either way they live in the same
embedding space as the text vectors, so per-cell cosine similarity is the
whole grounding step. Dropout is applied to the similarity map during
training only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np

from .errors import (
    ConfigError,
    CorruptFileError,
    DimensionMismatchError,
    RejectedInputError,
)

ZERO_NORM_TOL = 1e-9
BANK_FORMAT = "embank"
BANK_VERSION = 1
MAX_PAIRWISE_COS = 0.3
SYNTH_MAX_REDRAWS = 10000


@dataclass(frozen=True)
class FeatureMap:
    """H x W grid of C-dimensional embedding vectors."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 3:
            raise RejectedInputError(f"feature map must be H x W x C, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise RejectedInputError("feature map contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class TextEmbedding:
    """A query string and its vector in the shared embedding space."""

    label: str
    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=float).reshape(-1)
        if not np.all(np.isfinite(vec)):
            raise RejectedInputError("text embedding contains non-finite values")
        if np.linalg.norm(vec) <= ZERO_NORM_TOL:
            raise RejectedInputError("text embedding norm must exceed 1e-9")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @property
    def dimension(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class AttentionMap:
    """Per-cell similarity scores. cross_attention outputs lie in [-1, 1];
    training-time dropout rescales survivors so its output can exceed that
    range, hence the range is a postcondition of the similarity op rather
    than a constructor check."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2:
            raise RejectedInputError(f"attention map must be H x W, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise RejectedInputError("attention map contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def cross_attention(fm: FeatureMap, txt: TextEmbedding) -> AttentionMap:
    """Per-cell cosine similarity between the feature map and the query.

    Cells whose feature norm is below 1e-9 score 0 so the result stays a
    total function. Values land in [-1, 1].
    """
    if fm.channels != txt.dimension:
        raise DimensionMismatchError(
            f"feature map has C={fm.channels} but query '{txt.label}' has C={txt.dimension}"
        )
    tnorm = float(np.linalg.norm(txt.vector))
    if tnorm <= ZERO_NORM_TOL:
        raise RejectedInputError("text embedding norm must exceed 1e-9")
    cell_norms = np.linalg.norm(fm.data, axis=2)
    dots = fm.data @ txt.vector
    safe = np.where(cell_norms <= ZERO_NORM_TOL, 1.0, cell_norms * tnorm)
    values = np.where(cell_norms <= ZERO_NORM_TOL, 0.0, dots / safe)
    # guard float rounding just beyond +/-1
    return AttentionMap(np.clip(values, -1.0, 1.0))


def attention_dropout(att: AttentionMap, rate: float, training: bool, seed: int) -> AttentionMap:
    """Zero each cell independently with probability `rate` during training,
    scaling survivors by 1/(1-rate) to preserve the per-cell expectation.
    Identity at inference. Deterministic for a given seed."""
    if not (0.0 <= rate < 1.0):
        raise RejectedInputError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return att
    rng = np.random.default_rng(seed)
    keep = rng.random(att.values.shape) >= rate
    return AttentionMap(att.values * keep / (1.0 - rate))


def localize(att: AttentionMap) -> tuple[tuple[int, int], float]:
    """Argmax cell as (row, col) plus its value; ties break to the
    row-major first occurrence."""
    if att.values.size == 0:
        raise RejectedInputError("cannot localize in an empty attention map")
    flat = int(np.argmax(att.values))
    row, col = divmod(flat, att.width)
    return (row, col), float(att.values[row, col])


def localize_subpixel(att: AttentionMap) -> tuple[float, float]:
    """Continuous (row, col) estimate: weighted centroid of the 3x3 block
    around the argmax, weights shifted so the block minimum carries zero
    weight. Falls back to the peak cell for a flat block."""
    (pr, pc), _ = localize(att)
    r0, r1 = max(0, pr - 1), min(att.height, pr + 2)
    c0, c1 = max(0, pc - 1), min(att.width, pc + 2)
    block = att.values[r0:r1, c0:c1]
    weights = block - block.min()
    total = float(weights.sum())
    if total <= 0.0:
        return float(pr), float(pc)
    rows = np.arange(r0, r1, dtype=float)[:, None]
    cols = np.arange(c0, c1, dtype=float)[None, :]
    return (
        float((weights * rows).sum() / total),
        float((weights * cols).sum() / total),
    )


def _block_slices(n: int, k: int) -> list[slice]:
    # nearly equal contiguous blocks; degenerate blocks borrow one row so
    # maps smaller than the grid still pool to the full k x k output
    edges = [(i * n) // k for i in range(k + 1)]
    return [slice(edges[i], max(edges[i + 1], min(edges[i] + 1, n))) for i in range(k)]


def pool_attention(att: AttentionMap, rows: int = 8, cols: int = 8) -> np.ndarray:
    """Average-pool to a fixed rows x cols grid (policy feature input)."""
    if att.values.size == 0:
        raise RejectedInputError("cannot pool an empty attention map")
    if rows < 1 or cols < 1:
        raise RejectedInputError("pool grid must be at least 1 x 1")
    out = np.empty((rows, cols))
    rslices = _block_slices(att.height, rows)
    cslices = _block_slices(att.width, cols)
    for i, rs in enumerate(rslices):
        for j, cs in enumerate(cslices):
            out[i, j] = att.values[rs, cs].mean()
    return out


class EmbeddingBank:
    """Immutable label -> vector table in a single embedding space.

    Vectors are stored as little-endian float32, the same representation the
    file format uses, so save/load round-trips are bit-exact.
    """

    def __init__(self, dimension: int, entries: dict, provenance: str, origin: str | None = None):
        if dimension < 1:
            raise ConfigError(f"embedding dimension must be >= 1, got {dimension}")
        labels = list(entries)
        if len(set(labels)) != len(labels):
            raise ConfigError("duplicate labels in embedding bank")
        stored = {}
        for label, vec in entries.items():
            arr = np.asarray(vec, dtype="<f4").reshape(-1)
            if arr.shape[0] != dimension:
                raise DimensionMismatchError(
                    f"label '{label}' has dimension {arr.shape[0]}, bank expects {dimension}"
                )
            if not np.all(np.isfinite(arr)):
                raise RejectedInputError(f"label '{label}' has non-finite values")
            arr.setflags(write=False)
            stored[label] = arr
        self._dimension = dimension
        self._entries = stored
        self._provenance = provenance
        # creation origin persists through save/load cycles so re-saving an
        # imported bank reproduces the original file byte for byte
        self._origin = origin if origin is not None else provenance

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def provenance(self) -> str:
        return self._provenance

    @property
    def origin(self) -> str:
        return self._origin

    @property
    def entries(self):
        return MappingProxyType(self._entries)

    def labels(self) -> tuple:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, label: str) -> bool:
        return label in self._entries

    def embedding(self, label: str) -> TextEmbedding:
        if label not in self._entries:
            raise ConfigError(
                f"no embedding for label '{label}' (bank has: {', '.join(self._entries) or 'nothing'})"
            )
        return TextEmbedding(label, np.asarray(self._entries[label], dtype=float))


def synth_embedding_bank(labels, dimension: int, seed: int) -> EmbeddingBank:
    """Deterministic pseudo-random unit vectors, one per label, redrawn until
    every pair satisfies |cos| < 0.3. Raises when the dimension cannot host
    that many well-separated vectors within the redraw budget."""
    labels = list(labels)
    if len(set(labels)) != len(labels):
        raise ConfigError("labels must be distinct")
    rng = np.random.default_rng(seed)
    accepted: list[np.ndarray] = []
    for label in labels:
        for _ in range(SYNTH_MAX_REDRAWS):
            cand = rng.normal(size=dimension)
            norm = np.linalg.norm(cand)
            if norm < 1e-12:
                continue
            cand32 = np.asarray(cand / norm, dtype="<f4")
            # re-normalize after the float32 cast so stored norms stay at 1
            cand32 = np.asarray(cand32 / np.linalg.norm(cand32.astype(float)), dtype="<f4")
            if all(abs(float(np.dot(cand32.astype(float), prev.astype(float)))) < MAX_PAIRWISE_COS for prev in accepted):
                accepted.append(cand32)
                break
        else:
            raise ConfigError(
                f"could not place {len(labels)} vectors with pairwise |cos| < {MAX_PAIRWISE_COS} "
                f"in {dimension} dimensions (gave up at label '{label}')"
            )
    return EmbeddingBank(
        dimension, dict(zip(labels, accepted)), provenance=f"synthetic:{seed}"
    )


def save_embedding_bank(bank: EmbeddingBank, path) -> None:
    """One JSON header line, then every vector as packed little-endian
    float32 in label order. See docs/formats.md."""
    header = json.dumps(
        {
            "format": BANK_FORMAT,
            "version": BANK_VERSION,
            "dimension": bank.dimension,
            "labels": list(bank.labels()),
            "provenance": bank.origin,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    payload = b"".join(bank.entries[label].tobytes() for label in bank.labels())
    Path(path).write_bytes(header.encode("utf-8") + b"\n" + payload)


def load_embedding_bank(path) -> EmbeddingBank:
    """Parse a bank file, validating structure and exact payload length.
    Loaded banks carry provenance 'imported' and are read-only."""
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise CorruptFileError(f"{path}: missing header line")
    try:
        header = json.loads(blob[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"{path}: header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != BANK_FORMAT:
        raise CorruptFileError(f"{path}: not an embedding bank file")
    if header.get("version") != BANK_VERSION:
        raise CorruptFileError(f"{path}: unsupported version {header.get('version')}")
    dim = header.get("dimension")
    labels = header.get("labels")
    if not isinstance(dim, int) or dim < 1:
        raise CorruptFileError(f"{path}: bad dimension {dim!r}")
    if not isinstance(labels, list) or not all(isinstance(l, str) for l in labels):
        raise CorruptFileError(f"{path}: bad label list")
    if len(set(labels)) != len(labels):
        raise CorruptFileError(f"{path}: duplicate labels")
    payload = blob[nl + 1 :]
    expected = len(labels) * dim * 4
    if len(payload) != expected:
        raise CorruptFileError(
            f"{path}: payload is {len(payload)} bytes, expected exactly {expected}"
        )
    vectors = np.frombuffer(payload, dtype="<f4")
    if not np.all(np.isfinite(vectors)):
        raise CorruptFileError(f"{path}: payload contains non-finite values")
    entries = {
        label: vectors[i * dim : (i + 1) * dim] for i, label in enumerate(labels)
    }
    origin = header.get("provenance")
    return EmbeddingBank(
        dim,
        entries,
        provenance="imported",
        origin=origin if isinstance(origin, str) else "imported",
    )

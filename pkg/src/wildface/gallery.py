"""Embedding gallery: enrollment, cosine-similarity identification, persistence.

Identification pools per-identity scores (max over that identity's entries by
default), ranks identities by score, and applies an optional open-set
threshold: below it the probe is declared unknown rather than matched to the
top identity. Scores are cosine similarities, so every decision is invariant
to positive rescaling of embeddings.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    GalleryDimensionError,
    GalleryFormatError,
    GalleryTruncatedError,
    GalleryVersionError,
)

MAGIC = b"RPGL"
FORMAT_VERSION = 1

POOL_MAX = "max"
POOL_MEAN = "mean"


@dataclass(frozen=True, eq=False)
class Embedding:
    """A finite, nonzero feature vector. Stored as float32 (the wire type)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if arr.size == 0:
            raise DataError("embedding must not be empty")
        if not np.all(np.isfinite(arr)):
            raise DataError("embedding contains non-finite values")
        if float(np.linalg.norm(arr.astype(np.float64))) == 0.0:
            raise DataError("embedding has zero norm")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class GalleryEntry:
    identity: str
    embedding: Embedding
    source_ref: str
    enroll_seq: int

    def __eq__(self, other):
        if not isinstance(other, GalleryEntry):
            return NotImplemented
        return (
            self.identity == other.identity
            and self.source_ref == other.source_ref
            and self.enroll_seq == other.enroll_seq
            and self.embedding == other.embedding
        )


@dataclass(frozen=True)
class MatchResult:
    """Ranked identities with scores, plus the open-set decision."""

    ranking: tuple[tuple[str, float], ...]
    decision: str  # "identified" or "unknown"
    identity: str | None
    threshold_used: float | None

    def top(self) -> tuple[str, float]:
        return self.ranking[0]


def cosine_similarity(u: Embedding, v: Embedding) -> float:
    """<u, v> / (|u| |v|), clamped into [-1, 1] against rounding."""
    if u.dim != v.dim:
        raise DataError(f"embedding dims differ: {u.dim} vs {v.dim}")
    a = u.values.astype(np.float64)
    b = v.values.astype(np.float64)
    score = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return min(1.0, max(-1.0, score))


class Gallery:
    """Append-only store of enrolled embeddings.

    Reads (identify, iteration) are safe concurrently with each other;
    enroll and load are writes and must not overlap reads.
    """

    def __init__(self):
        self.entries: list[GalleryEntry] = []
        self.dim: int | None = None
        self._matrix_cache: tuple[int, np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, Gallery):
            return NotImplemented
        return self.dim == other.dim and self.entries == other.entries

    def identities(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.identity, None)
        return list(seen)

    def enroll(self, identity: str, embedding: Embedding, source_ref: str = "") -> int:
        if not identity:
            raise DataError("identity label must be nonempty")
        if self.dim is None:
            self.dim = embedding.dim
        elif embedding.dim != self.dim:
            raise GalleryDimensionError(
                f"embedding dim {embedding.dim} does not match gallery dim {self.dim}"
            )
        seq = len(self.entries)
        self.entries.append(
            GalleryEntry(identity=identity, embedding=embedding, source_ref=source_ref, enroll_seq=seq)
        )
        return seq

    def _unit_matrix(self) -> np.ndarray:
        cached = self._matrix_cache
        if cached is not None and cached[0] == len(self.entries):
            return cached[1]
        mat = np.stack([e.embedding.values.astype(np.float64) for e in self.entries])
        mat /= np.linalg.norm(mat, axis=1, keepdims=True)
        self._matrix_cache = (len(self.entries), mat)
        return mat

    def identify(
        self,
        probe: Embedding,
        threshold: float | None = None,
        pooling: str = POOL_MAX,
    ) -> MatchResult:
        """Rank gallery identities against a probe and decide identified/unknown.

        Per-identity score is the max (default) or mean of that identity's
        entry similarities. Ties rank by the smallest enroll_seq among the
        identity's best-scoring entries. The full ranking is returned even
        when the decision is unknown.
        """
        if not self.entries:
            raise DataError("cannot identify against an empty gallery")
        if probe.dim != self.dim:
            raise DataError(f"probe dim {probe.dim} does not match gallery dim {self.dim}")
        if pooling not in (POOL_MAX, POOL_MEAN):
            raise DataError(f"unknown pooling '{pooling}'")

        p = probe.values.astype(np.float64)
        p = p / np.linalg.norm(p)
        scores = np.clip(self._unit_matrix() @ p, -1.0, 1.0)

        by_identity: dict[str, list[tuple[float, int]]] = {}
        for e, s in zip(self.entries, scores):
            by_identity.setdefault(e.identity, []).append((float(s), e.enroll_seq))

        pooled: list[tuple[float, int, str]] = []
        for identity, pairs in by_identity.items():
            if pooling == POOL_MAX:
                best = max(s for s, _ in pairs)
            else:
                best = sum(s for s, _ in pairs) / len(pairs)
            top_score = max(s for s, _ in pairs)
            tie_seq = min(seq for s, seq in pairs if s == top_score)
            pooled.append((best, tie_seq, identity))
        pooled.sort(key=lambda t: (-t[0], t[1]))

        ranking = tuple((identity, score) for score, _, identity in pooled)
        top_identity, top_score = ranking[0]
        if threshold is None or top_score >= threshold:
            decision, identity = "identified", top_identity
        else:
            decision, identity = "unknown", None
        return MatchResult(
            ranking=ranking, decision=decision, identity=identity, threshold_used=threshold
        )


def save_gallery(gallery: Gallery, sink) -> None:
    """Write the binary gallery format (magic, version, dim, count, entries)."""
    dims = {e.embedding.dim for e in gallery.entries}
    if len(dims) > 1:
        raise GalleryDimensionError(f"entries carry inconsistent dims: {sorted(dims)}")
    dim = gallery.dim or (dims.pop() if dims else 0)

    own = isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__")
    fh = open(sink, "wb") if own else sink
    try:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", FORMAT_VERSION, dim, len(gallery.entries)))
        for e in gallery.entries:
            ident = e.identity.encode("utf-8")
            src = e.source_ref.encode("utf-8")
            fh.write(struct.pack("<I", len(ident)))
            fh.write(ident)
            fh.write(struct.pack("<I", len(src)))
            fh.write(src)
            fh.write(struct.pack("<Q", e.enroll_seq))
            fh.write(e.embedding.values.astype("<f4").tobytes())
    finally:
        if own:
            fh.close()


def load_gallery(source) -> Gallery:
    """Read a gallery file; any inconsistency raises before a gallery exists."""
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    fh = open(source, "rb") if own else source
    try:
        head = fh.read(4)
        if head != MAGIC:
            raise GalleryFormatError(f"bad magic {head!r}, expected {MAGIC!r}")
        fixed = fh.read(struct.calcsize("<IIQ"))
        if len(fixed) != struct.calcsize("<IIQ"):
            raise GalleryTruncatedError("file ends inside the header")
        version, dim, count = struct.unpack("<IIQ", fixed)
        if version != FORMAT_VERSION:
            raise GalleryVersionError(
                f"unsupported gallery format version {version}, expected {FORMAT_VERSION}"
            )
        entries: list[GalleryEntry] = []
        for _ in range(count):
            identity = _read_string(fh)
            source_ref = _read_string(fh)
            seq_raw = fh.read(8)
            if len(seq_raw) != 8:
                raise GalleryTruncatedError("file ends inside an entry header")
            (enroll_seq,) = struct.unpack("<Q", seq_raw)
            vec_raw = fh.read(4 * dim)
            if len(vec_raw) != 4 * dim:
                raise GalleryTruncatedError("file ends inside an embedding vector")
            values = np.frombuffer(vec_raw, dtype="<f4")
            entries.append(
                GalleryEntry(
                    identity=identity,
                    embedding=Embedding(values=values),
                    source_ref=source_ref,
                    enroll_seq=enroll_seq,
                )
            )
    finally:
        if own:
            fh.close()

    out = Gallery()
    out.entries = entries
    out.dim = dim if entries else (dim or None)
    return out


def _read_string(fh) -> str:
    raw = fh.read(4)
    if len(raw) != 4:
        raise GalleryTruncatedError("file ends inside a string length")
    (n,) = struct.unpack("<I", raw)
    data = fh.read(n)
    if len(data) != n:
        raise GalleryTruncatedError("file ends inside a string")
    return data.decode("utf-8")

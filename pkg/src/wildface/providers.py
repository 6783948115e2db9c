"""Provider seams for the learned models, plus deterministic mocks.

The pipeline never talks to a concrete network: detection, landmark
segmentation and embedding extraction each sit behind a small interface so an
external inference runtime can be adapted in without touching core modules.
The mock implementations read ground truth from the dataset manifest and are
fully deterministic, which is what makes the end-to-end protocol testable.

Providers accept an optional source `ref` (and, for segmentation, the crop
geometry); real adapters may ignore these, mocks use them to find their
annotations.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .align import forward_map_to_crop
from .errors import DataError, ProviderError
from .gallery import Embedding
from .imaging import BoundingBox, ImageBuffer
from .landmarks import FaceLandmarks, MaskParams, MaskTriple, render_masks
from .manifest import DatasetManifest

DEFAULT_INPUT_SIDE = 224


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if not np.isfinite(self.confidence):
            raise DataError("detection confidence must be finite")
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"detection confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ProviderMetadata:
    name: str
    input_side: int = DEFAULT_INPUT_SIDE
    embedding_dim: int | None = None

    def __post_init__(self):
        if self.input_side < 16:
            raise DataError(f"provider input_side must be >= 16, got {self.input_side}")
        if self.embedding_dim is not None and self.embedding_dim < 1:
            raise DataError("embedding_dim must be >= 1")


def select_primary_face(detections) -> Detection:
    """The largest detection; ties go to higher confidence, then input order."""
    dets = list(detections)
    if not dets:
        raise ProviderError("no face detections to select from")
    return max(
        enumerate(dets),
        key=lambda t: (t[1].box.area, t[1].confidence, -t[0]),
    )[1]


def clamp_box(box: BoundingBox, width: int, height: int) -> BoundingBox | None:
    """Intersect a box with the image; None if the intersection is empty."""
    x0 = max(box.x, 0.0)
    y0 = max(box.y, 0.0)
    x1 = min(box.x + box.w, float(width))
    y1 = min(box.y + box.h, float(height))
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None
    return BoundingBox(x=x0, y=y0, w=x1 - x0, h=y1 - y0)


class FaceDetector(ABC):
    metadata: ProviderMetadata

    @abstractmethod
    def detect_faces(self, img: ImageBuffer, ref: str | None = None) -> list[Detection]:
        """All face detections in the image; may be empty, never silently fails."""


class FaceSegmenter(ABC):
    metadata: ProviderMetadata

    @abstractmethod
    def segment_face(
        self,
        crop: ImageBuffer,
        ref: str | None = None,
        crop_box: BoundingBox | None = None,
        crop_scale: tuple[float, float] | None = None,
    ) -> MaskTriple:
        """Binary landmark masks (left eye, right eye, nose) at crop dims."""


class FaceEmbedder(ABC):
    metadata: ProviderMetadata

    @abstractmethod
    def embed_face(self, aligned: ImageBuffer, ref: str | None = None) -> Embedding:
        """Feature vector for an aligned face; deterministic per input."""


def checked_embedding(raw) -> Embedding:
    """Seam guard: normalize provider output and reject invalid vectors."""
    try:
        if isinstance(raw, Embedding):
            return raw
        return Embedding(values=np.asarray(raw, dtype=np.float32))
    except DataError as exc:
        raise ProviderError(f"embedder returned an invalid vector: {exc}") from exc


class MockDetector(FaceDetector):
    """Replays annotated bounding boxes keyed by source ref."""

    def __init__(self, boxes_by_ref, name: str = "mock-detector", input_side: int = DEFAULT_INPUT_SIDE):
        self.boxes_by_ref = dict(boxes_by_ref)
        self.metadata = ProviderMetadata(name=name, input_side=input_side)

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, confidence: float = 1.0) -> "MockDetector":
        boxes = {
            rec.path: [Detection(box=rec.bbox, confidence=confidence)] if rec.bbox else []
            for rec in manifest.records
        }
        return cls(boxes)

    def detect_faces(self, img: ImageBuffer, ref: str | None = None) -> list[Detection]:
        if ref is None or ref not in self.boxes_by_ref:
            raise ProviderError(f"mock detector has no annotation entry for ref {ref!r}")
        out = []
        for det in self.boxes_by_ref[ref]:
            clamped = clamp_box(det.box, img.width, img.height)
            if clamped is None:
                raise ProviderError(
                    f"annotated box for {ref!r} lies entirely outside the {img.width}x{img.height} image"
                )
            out.append(Detection(box=clamped, confidence=det.confidence))
        return out


class MockSegmenter(FaceSegmenter):
    """Renders ground-truth disks at the manifest landmarks, in crop coordinates."""

    def __init__(
        self,
        landmarks_by_ref,
        mask_params: MaskParams | None = None,
        name: str = "mock-segmenter",
        input_side: int = DEFAULT_INPUT_SIDE,
    ):
        self.landmarks_by_ref = dict(landmarks_by_ref)
        self.mask_params = mask_params or MaskParams()
        self.metadata = ProviderMetadata(name=name, input_side=input_side)

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, **kwargs) -> "MockSegmenter":
        lms = {rec.path: rec.landmarks for rec in manifest.records}
        return cls(lms, **kwargs)

    def segment_face(
        self,
        crop: ImageBuffer,
        ref: str | None = None,
        crop_box: BoundingBox | None = None,
        crop_scale: tuple[float, float] | None = None,
    ) -> MaskTriple:
        lm = self.landmarks_by_ref.get(ref) if ref is not None else None
        if lm is None:
            raise ProviderError(f"mock segmenter has no landmark annotation for ref {ref!r}")
        if crop_box is not None:
            scale = crop_scale or (1.0, 1.0)
            lm = FaceLandmarks(
                left_eye=forward_map_to_crop(lm.left_eye, crop_box, scale),
                right_eye=forward_map_to_crop(lm.right_eye, crop_box, scale),
                nose=forward_map_to_crop(lm.nose, crop_box, scale),
            )
        params = MaskParams(
            eye_radius=self.mask_params.eye_radius,
            nose_radius=self.mask_params.nose_radius,
            canvas=(crop.width, crop.height),
        )
        try:
            return render_masks(lm, params)
        except DataError as exc:
            raise ProviderError(f"cannot render mock masks for {ref!r}: {exc}") from exc


class MockEmbedder(FaceEmbedder):
    """Identity-keyed embeddings: one near-orthogonal vector per identity.

    Every identity gets a distinct basis vector plus small seeded noise, so
    same-identity images agree exactly (or almost, with per-image jitter > 0)
    while cross-identity cosine stays far below any matching threshold.
    """

    def __init__(
        self,
        identity_by_ref,
        dim: int | None = None,
        noise_scale: float = 0.02,
        jitter: float = 0.0,
        name: str = "mock-embedder",
        input_side: int = DEFAULT_INPUT_SIDE,
    ):
        self.identity_by_ref = dict(identity_by_ref)
        identities = sorted(set(self.identity_by_ref.values()))
        self._index = {identity: i for i, identity in enumerate(identities)}
        self.dim = max(dim or 0, len(identities), 8)
        self.noise_scale = noise_scale
        self.jitter = jitter
        self.metadata = ProviderMetadata(name=name, input_side=input_side, embedding_dim=self.dim)

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, **kwargs) -> "MockEmbedder":
        return cls({rec.path: rec.identity for rec in manifest.records}, **kwargs)

    @staticmethod
    def _rng(label: str) -> np.random.Generator:
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "little"))

    def identity_vector(self, identity: str) -> np.ndarray:
        if identity not in self._index:
            raise ProviderError(f"mock embedder knows no identity '{identity}'")
        base = np.zeros(self.dim, dtype=np.float64)
        base[self._index[identity]] = 1.0
        noise = self._rng(f"emb|{identity}").standard_normal(self.dim) * self.noise_scale
        return base + noise

    def embed_face(self, aligned: ImageBuffer, ref: str | None = None) -> Embedding:
        identity = self.identity_by_ref.get(ref) if ref is not None else None
        if identity is None:
            raise ProviderError(f"mock embedder has no identity annotation for ref {ref!r}")
        vec = self.identity_vector(identity)
        if self.jitter > 0:
            vec = vec + self._rng(f"jit|{identity}|{ref}").standard_normal(self.dim) * self.jitter
        return Embedding(values=vec.astype(np.float32))

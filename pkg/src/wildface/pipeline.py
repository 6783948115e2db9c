"""End-to-end identification: detect, align, embed, match.

Stage order is fixed: detect -> select_face -> crop -> segment ->
extract_landmarks -> map_landmarks -> align -> embed -> identify. Errors
carry the stage they occurred in so batch tooling can triage failures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .align import AlignedFace, AlignParams, align_face, map_landmarks_to_source
from .errors import NoFaceError, WildfaceError
from .gallery import Embedding, Gallery, MatchResult
from .imaging import BoundingBox, ImageBuffer, _round_px, crop, resize
from .landmarks import extract_landmarks
from .providers import FaceDetector, FaceEmbedder, FaceSegmenter, checked_embedding, select_primary_face

STAGES = (
    "detect",
    "select_face",
    "crop",
    "segment",
    "extract_landmarks",
    "map_landmarks",
    "align",
    "embed",
    "identify",
)


@dataclass(frozen=True)
class ProviderSet:
    detector: FaceDetector
    segmenter: FaceSegmenter
    embedder: FaceEmbedder


class PipelineStageError(WildfaceError):
    """Wraps a stage failure; `cause` keeps the original error class."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Trace:
    """Ordered record of the stages a pipeline run went through."""

    entries: list = field(default_factory=list)

    def add(self, stage: str, **detail):
        self.entries.append({"stage": stage, **detail})

    def stages(self) -> list[str]:
        return [e["stage"] for e in self.entries]


@dataclass(frozen=True)
class FaceDescriptor:
    """Everything extracted from one image on the way to identification."""

    embedding: Embedding
    aligned: AlignedFace
    trace: Trace


@dataclass(frozen=True)
class PipelineResult:
    match: MatchResult
    descriptor: FaceDescriptor


def _stage(trace: Trace, name: str, fn, **detail):
    try:
        out = fn()
    except WildfaceError as exc:
        raise PipelineStageError(name, exc) from exc
    trace.add(name, **detail)
    return out


def extract_face_descriptor(
    img: ImageBuffer,
    providers: ProviderSet,
    align_params: AlignParams | None = None,
    ref: str | None = None,
) -> FaceDescriptor:
    """Run detection through embedding for one image."""
    params = align_params or AlignParams()
    trace = Trace()

    detections = _stage(trace, "detect", lambda: providers.detector.detect_faces(img, ref=ref))
    trace.entries[-1]["count"] = len(detections)
    if not detections:
        raise PipelineStageError("detect", NoFaceError(f"no face detected in {ref or 'image'}"))

    det = _stage(trace, "select_face", lambda: select_primary_face(detections))
    trace.entries[-1]["box"] = [det.box.x, det.box.y, det.box.w, det.box.h]

    side = providers.segmenter.metadata.input_side
    face = _stage(trace, "crop", lambda: crop(img, det.box))
    # the realized integer box is what landmark back-mapping must invert
    realized_box = BoundingBox(
        x=float(_round_px(det.box.x)),
        y=float(_round_px(det.box.y)),
        w=float(face.width),
        h=float(face.height),
    )
    face_resized = resize(face, side, side)
    scale = (side / face.width, side / face.height)
    trace.entries[-1]["realized_box"] = [realized_box.x, realized_box.y, realized_box.w, realized_box.h]
    trace.entries[-1]["scale"] = list(scale)

    masks = _stage(
        trace,
        "segment",
        lambda: providers.segmenter.segment_face(
            face_resized, ref=ref, crop_box=realized_box, crop_scale=scale
        ),
    )

    extraction = _stage(trace, "extract_landmarks", lambda: extract_landmarks(masks))
    trace.entries[-1]["eyes_swapped"] = extraction.eyes_swapped

    lm_src = _stage(
        trace,
        "map_landmarks",
        lambda: map_landmarks_to_source(extraction.landmarks, realized_box, scale),
    )

    aligned = _stage(trace, "align", lambda: align_face(img, lm_src, params))

    embed_input = aligned.image
    embed_side = providers.embedder.metadata.input_side
    if embed_side != embed_input.width:
        embed_input = resize(embed_input, embed_side, embed_side)
    embedding = _stage(
        trace,
        "embed",
        lambda: checked_embedding(providers.embedder.embed_face(embed_input, ref=ref)),
    )
    trace.entries[-1]["dim"] = embedding.dim

    return FaceDescriptor(embedding=embedding, aligned=aligned, trace=trace)


def run_pipeline(
    img: ImageBuffer,
    providers: ProviderSet,
    gallery: Gallery,
    align_params: AlignParams | None = None,
    threshold: float | None = None,
    ref: str | None = None,
) -> PipelineResult:
    """Full identification of one image against a gallery."""
    descriptor = extract_face_descriptor(img, providers, align_params, ref=ref)
    match = _stage(
        descriptor.trace,
        "identify",
        lambda: gallery.identify(descriptor.embedding, threshold=threshold),
    )
    descriptor.trace.entries[-1]["decision"] = match.decision
    descriptor.trace.entries[-1]["top"] = list(match.top())
    return PipelineResult(match=match, descriptor=descriptor)

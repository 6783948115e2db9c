"""Individual animal identification from face images.

A pipeline toolkit: SSIM-based filtering of correlated images, disk-mask
landmark localization, eye-line face alignment, cosine-similarity gallery
identification, and the evaluation protocols (splits, CMC, ROC, rank-k
tables). Learned models plug in behind detector/segmenter/embedder provider
interfaces; deterministic mocks ship for testing.
"""

__version__ = "0.1.0"

from .align import AlignedFace, AlignParams, align_face, map_landmarks_to_source
from .dedup import DedupParams, DedupReport, dedup_dataset, dedup_individual
from .errors import (
    DataError,
    DegenerateLandmarksError,
    LandmarkNotFoundError,
    NoFaceError,
    ProviderError,
    WildfaceError,
)
from .evaluation import (
    CmcCurve,
    EvalSplit,
    LabeledRef,
    PairSample,
    RocCurve,
    SplitSpec,
    compute_cmc,
    compute_roc,
    make_split,
    rank_k_table,
    sample_pairs,
)
from .gallery import (
    Embedding,
    Gallery,
    GalleryEntry,
    MatchResult,
    cosine_similarity,
    load_gallery,
    save_gallery,
)
from .imaging import (
    BoundingBox,
    ImageBuffer,
    Point2,
    SsimParams,
    crop,
    resize,
    rotate_about,
    ssim,
    to_grayscale,
)
from .landmarks import (
    FaceLandmarks,
    LandmarkErrorReport,
    MaskParams,
    MaskTriple,
    centroid_of_mask,
    extract_landmarks,
    localization_error,
    render_masks,
)
from .manifest import DatasetManifest, ManifestRecord, ingest_video, load_manifest
from .pipeline import PipelineResult, PipelineStageError, ProviderSet, run_pipeline
from .providers import (
    Detection,
    FaceDetector,
    FaceEmbedder,
    FaceSegmenter,
    MockDetector,
    MockEmbedder,
    MockSegmenter,
    ProviderMetadata,
    select_primary_face,
)

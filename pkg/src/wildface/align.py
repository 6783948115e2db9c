"""Eye-line face alignment.

The face image is rotated about the eye midpoint until the inter-eye line is
horizontal, then cropped with margins that are fixed multiples of the
inter-eye distance d: a*d above the eyes, b*d below, c*d beyond each eye
center. The crop is resized to a square canonical size, which pins the
inter-eye distance of every aligned face to the same value and makes
embeddings comparable across inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateLandmarksError
from .imaging import BoundingBox, ImageBuffer, Point2, _round_px, resize, rotate_crop
from .landmarks import FaceLandmarks


@dataclass(frozen=True)
class AlignParams:
    """Crop ratios relative to the inter-eye distance, and the output size."""

    a: float = 1.3  # above the eye line
    b: float = 1.7  # below the eye line
    c: float = 1.2  # beyond each eye center
    output_side: int = 224

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.c <= 0:
            raise DataError("alignment ratios must be positive")
        if self.output_side < 16:
            raise DataError(f"output_side must be >= 16, got {self.output_side}")


@dataclass(frozen=True, eq=False)
class AlignedFace:
    """An aligned face image plus the affine map that produced it.

    transform is a 2x3 row-major matrix mapping source-image coordinates to
    aligned-image coordinates: [x', y']^T = M[:, :2] @ [x, y]^T + M[:, 2].
    crop_width/crop_height are the realized pre-resize crop dimensions.
    """

    image: ImageBuffer
    transform: tuple[tuple[float, float, float], tuple[float, float, float]]
    source_landmarks: FaceLandmarks
    crop_width: int
    crop_height: int

    def apply_transform(self, p: Point2) -> Point2:
        (m00, m01, m02), (m10, m11, m12) = self.transform
        return Point2(x=m00 * p.x + m01 * p.y + m02, y=m10 * p.x + m11 * p.y + m12)


def align_face(img: ImageBuffer, lm: FaceLandmarks, params: AlignParams | None = None) -> AlignedFace:
    """Rotate so the eyes are level, crop by the ratio rule, resize square.

    The crop is computed analytically in the rotated frame: after rotation
    about the eye midpoint the eyes sit at (mx - d/2, my) and (mx + d/2, my),
    so the box is [mx - (0.5 + c) d, mx + (0.5 + c) d] x [my - a d, my + b d].
    Out-of-bounds regions pad with black.
    """
    p = params or AlignParams()
    left, right = lm.left_eye, lm.right_eye
    dx = right.x - left.x
    dy = right.y - left.y
    d = math.hypot(dx, dy)
    if d <= 1.0:
        raise DegenerateLandmarksError(
            f"inter-eye distance {d:.3f}px is too small to align"
        )
    theta = math.atan2(dy, dx)
    mid = Point2(x=(left.x + right.x) / 2.0, y=(left.y + right.y) / 2.0)

    box = BoundingBox(
        x=mid.x - (0.5 + p.c) * d,
        y=mid.y - p.a * d,
        w=(1.0 + 2.0 * p.c) * d,
        h=(p.a + p.b) * d,
    )
    # fused rotate+crop: bit-identical to rotate_about followed by crop
    face = rotate_crop(img, mid, theta, box)
    out = resize(face, p.output_side, p.output_side)

    transform = _compose_transform(mid, theta, box, face.width, face.height, p.output_side)
    return AlignedFace(
        image=out,
        transform=transform,
        source_landmarks=lm,
        crop_width=face.width,
        crop_height=face.height,
    )


def _compose_transform(mid, theta, box, crop_w, crop_h, output_side):
    """Rotation about mid, translation to the realized crop origin, then scale.

    Uses the same rounded crop origin and dimensions as the pixel path, so
    applying the transform to source points predicts aligned-image positions
    exactly.
    """
    # rotate_about(angle) moves a source point p to mid + R(-theta) (p - mid)
    ca, sa = math.cos(theta), math.sin(theta)
    r00, r01 = ca, sa
    r10, r11 = -sa, ca
    x0 = float(_round_px(box.x))
    y0 = float(_round_px(box.y))
    sx = output_side / crop_w
    sy = output_side / crop_h
    # x' = sx * (r00 (x - mx) + r01 (y - my) + mx - x0), same pattern for y'
    m00 = sx * r00
    m01 = sx * r01
    m02 = sx * (-r00 * mid.x - r01 * mid.y + mid.x - x0)
    m10 = sy * r10
    m11 = sy * r11
    m12 = sy * (-r10 * mid.x - r11 * mid.y + mid.y - y0)
    return ((m00, m01, m02), (m10, m11, m12))


def map_landmarks_to_source(
    lm_crop: FaceLandmarks, crop_box: BoundingBox, crop_scale: tuple[float, float]
) -> FaceLandmarks:
    """Map landmarks predicted on a resized face crop back to the source image.

    crop_box is the realized (integer-rounded) box that was cut from the
    source and crop_scale = (sx, sy) the resize factors applied afterwards;
    the inverse is an unscale followed by a translation.
    """
    sx, sy = crop_scale
    if sx <= 0 or sy <= 0:
        raise DataError(f"crop scale must be positive, got ({sx}, {sy})")

    def back(pt: Point2) -> Point2:
        return Point2(x=pt.x / sx + crop_box.x, y=pt.y / sy + crop_box.y)

    return FaceLandmarks(
        left_eye=back(lm_crop.left_eye),
        right_eye=back(lm_crop.right_eye),
        nose=back(lm_crop.nose),
    )


def forward_map_to_crop(
    pt: Point2, crop_box: BoundingBox, crop_scale: tuple[float, float]
) -> Point2:
    """Inverse of map_landmarks_to_source for a single point."""
    sx, sy = crop_scale
    if sx <= 0 or sy <= 0:
        raise DataError(f"crop scale must be positive, got ({sx}, {sy})")
    return Point2(x=(pt.x - crop_box.x) * sx, y=(pt.y - crop_box.y) * sy)


def eye_distance(lm: FaceLandmarks) -> float:
    return math.hypot(lm.right_eye.x - lm.left_eye.x, lm.right_eye.y - lm.left_eye.y)


def predicted_crop_dims(d: float, params: AlignParams) -> tuple[float, float]:
    """Pre-resize crop dimensions implied by the ratio rule."""
    return ((1.0 + 2.0 * params.c) * d, (params.a + params.b) * d)


def normalized_eye_distance(aligned: AlignedFace) -> float:
    """Inter-eye distance in the aligned output frame."""
    lp = aligned.apply_transform(aligned.source_landmarks.left_eye)
    rp = aligned.apply_transform(aligned.source_landmarks.right_eye)
    return math.hypot(rp.x - lp.x, rp.y - lp.y)


def as_affine_array(aligned: AlignedFace) -> np.ndarray:
    return np.array(aligned.transform, dtype=np.float64)

"""Disk-mask landmark encoding and its inverse.

Ground-truth masks are rendered as filled circles (value 255 on a 0
background) around the eye and nose centers; predicted masks come back from a
segmenter and are reduced to landmark points by taking the centroid of the lit
pixels. Disk membership and centroids both use the pixel-center convention
(pixel (i, j) centered at (j + 0.5, i + 0.5)) so results are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateLandmarksError, LandmarkNotFoundError
from .imaging import ImageBuffer, Point2

MASK_ON = 255
# soft masks from real segmenters binarize at this cutoff
MASK_BINARIZE_THRESHOLD = 127

DEFAULT_EYE_RADIUS = 7.0
DEFAULT_NOSE_RADIUS = 13.0
DEFAULT_CANVAS = (224, 224)

CHANNEL_NAMES = ("left_eye", "right_eye", "nose")


@dataclass(frozen=True)
class FaceLandmarks:
    """Left-eye, right-eye and nose centers in one coordinate frame."""

    left_eye: Point2
    right_eye: Point2
    nose: Point2

    def require_convention(self):
        """Enforce left = smaller x; raised where the convention is contractual."""
        if not self.left_eye.x < self.right_eye.x:
            raise DataError(
                f"left eye x ({self.left_eye.x}) must be smaller than "
                f"right eye x ({self.right_eye.x})"
            )

    def points(self) -> tuple[Point2, Point2, Point2]:
        return (self.left_eye, self.right_eye, self.nose)


@dataclass(frozen=True)
class MaskParams:
    """Disk radii and canvas for rendering ground-truth masks."""

    eye_radius: float = DEFAULT_EYE_RADIUS
    nose_radius: float = DEFAULT_NOSE_RADIUS
    canvas: tuple[int, int] = DEFAULT_CANVAS  # (width, height)

    def __post_init__(self):
        if self.eye_radius < 1 or self.nose_radius < 1:
            raise DataError("mask radii must be >= 1 pixel")
        w, h = self.canvas
        if w < 1 or h < 1:
            raise DataError(f"invalid mask canvas {w}x{h}")


@dataclass(frozen=True, eq=False)
class MaskTriple:
    """Three co-registered binary masks: left eye, right eye, nose."""

    left_eye_mask: ImageBuffer
    right_eye_mask: ImageBuffer
    nose_mask: ImageBuffer

    def __post_init__(self):
        dims = {(m.width, m.height) for m in self.masks()}
        if len(dims) != 1:
            raise DataError(f"mask dimensions differ across channels: {sorted(dims)}")
        for name, m in zip(CHANNEL_NAMES, self.masks()):
            if m.channels != 1:
                raise DataError(f"mask channel '{name}' must be 1-channel")

    def masks(self) -> tuple[ImageBuffer, ImageBuffer, ImageBuffer]:
        return (self.left_eye_mask, self.right_eye_mask, self.nose_mask)

    def to_image(self) -> ImageBuffer:
        """Pack as one 3-channel image (channel order: left eye, right eye, nose)."""
        stacked = np.stack([m.plane() for m in self.masks()], axis=2)
        return ImageBuffer.from_array(stacked)

    @classmethod
    def from_image(cls, img: ImageBuffer) -> "MaskTriple":
        if img.channels != 3:
            raise DataError("a packed mask image must have 3 channels")
        planes = [ImageBuffer.from_array(img.data[:, :, c]) for c in range(3)]
        return cls(*planes)


@dataclass(frozen=True)
class LandmarkExtraction:
    """Landmarks recovered from a mask triple, plus whether eyes were swapped."""

    landmarks: FaceLandmarks
    eyes_swapped: bool


@dataclass(frozen=True)
class LandmarkErrorReport:
    """Per-landmark localization error over a set of faces.

    Headline numbers are mean Euclidean distances in pixels; the matching
    mean squared errors are carried alongside for cross-checking.
    """

    left_eye: float
    right_eye: float
    nose: float
    average: float
    count: int
    left_eye_mse: float
    right_eye_mse: float
    nose_mse: float
    average_mse: float

    def as_table(self) -> str:
        """Render the landmark / error layout used in reports."""
        headers = ["Landmarks", "Left eye center", "Right eye center", "Nose center", "Average error"]
        values = ["Error(pixels)"] + [
            f"{v:.2f}" for v in (self.left_eye, self.right_eye, self.nose, self.average)
        ]
        widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
        head = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
        body = "  ".join(v.ljust(w) for v, w in zip(values, widths))
        return head + "\n" + body


def render_masks(lm: FaceLandmarks, params: MaskParams | None = None) -> MaskTriple:
    """Render ground-truth disks for the three landmarks.

    A pixel is lit iff its center lies within the disk radius of the
    landmark. Landmarks must lie on the canvas.
    """
    p = params or MaskParams()
    w, h = p.canvas
    for name, pt in zip(CHANNEL_NAMES, lm.points()):
        if not (0 <= pt.x <= w and 0 <= pt.y <= h):
            raise DataError(
                f"landmark '{name}' at ({pt.x}, {pt.y}) is outside the {w}x{h} canvas"
            )
    radii = (p.eye_radius, p.eye_radius, p.nose_radius)
    planes = [_disk(pt, r, w, h) for pt, r in zip(lm.points(), radii)]
    return MaskTriple(*[ImageBuffer.from_array(pl) for pl in planes])


def _disk(center: Point2, radius: float, w: int, h: int) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w]
    d2 = (xs + 0.5 - center.x) ** 2 + (ys + 0.5 - center.y) ** 2
    return np.where(d2 <= radius * radius, MASK_ON, 0).astype(np.uint8)


def centroid_of_mask(mask: ImageBuffer) -> Point2:
    """Unweighted mean of the centers of all lit (> 127) pixels."""
    if mask.channels != 1:
        raise DataError("centroid_of_mask expects a 1-channel mask")
    ii, jj = np.nonzero(mask.plane() > MASK_BINARIZE_THRESHOLD)
    if ii.size == 0:
        raise LandmarkNotFoundError("mask")
    return Point2(x=float(jj.mean() + 0.5), y=float(ii.mean() + 0.5))


def extract_landmarks(masks: MaskTriple) -> LandmarkExtraction:
    """Recover landmark points from a mask triple.

    Eye channels are re-ordered if needed so the output satisfies the
    left.x < right.x convention; the swap is reported to the caller.
    """
    points = []
    for name, m in zip(CHANNEL_NAMES, masks.masks()):
        try:
            points.append(centroid_of_mask(m))
        except LandmarkNotFoundError:
            raise LandmarkNotFoundError(name) from None
    left, right, nose = points
    swapped = False
    if left.x > right.x:
        left, right = right, left
        swapped = True
    elif left.x == right.x:
        raise DegenerateLandmarksError(
            f"eye centroids share x = {left.x}; cannot orient left/right"
        )
    lm = FaceLandmarks(left_eye=left, right_eye=right, nose=nose)
    lm.require_convention()
    return LandmarkExtraction(landmarks=lm, eyes_swapped=swapped)


def localization_error(
    predicted: list[FaceLandmarks] | tuple[FaceLandmarks, ...],
    truth: list[FaceLandmarks] | tuple[FaceLandmarks, ...],
) -> LandmarkErrorReport:
    """Mean per-landmark Euclidean error between predictions and ground truth."""
    if len(predicted) == 0:
        raise DataError("localization_error needs at least one face")
    if len(predicted) != len(truth):
        raise DataError(
            f"prediction/truth length mismatch: {len(predicted)} vs {len(truth)}"
        )
    sums = [0.0, 0.0, 0.0]
    sq_sums = [0.0, 0.0, 0.0]
    for pred, true in zip(predicted, truth):
        for k, (pp, tp) in enumerate(zip(pred.points(), true.points())):
            d2 = (pp.x - tp.x) ** 2 + (pp.y - tp.y) ** 2
            sums[k] += math.sqrt(d2)
            sq_sums[k] += d2
    n = len(predicted)
    means = [s / n for s in sums]
    mses = [s / n for s in sq_sums]
    return LandmarkErrorReport(
        left_eye=means[0],
        right_eye=means[1],
        nose=means[2],
        average=sum(means) / 3.0,
        count=n,
        left_eye_mse=mses[0],
        right_eye_mse=mses[1],
        nose_mse=mses[2],
        average_mse=sum(mses) / 3.0,
    )

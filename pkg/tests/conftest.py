import math

import numpy as np
import pytest

from wildface.imaging import ImageBuffer, Point2
from wildface.landmarks import FaceLandmarks


def gray(arr) -> ImageBuffer:
    return ImageBuffer.from_array(np.asarray(arr, dtype=np.uint8))


def noise_image(w: int, h: int, seed: int, channels: int = 1) -> ImageBuffer:
    rng = np.random.default_rng(seed)
    shape = (h, w) if channels == 1 else (h, w, channels)
    return ImageBuffer.from_array(rng.integers(0, 256, shape).astype(np.uint8))


def ramp_image(w: int, h: int) -> ImageBuffer:
    vals = (np.arange(w * h).reshape(h, w) % 256).astype(np.uint8)
    return ImageBuffer.from_array(vals)


def smooth_image(w: int, h: int, seed: int = 0) -> ImageBuffer:
    """Low-frequency content: gradients plus a few soft bumps."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    f = 40 + 120 * xs / w + 60 * ys / h
    for _ in range(4):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        s = rng.uniform(w / 8, w / 3)
        f += rng.uniform(20, 60) * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * s * s))
    return ImageBuffer.from_array(np.clip(f, 0, 255).astype(np.uint8))


def draw_disk(plane: np.ndarray, cx: float, cy: float, radius: float, value: int) -> None:
    h, w = plane.shape
    ys, xs = np.mgrid[0:h, 0:w]
    hit = (xs + 0.5 - cx) ** 2 + (ys + 0.5 - cy) ** 2 <= radius * radius
    plane[hit] = value


def blob_image(w: int, h: int, blobs) -> ImageBuffer:
    """blobs: iterable of (cx, cy, radius, value)."""
    plane = np.zeros((h, w), dtype=np.uint8)
    for cx, cy, r, v in blobs:
        draw_disk(plane, cx, cy, r, v)
    return ImageBuffer.from_array(plane)


def landmarks(lx, ly, rx, ry, nx, ny) -> FaceLandmarks:
    return FaceLandmarks(
        left_eye=Point2(float(lx), float(ly)),
        right_eye=Point2(float(rx), float(ry)),
        nose=Point2(float(nx), float(ny)),
    )


def rotated_landmarks(mid_x, mid_y, d, theta, nose_drop=0.4) -> FaceLandmarks:
    """Eyes at distance d, the inter-eye line tilted by theta, nose below mid."""
    hx = 0.5 * d * math.cos(theta)
    hy = 0.5 * d * math.sin(theta)
    # nose sits nose_drop*d along the perpendicular, on the "down" side
    px, py = -math.sin(theta), math.cos(theta)
    return landmarks(
        mid_x - hx, mid_y - hy,
        mid_x + hx, mid_y + hy,
        mid_x + nose_drop * d * px, mid_y + nose_drop * d * py,
    )


def pipeline_fixture(n_identities: int, per_identity: int, canvas: int = 160):
    """A fully annotated synthetic dataset plus an in-memory image loader.

    Faces sit inside a bbox smaller than 224 px so landmark back-mapping
    never amplifies centroid error; pixel content is shared across records
    (mock providers only read annotations).
    """
    from wildface.imaging import BoundingBox
    from wildface.manifest import DatasetManifest, ManifestRecord

    image = smooth_image(canvas, canvas, seed=7)
    records = []
    for i in range(n_identities):
        identity = f"animal{i:02d}"
        jr = np.random.default_rng(1000 + i)
        for j in range(per_identity):
            dx = float(jr.uniform(-6, 6))
            dy = float(jr.uniform(-6, 6))
            d = float(jr.uniform(36, 52))
            tilt = float(jr.uniform(-0.25, 0.25))
            mid = (canvas / 2 + dx, canvas / 2 - 10 + dy)
            lm = rotated_landmarks(mid[0], mid[1], d, tilt)
            box = BoundingBox(
                x=mid[0] - 1.6 * d, y=mid[1] - 1.4 * d, w=3.2 * d, h=3.2 * d
            )
            records.append(
                ManifestRecord(
                    path=f"{identity}/img{j:03d}.png",
                    identity=identity,
                    source="photo",
                    bbox=box,
                    landmarks=lm,
                )
            )
    manifest = DatasetManifest(records=tuple(records))
    return manifest, lambda ref: image


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

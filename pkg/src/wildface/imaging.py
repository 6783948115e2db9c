"""Image representation and the numeric kernels the pipeline is built on.

All geometry uses one convention: pixel (row i, col j) has its center at
continuous coordinates (j + 0.5, i + 0.5), x rightward, y downward, origin at
the top-left image corner. Every operation here is a pure function; the pixel
array inside an ImageBuffer is frozen so buffers can be shared across threads.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .errors import DataError

# prefer omp outright; numba's tbb probe warns on older system tbb builds
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

try:
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def _round_px(v: float) -> int:
    # round-half-up, stable for the negative offsets produced by crop boxes
    return int(math.floor(v + 0.5))


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """A raster image: uint8 intensities, 1 (gray) or 3 (RGB) channels."""

    width: int
    height: int
    channels: int
    data: np.ndarray = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.channels == other.channels
            and np.array_equal(self.data, other.data)
        )

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise DataError(f"channels must be 1 or 3, got {self.channels}")
        if self.width < 1 or self.height < 1:
            raise DataError(f"invalid image dims {self.width}x{self.height}")
        arr = np.asarray(self.data)
        if arr.size != self.width * self.height * self.channels:
            raise DataError(
                f"pixel count {arr.size} does not match "
                f"{self.width}x{self.height}x{self.channels}"
            )
        if arr.dtype != np.uint8:
            if np.any((arr < 0) | (arr > 255)):
                raise DataError("pixel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = arr.reshape(self.height, self.width, self.channels).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "ImageBuffer":
        """Build from an (H, W) or (H, W, C) array of intensities."""
        a = np.asarray(arr)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3:
            raise DataError(f"expected 2-d or 3-d array, got ndim={a.ndim}")
        h, w, c = a.shape
        return cls(width=w, height=h, channels=c, data=a)

    @property
    def pixels(self) -> np.ndarray:
        """Flat row-major view of the intensities."""
        return self.data.reshape(-1)

    def plane(self) -> np.ndarray:
        """The (H, W) array of a 1-channel image."""
        if self.channels != 1:
            raise DataError("plane() requires a 1-channel image")
        return self.data[:, :, 0]


@dataclass(frozen=True)
class Point2:
    """A point in image coordinates (x rightward, y downward)."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DataError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left corner (x, y), extent (w, h)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise DataError("non-finite bounding box")
        if self.w <= 0 or self.h <= 0:
            raise DataError(f"bounding box needs positive extent, got {self.w}x{self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class SsimParams:
    """Windowed-SSIM configuration.

    Both inputs are grayscale-converted and resized to compare_size square
    before comparison, so heterogeneous sources (video frames vs. photos)
    are measured on common footing.
    """

    window_side: int = 11
    window_kind: str = "gaussian"  # "gaussian" or "uniform"
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0
    compare_size: int = 256

    def __post_init__(self):
        if self.window_side < 3 or self.window_side % 2 == 0:
            raise DataError(f"window_side must be odd and >= 3, got {self.window_side}")
        if self.window_kind not in ("gaussian", "uniform"):
            raise DataError(f"unknown window kind '{self.window_kind}'")
        if self.k1 <= 0 or self.k2 <= 0 or self.dynamic_range <= 0:
            raise DataError("k1, k2 and dynamic_range must be positive")
        if self.compare_size < self.window_side:
            raise DataError("compare_size smaller than the SSIM window")

    def window(self) -> np.ndarray:
        """The normalized 2-d window weights (sum to 1)."""
        n = self.window_side
        if self.window_kind == "uniform":
            return np.full((n, n), 1.0 / (n * n))
        half = n // 2
        offs = np.arange(-half, half + 1, dtype=np.float64)
        g = np.exp(-(offs**2) / (2.0 * self.sigma**2))
        k2d = np.outer(g, g)
        return k2d / k2d.sum()


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Collapse RGB to gray with the fixed 0.299/0.587/0.114 weights."""
    if img.channels == 1:
        return img
    f = img.data.astype(np.float64)
    gray = GRAY_WEIGHTS[0] * f[:, :, 0] + GRAY_WEIGHTS[1] * f[:, :, 1] + GRAY_WEIGHTS[2] * f[:, :, 2]
    gray = np.floor(gray + 0.5).astype(np.uint8)
    return ImageBuffer.from_array(gray)


def _rotate_region_numpy(plane: np.ndarray, cx, cy, ca, sa, x0, y0, out_w, out_h) -> np.ndarray:
    h, w = plane.shape
    ys, xs = np.mgrid[y0 : y0 + out_h, x0 : x0 + out_w]
    inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    qx = xs + 0.5 - cx
    qy = ys + 0.5 - cy
    sx = cx + ca * qx - sa * qy
    sy = cy + sa * qx + ca * qy

    u = sx - 0.5
    v = sy - 0.5
    j0 = np.floor(u).astype(np.int64)
    i0 = np.floor(v).astype(np.int64)
    fx = u - j0
    fy = v - i0

    flat = np.ascontiguousarray(plane, dtype=np.float64).ravel()
    vals = np.zeros(u.shape, dtype=np.float64)
    for di in (0, 1):
        ii = i0 + di
        oky = (ii >= 0) & (ii < h)
        iic = np.clip(ii, 0, h - 1) * w
        wy = fy if di else 1.0 - fy
        for dj in (0, 1):
            jj = j0 + dj
            ok = oky & (jj >= 0) & (jj < w)
            jjc = np.clip(jj, 0, w - 1)
            wx = fx if dj else 1.0 - fx
            vals += (wy * wx) * (ok * flat.take(iic + jjc))
    vals[~inside] = 0.0
    return np.clip(np.floor(vals + 0.5), 0, 255).astype(np.uint8)


if _HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _rotate_region_jit(plane, cx, cy, ca, sa, x0, y0, out):  # pragma: no cover
        h, w = plane.shape
        oh, ow = out.shape
        for i in prange(oh):
            yq = y0 + i
            for j in range(ow):
                xq = x0 + j
                # crop pixels beyond the rotated canvas stay black
                if xq < 0 or xq >= w or yq < 0 or yq >= h:
                    out[i, j] = 0
                    continue
                qx = xq + 0.5 - cx
                qy = yq + 0.5 - cy
                sx = cx + ca * qx - sa * qy
                sy = cy + sa * qx + ca * qy
                u = sx - 0.5
                v = sy - 0.5
                j0 = int(math.floor(u))
                i0 = int(math.floor(v))
                fx = u - j0
                fy = v - i0
                acc = 0.0
                if 0 <= i0 < h:
                    if 0 <= j0 < w:
                        acc += ((1.0 - fy) * (1.0 - fx)) * plane[i0, j0]
                    if 0 <= j0 + 1 < w:
                        acc += ((1.0 - fy) * fx) * plane[i0, j0 + 1]
                if 0 <= i0 + 1 < h:
                    if 0 <= j0 < w:
                        acc += (fy * (1.0 - fx)) * plane[i0 + 1, j0]
                    if 0 <= j0 + 1 < w:
                        acc += (fy * fx) * plane[i0 + 1, j0 + 1]
                val = math.floor(acc + 0.5)
                if val < 0.0:
                    val = 0.0
                elif val > 255.0:
                    val = 255.0
                out[i, j] = np.uint8(val)


def _rotate_region(img: ImageBuffer, center: Point2, angle: float, x0: int, y0: int, out_w: int, out_h: int) -> ImageBuffer:
    """Resample the rotated image over the output window [x0, x0+out_w) x [y0, ...).

    Bilinear sampling at pixel centers with black fill outside the source;
    window pixels beyond the rotated canvas are black (crop semantics).
    """
    ca, sa = math.cos(angle), math.sin(angle)
    out = np.empty((out_h, out_w, img.channels), dtype=np.uint8)
    for ch in range(img.channels):
        if _HAVE_NUMBA:
            plane_out = np.empty((out_h, out_w), dtype=np.uint8)
            _rotate_region_jit(
                np.ascontiguousarray(img.data[:, :, ch]),
                center.x, center.y, ca, sa, x0, y0, plane_out,
            )
            out[:, :, ch] = plane_out
        else:
            out[:, :, ch] = _rotate_region_numpy(
                img.data[:, :, ch], center.x, center.y, ca, sa, x0, y0, out_w, out_h
            )
    return ImageBuffer(width=out_w, height=out_h, channels=img.channels, data=out)


def rotate_about(img: ImageBuffer, center: Point2, angle: float) -> ImageBuffer:
    """Rotate an image about a point; output keeps the input dimensions.

    An output pixel at q samples the source at
    c + R(angle) (q - c), R = [[cos, -sin], [sin, cos]], with bilinear
    interpolation and black fill outside the source. A source feature at
    (cx + r, cy) therefore lands at (cx, cy - r) for angle pi/2.
    """
    if not math.isfinite(angle):
        raise DataError("rotation angle must be finite")
    if angle == 0.0:
        return img
    return _rotate_region(img, center, angle, 0, 0, img.width, img.height)


def rotate_crop(img: ImageBuffer, center: Point2, angle: float, box: BoundingBox) -> ImageBuffer:
    """rotate_about followed by crop, fused: bit-identical but only computes
    the pixels the crop keeps.

    The crop frame is the rotated image's frame; crop pixels that fall outside
    the rotated canvas stay black exactly as in the two-step path.
    """
    if not math.isfinite(angle):
        raise DataError("rotation angle must be finite")
    out_w = _round_px(box.w)
    out_h = _round_px(box.h)
    if out_w < 1 or out_h < 1:
        raise DataError(f"crop box rounds to empty output: {box.w}x{box.h}")
    return _rotate_region(img, center, angle, _round_px(box.x), _round_px(box.y), out_w, out_h)


def crop(img: ImageBuffer, box: BoundingBox) -> ImageBuffer:
    """Cut out a box; regions outside the image pad with black.

    The output geometry is always exactly the (rounded) requested box, so
    downstream ratio arithmetic never shifts when a face sits near a border.
    """
    out_w = _round_px(box.w)
    out_h = _round_px(box.h)
    if out_w < 1 or out_h < 1:
        raise DataError(f"crop box rounds to empty output: {box.w}x{box.h}")
    x0 = _round_px(box.x)
    y0 = _round_px(box.y)
    out = np.zeros((out_h, out_w, img.channels), dtype=np.uint8)
    src_x0 = max(x0, 0)
    src_y0 = max(y0, 0)
    src_x1 = min(x0 + out_w, img.width)
    src_y1 = min(y0 + out_h, img.height)
    if src_x0 < src_x1 and src_y0 < src_y1:
        out[src_y0 - y0 : src_y1 - y0, src_x0 - x0 : src_x1 - x0] = img.data[
            src_y0:src_y1, src_x0:src_x1
        ]
    return ImageBuffer(width=out_w, height=out_h, channels=img.channels, data=out)


def resize(img: ImageBuffer, out_w: int, out_h: int) -> ImageBuffer:
    """Bilinear resize; aspect ratio is the caller's responsibility.

    Samples at half-pixel centers with edge clamping, so constant images stay
    constant and a same-size resize is the identity.
    """
    if out_w < 1 or out_h < 1:
        raise DataError(f"resize target must be >= 1, got {out_w}x{out_h}")
    if out_w == img.width and out_h == img.height:
        return img
    sx = img.width / out_w
    sy = img.height / out_h
    u = np.clip((np.arange(out_w) + 0.5) * sx - 0.5, 0.0, img.width - 1.0)
    v = np.clip((np.arange(out_h) + 0.5) * sy - 0.5, 0.0, img.height - 1.0)
    j0 = np.floor(u).astype(np.int64)
    i0 = np.floor(v).astype(np.int64)
    j1 = np.minimum(j0 + 1, img.width - 1)
    i1 = np.minimum(i0 + 1, img.height - 1)
    fx = u - j0
    fy = v - i0

    out = np.empty((out_h, out_w, img.channels), dtype=np.uint8)
    for ch in range(img.channels):
        plane = img.data[:, :, ch].astype(np.float64)
        top = plane[np.ix_(i0, j0)] * (1 - fx) + plane[np.ix_(i0, j1)] * fx
        bot = plane[np.ix_(i1, j0)] * (1 - fx) + plane[np.ix_(i1, j1)] * fx
        vals = top * (1 - fy)[:, None] + bot * fy[:, None]
        out[:, :, ch] = np.clip(np.floor(vals + 0.5), 0, 255).astype(np.uint8)
    return ImageBuffer(width=out_w, height=out_h, channels=img.channels, data=out)


def _windowed_moments(plane: np.ndarray, kernel: np.ndarray):
    mu = convolve2d(plane, kernel, mode="valid")
    mu_sq = convolve2d(plane * plane, kernel, mode="valid")
    return mu, mu_sq - mu * mu


def ssim(a: ImageBuffer, b: ImageBuffer, params: SsimParams | None = None) -> float:
    """Mean structural similarity between two images, in [-1, 1].

    Local statistics are taken over every fully-interior window position and
    the local map is averaged. Exactly symmetric in (a, b); self-similarity
    is 1 because numerator and denominator become the same expression.
    """
    p = params or SsimParams()
    xa = _ssim_plane(a, p)
    xb = _ssim_plane(b, p)
    kernel = p.window()
    c1 = (p.k1 * p.dynamic_range) ** 2
    c2 = (p.k2 * p.dynamic_range) ** 2

    mu_a, var_a = _windowed_moments(xa, kernel)
    mu_b, var_b = _windowed_moments(xb, kernel)
    cov = convolve2d(xa * xb, kernel, mode="valid") - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _ssim_plane(img: ImageBuffer, p: SsimParams) -> np.ndarray:
    gray = to_grayscale(img)
    gray = resize(gray, p.compare_size, p.compare_size)
    return gray.plane().astype(np.float64)

"""Raster file adapter at the CLI boundary.

Core modules only ever see ImageBuffer; this is the one place Pillow is
touched. Anything Pillow reads is normalized to 8-bit gray or RGB.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import DataError
from .imaging import ImageBuffer


def read_image(path) -> ImageBuffer:
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image '{path}': {exc}") from exc
    return ImageBuffer.from_array(arr)


def write_image(img: ImageBuffer, path) -> None:
    arr = img.data[:, :, 0] if img.channels == 1 else img.data
    try:
        Image.fromarray(arr).save(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot write image '{path}': {exc}") from exc

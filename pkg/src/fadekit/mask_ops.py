"""Morphology and connected-component extraction on foreground masks.

Masks are 2-D boolean arrays. Pixel ``(x, y)`` covers the continuous square
``[x, x+1) x [y, y+1)``, so a blob's tight box is ``(xmin, ymin, xmax+1, ymax+1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .boxes import BoundingBox

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Blob:
    box: BoundingBox
    area: int
    centroid: tuple[float, float]


def morph_open(mask: np.ndarray, radius: int) -> np.ndarray:
    """Erode then dilate with a (2r+1)-square element.

    Out-of-image pixels are ignored, so shapes touching the border are not
    eroded by the border itself.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    mask = np.asarray(mask, dtype=bool)
    if radius == 0:
        return mask.copy()
    size = 2 * radius + 1
    u8 = mask.view(np.uint8)
    eroded = ndimage.minimum_filter(u8, size=size, mode="nearest")
    opened = ndimage.maximum_filter(eroded, size=size, mode="nearest")
    return opened.astype(bool)


def connected_components(mask: np.ndarray, min_area: int = 1) -> list[Blob]:
    """8-connected blobs with at least ``min_area`` pixels, ordered by (ymin, xmin)."""
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        return []
    flat = labels.ravel()
    idx = np.flatnonzero(flat)
    lab = flat[idx]
    ys, xs = np.divmod(idx, mask.shape[1])
    areas = np.bincount(lab, minlength=n + 1)
    sum_x = np.bincount(lab, weights=xs, minlength=n + 1)
    sum_y = np.bincount(lab, weights=ys, minlength=n + 1)
    blobs = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        area = int(areas[i])
        if sl is None or area < min_area:
            continue
        box = BoundingBox(float(sl[1].start), float(sl[0].start), float(sl[1].stop), float(sl[0].stop))
        centroid = (sum_x[i] / area + 0.5, sum_y[i] / area + 0.5)
        blobs.append(Blob(box, area, centroid))
    blobs.sort(key=lambda b: (b.box.ymin, b.box.xmin))
    return blobs

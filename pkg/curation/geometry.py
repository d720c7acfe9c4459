"""
Region Geometry Module
Mask -> bounding-box degradation and box overlays for ROI tasks
"""

from typing import Tuple

import cv2
import numpy as np

from shared.constants import Config
from shared.datamodel import BBox, ImageSample, check_bbox_in_bounds


def mask_to_bbox(mask: np.ndarray) -> BBox:
    """
    Tightest axis-aligned box covering all 1-pixels.

    Args:
        mask: Binary 2D array

    Returns:
        (row_min, col_min, row_max, col_max), inclusive
    """
    rows, cols = np.nonzero(np.asarray(mask))
    if rows.size == 0:
        raise ValueError("empty mask: no foreground pixel to box")
    return int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())


def fill_bbox(bbox: BBox, shape: Tuple[int, int]) -> np.ndarray:
    """Binary mask with the (inclusive) box filled"""
    check_bbox_in_bounds(bbox, shape)
    row_min, col_min, row_max, col_max = bbox
    mask = np.zeros(shape, dtype=np.uint8)
    mask[row_min:row_max + 1, col_min:col_max + 1] = 1
    return mask


def overlay_bbox(
    image: ImageSample,
    bbox: BBox,
    thickness: int = Config.BOX_THICKNESS,
    value: float = 1.0
) -> ImageSample:
    """
    Paint the inner border band of a box onto the image.

    The band is `thickness` pixels wide, inside the box and clipped at the box
    edges; pixels strictly inside the band and outside the box are unchanged.

    Args:
        image: Normalized image
        bbox: (row_min, col_min, row_max, col_max), inclusive
        thickness: Band width in pixels
        value: Intensity written on the band (maximum of the normalized range)

    Returns:
        New ImageSample with the box drawn
    """
    check_bbox_in_bounds(bbox, image.shape)
    if thickness < 1:
        raise ValueError(f"thickness must be >= 1, got {thickness}")

    row_min, col_min, row_max, col_max = bbox
    band = thickness - 1
    canvas = image.pixels.copy()

    # cv2 points are (x=col, y=row); filled rectangles include both corners
    strips = [
        ((col_min, row_min), (col_max, min(row_min + band, row_max))),  # top
        ((col_min, max(row_max - band, row_min)), (col_max, row_max)),  # bottom
        ((col_min, row_min), (min(col_min + band, col_max), row_max)),  # left
        ((max(col_max - band, col_min), row_min), (col_max, row_max)),  # right
    ]
    for top_left, bottom_right in strips:
        cv2.rectangle(canvas, top_left, bottom_right, color=float(value), thickness=-1)

    return image.with_pixels(canvas)

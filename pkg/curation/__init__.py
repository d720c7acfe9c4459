"""
Curation Module for GroundKit
Preprocessing (CT windowing, MRI z-score, axial slicing, resizing) and VQA formatting
"""

from .preprocess import CtWindow, Volume3D, window_ct, zscore_mri, slice_axial, resize_pair
from .geometry import mask_to_bbox, overlay_bbox, fill_bbox
from .vqa_format import to_vqa, class_display_name

__all__ = [
    'CtWindow',
    'Volume3D',
    'window_ct',
    'zscore_mri',
    'slice_axial',
    'resize_pair',
    'mask_to_bbox',
    'overlay_bbox',
    'fill_bbox',
    'to_vqa',
    'class_display_name',
]

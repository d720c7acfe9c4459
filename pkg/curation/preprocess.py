"""
Volume Preprocessing Module
CT window adjustment, MRI z-score normalization, axial slicing and resizing
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import cv2
import numpy as np

from shared.constants import BodyRegion, CT_WINDOWS, Config, Modality
from shared.datamodel import ImageSample, is_binary


# ==================== TYPES ====================

@dataclass(frozen=True)
class CtWindow:
    """
    HU clipping window.

    Chest and Abdomen windows are fixed; body_region=None means a user-supplied
    window for any other region.
    """
    low: float
    high: float
    body_region: Optional[BodyRegion] = None

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"window low must be < high, got ({self.low}, {self.high})")
        if self.body_region is not None:
            region = BodyRegion(self.body_region)
            expected = CT_WINDOWS[region]
            if (self.low, self.high) != expected:
                raise ValueError(f"{region.value} window must be {expected}, got ({self.low}, {self.high})")
            object.__setattr__(self, "body_region", region)

    @classmethod
    def for_region(cls, region: BodyRegion) -> "CtWindow":
        low, high = CT_WINDOWS[BodyRegion(region)]
        return cls(low=low, high=high, body_region=BodyRegion(region))


@dataclass(frozen=True)
class Volume3D:
    """D x H x W volume, axial axis first, with optional same-shape binary masks"""
    voxels: np.ndarray
    modality: Modality
    masks: Optional[np.ndarray] = None
    volume_id: str = "volume"

    def __post_init__(self):
        voxels = np.asarray(self.voxels, dtype=np.float32)
        if voxels.ndim != 3 or min(voxels.shape) < 1:
            raise ValueError(f"volume must be a non-empty 3D array, got shape {voxels.shape}")
        modality = Modality(self.modality)
        if modality not in (Modality.CT, Modality.MRI):
            raise ValueError(f"wrong modality: volumes are CT or MRI, got {modality.value}")
        if self.masks is not None:
            masks = np.asarray(self.masks, dtype=np.uint8)
            if masks.shape != voxels.shape:
                raise ValueError(f"shape mismatch: masks {masks.shape} vs voxels {voxels.shape}")
            if not is_binary(masks):
                raise ValueError("volume masks must be binary")
            object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "voxels", voxels)
        object.__setattr__(self, "modality", modality)

    @property
    def depth(self) -> int:
        return self.voxels.shape[0]


# ==================== NORMALIZATION ====================

def window_ct(volume: Volume3D, window: CtWindow) -> Volume3D:
    """
    Clamp HU values to the window, then rescale linearly to [0, 1].

    Args:
        volume: CT volume in HU
        window: Clipping window

    Returns:
        Windowed volume; shape and masks unchanged
    """
    if volume.modality != Modality.CT:
        raise ValueError(f"wrong modality: window_ct needs CT, got {volume.modality.value}")
    clamped = np.clip(volume.voxels.astype(np.float64), window.low, window.high)
    scaled = (clamped - window.low) / (window.high - window.low)
    return replace(volume, voxels=scaled.astype(np.float32))


def zscore_mri(volume: Volume3D, eps: float = Config.ZSCORE_EPS) -> Volume3D:
    """Standardize over all voxels: (v - mean) / max(std, eps)"""
    if volume.modality != Modality.MRI:
        raise ValueError(f"wrong modality: zscore_mri needs MRI, got {volume.modality.value}")
    voxels = volume.voxels.astype(np.float64)
    mean = voxels.mean()
    std = max(float(voxels.std()), eps)
    return replace(volume, voxels=((voxels - mean) / std).astype(np.float32))


def normalize_volume(volume: Volume3D, window: Optional[CtWindow] = None) -> Volume3D:
    """Window CT (window required) or z-score MRI"""
    if volume.modality == Modality.CT:
        if window is None:
            raise ValueError("CT volumes need a window (chest, abdomen or user-supplied)")
        return window_ct(volume, window)
    return zscore_mri(volume)


# ==================== SLICING & RESIZING ====================

def slice_axial(volume: Volume3D) -> List[Tuple[ImageSample, Optional[np.ndarray]]]:
    """
    Cut a volume into axial slices.

    Returns:
        D pairs of (ImageSample, mask slice or None), in ascending slice order
    """
    pairs = []
    for index in range(volume.depth):
        image = ImageSample(
            pixels=volume.voxels[index],
            modality=volume.modality,
            volume_id=volume.volume_id,
            slice_index=index,
        )
        mask = None if volume.masks is None else volume.masks[index].copy()
        pairs.append((image, mask))
    return pairs


def stack_slices(pairs: List[Tuple[ImageSample, Optional[np.ndarray]]]) -> np.ndarray:
    """Reassemble slice pixels into a D x H x W array"""
    ordered = sorted(pairs, key=lambda p: p[0].slice_index)
    return np.stack([image.pixels for image, _ in ordered], axis=0)


def resize_pair(
    image: ImageSample,
    mask: Optional[np.ndarray],
    size: Tuple[int, int]
) -> Tuple[ImageSample, Optional[np.ndarray]]:
    """
    Resize image (bilinear) and mask (nearest-neighbor, stays binary).

    Args:
        image: Image to resize
        mask: Optional binary mask of the same shape
        size: Target (H', W')

    Returns:
        (resized image, resized mask or None)
    """
    height, width = int(size[0]), int(size[1])
    if height < 1 or width < 1:
        raise ValueError(f"target size must be positive, got {size}")

    if image.shape == (height, width):
        pixels = image.pixels.copy()
    else:
        pixels = cv2.resize(image.pixels, (width, height), interpolation=cv2.INTER_LINEAR)

    resized_mask = None
    if mask is not None:
        resized_mask = cv2.resize(
            np.asarray(mask, dtype=np.uint8), (width, height), interpolation=cv2.INTER_NEAREST
        )
    return image.with_pixels(pixels), resized_mask


def parse_size(text: str) -> Tuple[int, int]:
    """Parse '64x64' into (64, 64)"""
    try:
        height, width = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"size must look like HxW, got {text!r}")
    return height, width

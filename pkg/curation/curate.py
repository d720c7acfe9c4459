"""
Directory Curation Driver
Normalizes, slices, resizes and VQA-formats raw volumes / 2D images into a manifest

Input layout:
    <name>.gkv + optional <name>_mask.gkv   (CT / MRI volumes)
    <name>.png + optional <name>_mask.png   (2D-native modalities)
"""

import glob
import os
from typing import List, Optional, Tuple

import numpy as np

from shared.constants import Config, Modality, NO_FINDINGS, TaskKind, VOLUMETRIC_MODALITIES
from shared.datamodel import DatasetManifest, ImageSample, RegionAnnotation, VqaSample, split_dataset
from shared.logging_config import get_data_logger
from curation.geometry import mask_to_bbox
from curation.preprocess import CtWindow, Volume3D, normalize_volume, resize_pair, slice_axial
from curation.volume_io import read_gkv, read_image_2d, split_stem
from curation.vqa_format import to_vqa

logger = get_data_logger()

MASK_SUFFIX = "_mask"


def annotate_slice(
    image: ImageSample,
    mask: Optional[np.ndarray],
    task: TaskKind,
    label: str,
    sample_id: str,
    variant: int = 0
) -> Optional[VqaSample]:
    """
    Build the sample for one slice, or None when the slice carries nothing for the task.

    Empty masks become "No findings" for disease recognition and are skipped otherwise.
    """
    task = TaskKind(task)
    empty = mask is None or not np.any(mask)

    if task == TaskKind.DISEASE_RECOGNITION:
        if empty:
            zeros = np.zeros(image.shape, dtype=np.uint8)
            annotation = RegionAnnotation.from_mask(zeros, NO_FINDINGS)
        else:
            annotation = RegionAnnotation.from_mask(mask, label)
    elif empty:
        return None
    elif task in (TaskKind.SEGMENTATION, TaskKind.GROUNDED_REPORT):
        annotation = RegionAnnotation.from_mask(mask, label)
    else:
        annotation = RegionAnnotation.from_bbox(mask_to_bbox(mask), label)

    return to_vqa(image, annotation, task, variant=variant, sample_id=sample_id)


def _volume_files(input_dir: str, ext: str) -> List[Tuple[str, Optional[str]]]:
    pairs = []
    for path in sorted(glob.glob(os.path.join(input_dir, f"*{ext}"))):
        stem, _ = split_stem(path)
        if stem.endswith(MASK_SUFFIX):
            continue
        mask_path = os.path.join(input_dir, f"{stem}{MASK_SUFFIX}{ext}")
        pairs.append((path, mask_path if os.path.exists(mask_path) else None))
    return pairs


def curate_directory(
    input_dir: str,
    modality: Modality,
    task: TaskKind,
    size: Tuple[int, int] = Config.IMAGE_SIZE,
    window: Optional[CtWindow] = None,
    label: str = "Abnormality",
    seed: int = Config.SEED
) -> DatasetManifest:
    """
    Curate every volume / image in a directory into one split manifest.

    Args:
        input_dir: Directory with .gkv volumes or .png images (and *_mask siblings)
        modality: Modality of all inputs
        task: Task to format for
        size: Resize target (H, W)
        window: CT window (required for CT)
        label: Class / finding text attached to the masks
        seed: Split seed

    Returns:
        Manifest with the volume-level split applied
    """
    if not os.path.isdir(input_dir):
        raise FileNotFoundError(f"Input directory not found: {input_dir}")
    modality = Modality(modality)
    samples: List[VqaSample] = []

    if modality in VOLUMETRIC_MODALITIES:
        for path, mask_path in _volume_files(input_dir, ".gkv"):
            stem, _ = split_stem(path)
            masks = read_gkv(mask_path) if mask_path else None
            volume = Volume3D(voxels=read_gkv(path), modality=modality, masks=masks, volume_id=stem)
            volume = normalize_volume(volume, window)
            for image, mask in slice_axial(volume):
                image, mask = resize_pair(image, mask, size)
                sample = annotate_slice(image, mask, task, label,
                                        sample_id=f"{stem}_s{image.slice_index:03d}")
                if sample is not None:
                    samples.append(sample)
            logger.info(f"Curated volume {stem}: depth {volume.depth}")
    else:
        for path, mask_path in _volume_files(input_dir, ".png"):
            stem, _ = split_stem(path)
            image = ImageSample(pixels=read_image_2d(path), modality=modality)
            mask = (read_image_2d(mask_path) > 0.5).astype(np.uint8) if mask_path else None
            image, mask = resize_pair(image, mask, size)
            sample = annotate_slice(image, mask, task, label, sample_id=stem)
            if sample is not None:
                samples.append(sample)

    if not samples:
        raise ValueError(f"no usable samples found in {input_dir}")
    logger.info(f"Curated {len(samples)} {task.value} samples from {input_dir}")
    return split_dataset(DatasetManifest(samples=samples, seed=seed), seed)

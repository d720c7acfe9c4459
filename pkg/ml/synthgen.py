"""
Synthetic Grounded Dataset Generator
Procedural "volumes" of geometric organs / lesions with programmatic captions,
formatted into VQA samples for every task kind
"""

import math
import os
import sys
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import cv2
import numpy as np
from joblib import Parallel, delayed

# Add parent directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))
from shared.constants import BodyRegion, Config, Modality, NO_FINDINGS, TaskKind
from shared.datamodel import DatasetManifest, RegionAnnotation, VqaSample, ensure_valid, split_dataset
from shared.logging_config import get_data_logger
from curation.geometry import mask_to_bbox
from curation.preprocess import CtWindow, Volume3D, resize_pair, slice_axial, window_ct
from curation.vqa_format import class_display_name, to_vqa

logger = get_data_logger()

BACKGROUND_LEVEL = 0.1
NOISE_SIGMA = 0.02


# ==================== SHAPE SPECS ====================

class ShapeKind(str, Enum):
    """Primitive shapes standing in for anatomy"""
    ELLIPSE = "Ellipse"
    RECTANGLE = "Rectangle"
    BLOB = "Blob"


@dataclass(frozen=True)
class ShapeSpec:
    """How one class is rendered: shape, intensity, size and per-slice count ranges"""
    kind: ShapeKind
    class_name: str
    intensity: float
    size_range: Tuple[float, float]
    count_range: Tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        min_frac, max_frac = self.size_range
        if not 0 < min_frac <= max_frac <= 1:
            raise ValueError(f"size_range must satisfy 0 < min <= max <= 1, got {self.size_range}")
        lo, hi = self.count_range
        if not 0 <= lo <= hi:
            raise ValueError(f"count_range must satisfy 0 <= min <= max, got {self.count_range}")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity must be in [0, 1], got {self.intensity}")

    @property
    def is_lesion(self) -> bool:
        return self.class_name.startswith("lesion")


ORGAN_A = ShapeSpec(ShapeKind.ELLIPSE, "organ_a", 0.45, (0.45, 0.7), (1, 1))
LESION_A = ShapeSpec(ShapeKind.ELLIPSE, "lesion_a", 0.9, (0.12, 0.22), (0, 1))
LESION_B = ShapeSpec(ShapeKind.RECTANGLE, "lesion_b", 0.2, (0.12, 0.22), (0, 1))

DEFAULT_SPECS: Tuple[ShapeSpec, ...] = (ORGAN_A, LESION_A, LESION_B)
LESION_SPECS: Tuple[ShapeSpec, ...] = (LESION_A, LESION_B)


class SynthVolume(NamedTuple):
    """gen_volume result"""
    volume: Volume3D
    class_masks: Dict[str, np.ndarray]
    slice_labels: List[List[str]]


# ==================== RENDERING ====================

def render_ellipse(shape: Tuple[int, int], center: Tuple[float, float], axes: Tuple[float, float]) -> np.ndarray:
    """Boolean mask of ((r - cr)/a)^2 + ((c - cc)/b)^2 <= 1"""
    rows, cols = np.ogrid[:shape[0], :shape[1]]
    a, b = axes
    return ((rows - center[0]) / a) ** 2 + ((cols - center[1]) / b) ** 2 <= 1.0


def render_rectangle(shape: Tuple[int, int], center: Tuple[float, float], axes: Tuple[float, float]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    r0 = int(round(center[0] - axes[0]))
    r1 = int(round(center[0] + axes[0]))
    c0 = int(round(center[1] - axes[1]))
    c1 = int(round(center[1] + axes[1]))
    mask[max(r0, 0):min(r1, shape[0] - 1) + 1, max(c0, 0):min(c1, shape[1] - 1) + 1] = True
    return mask


def render_blob(
    shape: Tuple[int, int],
    center: Tuple[float, float],
    axes: Tuple[float, float],
    rng: np.random.Generator,
    n_vertices: int = 12
) -> np.ndarray:
    """Star-convex random polygon inside the (a, b) ellipse"""
    angles = np.sort(rng.uniform(0.0, 2 * math.pi, n_vertices))
    radii = rng.uniform(0.6, 1.0, n_vertices)
    rows = center[0] + radii * axes[0] * np.sin(angles)
    cols = center[1] + radii * axes[1] * np.cos(angles)
    points = np.stack([cols, rows], axis=1).round().astype(np.int32)
    canvas = np.zeros(shape, dtype=np.uint8)
    cv2.fillPoly(canvas, [points], 1)
    return canvas.astype(bool)


def _render_shape(spec: ShapeSpec, shape: Tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    height, width = shape
    min_frac, max_frac = spec.size_range
    a = max(rng.uniform(min_frac, max_frac) * height / 2.0, 1.0)
    b = max(rng.uniform(min_frac, max_frac) * width / 2.0, 1.0)
    center = (
        rng.uniform(min(a, height / 2.0), max(height - 1 - a, height / 2.0)),
        rng.uniform(min(b, width / 2.0), max(width - 1 - b, width / 2.0)),
    )
    if spec.kind == ShapeKind.ELLIPSE:
        return render_ellipse(shape, center, (a, b))
    if spec.kind == ShapeKind.RECTANGLE:
        return render_rectangle(shape, center, (a, b))
    return render_blob(shape, center, (a, b), rng)


def gen_volume(
    specs: Sequence[ShapeSpec],
    depth: int,
    size: Tuple[int, int],
    seed: int,
    volume_id: str = "synth_0000",
    window: Optional[CtWindow] = None
) -> SynthVolume:
    """
    Render a synthetic CT volume (in HU) with disjoint per-class masks.

    Shapes are painted in spec order; later shapes overwrite earlier ones and take
    over their mask pixels.

    Args:
        specs: Classes to render, in painting order
        depth: Number of axial slices
        size: Slice size (H, W)
        seed: Random seed; identical seeds give identical volumes
        volume_id: Volume identifier
        window: HU window the [0, 1] intensities are mapped into (abdomen by default)

    Returns:
        SynthVolume(volume, class_masks, slice_labels)
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    window = window or CtWindow.for_region(BodyRegion.ABDOMEN)
    rng = np.random.default_rng(seed)
    height, width = size

    canvas = np.empty((depth, height, width), dtype=np.float64)
    label_map = np.full((depth, height, width), -1, dtype=np.int32)

    for z in range(depth):
        canvas[z] = BACKGROUND_LEVEL + rng.normal(0.0, NOISE_SIGMA, (height, width))
        for class_index, spec in enumerate(specs):
            count = int(rng.integers(spec.count_range[0], spec.count_range[1] + 1))
            for _ in range(count):
                shape_mask = _render_shape(spec, (height, width), rng)
                noise = rng.normal(0.0, NOISE_SIGMA, int(shape_mask.sum()))
                canvas[z][shape_mask] = spec.intensity + noise
                label_map[z][shape_mask] = class_index

    class_masks = {
        spec.class_name: (label_map == i).astype(np.uint8) for i, spec in enumerate(specs)
    }

    slice_labels: List[List[str]] = []
    for z in range(depth):
        present = [spec for spec in specs if class_masks[spec.class_name][z].any()]
        labels = [spec.class_name for spec in present]
        if not any(spec.is_lesion for spec in present):
            labels.append(NO_FINDINGS)
        slice_labels.append(labels)

    hu = window.low + np.clip(canvas, 0.0, 1.0) * (window.high - window.low)
    combined = np.zeros_like(label_map, dtype=np.uint8)
    combined[label_map >= 0] = 1
    volume = Volume3D(voxels=hu, modality=Modality.CT, masks=combined, volume_id=volume_id)
    return SynthVolume(volume=volume, class_masks=class_masks, slice_labels=slice_labels)


# ==================== CAPTIONS ====================

def _intensity_word(intensity: float) -> str:
    if intensity >= 0.66:
        return "high"
    if intensity >= 0.33:
        return "moderate"
    return "low"


_SHAPE_WORDS = {ShapeKind.ELLIPSE: "oval", ShapeKind.RECTANGLE: "rectangular", ShapeKind.BLOB: "irregular"}


def describe_class(spec: ShapeSpec) -> str:
    """One-sentence finding text, e.g. 'Lesion a with high intensity and oval shape.'"""
    return (f"{class_display_name(spec.class_name)} with {_intensity_word(spec.intensity)} "
            f"intensity and {_SHAPE_WORDS[spec.kind]} shape.")


def grounded_report(present: Sequence[ShapeSpec]) -> str:
    """Full-slice report text listing every rendered class"""
    sentences = [describe_class(spec) for spec in present]
    if not any(spec.is_lesion for spec in present):
        sentences.append("No lesion is seen.")
    return " ".join(sentences)


# ==================== TASK DATASETS ====================

def _is_healthy_volume(index: int) -> bool:
    # every fifth volume carries no lesion: ceil(N / 5) >= 20% of volumes
    return index % 5 == 0


def _volume_specs(task: TaskKind, index: int, rng: np.random.Generator,
                  specs: Sequence[ShapeSpec]) -> List[ShapeSpec]:
    if task != TaskKind.DISEASE_RECOGNITION:
        return list(specs)
    organs = [s for s in specs if not s.is_lesion]
    lesions = [s for s in specs if s.is_lesion]
    if _is_healthy_volume(index) or not lesions:
        return organs
    return organs + [lesions[int(rng.integers(len(lesions)))]]


def _volume_samples(
    task: TaskKind,
    index: int,
    seed: int,
    depth: int,
    size: Tuple[int, int],
    specs: Sequence[ShapeSpec],
    window: CtWindow
) -> List[VqaSample]:
    volume_seed = seed + index
    rng = np.random.default_rng(volume_seed)
    volume_id = f"synth_{index:04d}"
    chosen = _volume_specs(task, index, rng, specs)
    synth = gen_volume(chosen, depth, size, volume_seed, volume_id=volume_id, window=window)
    by_name = {spec.class_name: spec for spec in chosen}

    windowed = window_ct(synth.volume, window)
    samples: List[VqaSample] = []
    for image, _ in slice_axial(windowed):
        image, _ = resize_pair(image, None, size)
        z = image.slice_index
        present = [by_name[n] for n in synth.slice_labels[z] if n in by_name]
        prefix = f"{volume_id}_s{z:03d}"

        if task == TaskKind.DISEASE_RECOGNITION:
            lesion = next((s for s in present if s.is_lesion), None)
            if lesion is None:
                annotation = RegionAnnotation.from_mask(np.zeros(image.shape, np.uint8), NO_FINDINGS)
            else:
                annotation = RegionAnnotation.from_mask(
                    synth.class_masks[lesion.class_name][z], class_display_name(lesion.class_name))
            samples.append(to_vqa(image, annotation, task, int(rng.integers(2)), prefix))

        elif task == TaskKind.GROUNDED_REPORT:
            if not present:
                continue
            union = np.zeros(image.shape, dtype=np.uint8)
            for spec in present:
                union |= synth.class_masks[spec.class_name][z]
            annotation = RegionAnnotation.from_mask(union, grounded_report(present))
            samples.append(to_vqa(image, annotation, task, int(rng.integers(2)), prefix))

        else:
            for spec in present:
                mask = synth.class_masks[spec.class_name][z]
                sample_id = f"{prefix}_{spec.class_name}"
                if task == TaskKind.SEGMENTATION:
                    annotation = RegionAnnotation.from_mask(mask, class_display_name(spec.class_name))
                elif task == TaskKind.ROI_CLASSIFICATION:
                    annotation = RegionAnnotation.from_bbox(
                        mask_to_bbox(mask), class_display_name(spec.class_name))
                else:
                    annotation = RegionAnnotation.from_bbox(mask_to_bbox(mask), describe_class(spec))
                samples.append(to_vqa(image, annotation, task, int(rng.integers(2)), sample_id))
    return samples


def gen_task_dataset(
    task: TaskKind,
    n_volumes: int,
    seed: int = Config.SEED,
    depth: int = 4,
    size: Tuple[int, int] = Config.IMAGE_SIZE,
    specs: Sequence[ShapeSpec] = DEFAULT_SPECS,
    n_jobs: int = 1
) -> DatasetManifest:
    """
    Generate a split, validated manifest of synthetic VQA samples for one task.

    Volume i uses seed + i, so volumes can be generated in parallel.
    Disease-recognition datasets keep every fifth volume lesion-free, so at least
    20% of their slices are "No findings".

    Args:
        task: Task kind
        n_volumes: Number of volumes (>= 2)
        seed: Base seed
        depth: Slices per volume
        size: Slice size (H, W)
        specs: Classes to render
        n_jobs: joblib workers

    Returns:
        DatasetManifest with the 80/20 volume-level split applied
    """
    if n_volumes < 2:
        raise ValueError(f"n_volumes must be >= 2, got {n_volumes}")
    task = TaskKind(task)
    window = CtWindow.for_region(BodyRegion.ABDOMEN)

    per_volume = Parallel(n_jobs=n_jobs)(
        delayed(_volume_samples)(task, i, seed, depth, size, specs, window)
        for i in range(n_volumes)
    )
    samples = [s for volume_samples in per_volume for s in volume_samples]
    ensure_valid(samples)

    logger.info(f"Generated {len(samples)} {task.value} samples from {n_volumes} volumes (seed {seed})")
    return split_dataset(DatasetManifest(samples=samples, seed=seed), seed)


def gen_mixed_dataset(
    tasks: Sequence[TaskKind],
    n_volumes: int,
    seed: int = Config.SEED,
    depth: int = 4,
    size: Tuple[int, int] = Config.IMAGE_SIZE,
    n_jobs: int = 1
) -> DatasetManifest:
    """Concatenate per-task datasets; volume ids are prefixed by task so splits stay per task"""
    samples: List[VqaSample] = []
    split = {}
    for offset, task in enumerate(tasks):
        manifest = gen_task_dataset(task, n_volumes, seed + 100_000 * offset, depth, size, n_jobs=n_jobs)
        for sample in manifest.samples:
            prefix = TaskKind(task).value
            image = replace(sample.image, volume_id=f"{prefix}/{sample.image.volume_id}")
            samples.append(replace(sample, image=image, sample_id=f"{prefix}/{sample.sample_id}"))
        split.update({f"{TaskKind(task).value}/{k}": v for k, v in manifest.split.items()})
    return DatasetManifest(samples=samples, split=split, seed=seed)

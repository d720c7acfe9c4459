"""
GroundKit Data Model
Universal triplet / VQA types shared by curation, synthesis, training and evaluation,
plus sample validation and the volume-level train/test split
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from shared.constants import (
    Config,
    MaskKind,
    Modality,
    NO_FINDINGS,
    SEG_TOKEN,
    Split,
    TaskKind,
    task_requires_mask,
)

BBox = Tuple[int, int, int, int]


# ==================== HELPERS ====================

def normalize_answer(text: str) -> str:
    """Lowercase and collapse whitespace"""
    return " ".join(text.split()).lower()


def is_no_findings(text: str) -> bool:
    """Case-insensitive exact match against "No findings" after whitespace normalization"""
    return normalize_answer(text) == normalize_answer(NO_FINDINGS)


def has_seg_token(text: str) -> bool:
    """Exact, case-sensitive literal match of the [SEG] token"""
    return SEG_TOKEN in text


def _frozen_array(values: np.ndarray, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def is_binary(mask: np.ndarray) -> bool:
    """True if every value is 0 or 1"""
    return bool(np.isin(mask, (0, 1)).all())


# ==================== IMAGE ====================

@dataclass(frozen=True)
class ImageSample:
    """A 2D image with its modality tag and optional volume provenance"""
    pixels: np.ndarray
    modality: Modality
    volume_id: Optional[str] = None
    slice_index: Optional[int] = None

    def __post_init__(self):
        pixels = _frozen_array(self.pixels, np.float32)
        if pixels.ndim != 2 or pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError(f"image must be a non-empty 2D array, got shape {pixels.shape}")
        if not np.isfinite(pixels).all():
            raise ValueError("image contains non-finite pixel values")
        if self.slice_index is not None:
            if self.volume_id is None:
                raise ValueError("slice_index requires volume_id")
            if self.slice_index < 0:
                raise ValueError(f"slice_index must be non-negative, got {self.slice_index}")
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "modality", Modality(self.modality))

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.pixels.shape)

    def with_pixels(self, pixels: np.ndarray) -> "ImageSample":
        """Copy with new pixels and the same provenance"""
        return replace(self, pixels=pixels)


# ==================== REGION ANNOTATION ====================

@dataclass(frozen=True)
class RegionAnnotation:
    """A dense binary mask or a bounding box, paired with a class / finding text"""
    kind: MaskKind
    label: str
    mask: Optional[np.ndarray] = None
    bbox: Optional[BBox] = None

    def __post_init__(self):
        kind = MaskKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind == MaskKind.MASK:
            if self.mask is None or self.bbox is not None:
                raise ValueError("Mask annotation needs a mask and no bbox")
            mask = _frozen_array(self.mask, np.uint8)
            if mask.ndim != 2 or not is_binary(mask):
                raise ValueError("annotation mask must be a binary 2D array")
            object.__setattr__(self, "mask", mask)
        else:
            if self.bbox is None or self.mask is not None:
                raise ValueError("BBox annotation needs a bbox and no mask")
            bbox = tuple(int(v) for v in self.bbox)
            if len(bbox) != 4:
                raise ValueError(f"bbox must have 4 entries, got {bbox}")
            row_min, col_min, row_max, col_max = bbox
            if not (0 <= row_min <= row_max and 0 <= col_min <= col_max):
                raise ValueError(f"bbox out of bounds: {bbox}")
            object.__setattr__(self, "bbox", bbox)

    @classmethod
    def from_mask(cls, mask: np.ndarray, label: str) -> "RegionAnnotation":
        return cls(kind=MaskKind.MASK, label=label, mask=mask)

    @classmethod
    def from_bbox(cls, bbox: BBox, label: str) -> "RegionAnnotation":
        return cls(kind=MaskKind.BBOX, label=label, bbox=bbox)


def check_bbox_in_bounds(bbox: BBox, shape: Tuple[int, int]) -> None:
    """Raise if bbox does not satisfy 0 <= min <= max < size on both axes"""
    row_min, col_min, row_max, col_max = bbox
    height, width = shape
    if not (0 <= row_min <= row_max < height and 0 <= col_min <= col_max < width):
        raise ValueError(f"bbox out of bounds: {tuple(bbox)} for image {height}x{width}")


# ==================== VQA SAMPLE ====================

@dataclass(frozen=True)
class VqaSample:
    """
    The universal training unit: image, question, answer, optional target mask, task.

    Constructible in violating states on purpose; use validate_sample to check it.
    """
    image: ImageSample
    question: str
    answer: str
    task: TaskKind
    target_mask: Optional[np.ndarray] = None
    sample_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        if self.target_mask is not None:
            object.__setattr__(self, "target_mask", _frozen_array(self.target_mask, np.uint8))

    @property
    def volume_key(self) -> str:
        """Volume id, or the sample id for 2D-native data"""
        return self.image.volume_id if self.image.volume_id is not None else self.sample_id


def validate_sample(sample: VqaSample) -> List[str]:
    """
    Check every VqaSample invariant.

    Args:
        sample: Sample to check

    Returns:
        Empty list if valid, otherwise one message per violated invariant
    """
    violations: List[str] = []

    if not sample.question.strip():
        violations.append("question is empty")
    if not sample.answer.strip():
        violations.append("answer is empty")

    has_mask = sample.target_mask is not None
    has_seg = has_seg_token(sample.answer)
    no_findings = is_no_findings(sample.answer)

    if has_seg and not has_mask:
        violations.append("[SEG] token in answer without a target mask")
    if has_mask and not has_seg and not no_findings:
        violations.append("target mask present but answer has no [SEG] token")
    if no_findings and has_mask and np.any(sample.target_mask):
        violations.append("'No findings' answer with a non-empty target mask")

    if task_requires_mask(sample.task) and not has_mask:
        violations.append(f"target mask required for {sample.task.value}")
    if not task_requires_mask(sample.task) and has_mask:
        violations.append(f"target mask forbidden for {sample.task.value}")

    if has_mask:
        if sample.target_mask.shape != sample.image.shape:
            violations.append(
                f"target mask shape {sample.target_mask.shape} != image shape {sample.image.shape}"
            )
        if not is_binary(sample.target_mask):
            violations.append("target mask is not binary")

    return violations


# ==================== MODEL OUTPUT ====================

@dataclass(frozen=True)
class GroundedOutput:
    """Generated answer plus zero-or-one binary mask"""
    answer: str
    mask: Optional[np.ndarray] = None
    mask_logits: Optional[np.ndarray] = None

    @property
    def has_mask(self) -> bool:
        return self.mask is not None


# ==================== MANIFEST & SPLIT ====================

@dataclass(frozen=True)
class DatasetManifest:
    """Ordered samples plus the volume-level split"""
    samples: Tuple[VqaSample, ...]
    split: Dict[str, Split] = field(default_factory=dict)
    seed: int = Config.SEED

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "split", {k: Split(v) for k, v in self.split.items()})

    def volume_keys(self) -> List[str]:
        """Distinct volume keys, sorted"""
        return sorted({s.volume_key for s in self.samples})

    def samples_in(self, split: Split) -> List[VqaSample]:
        split = Split(split)
        return [s for s in self.samples if self.split.get(s.volume_key) == split]

    def train_samples(self) -> List[VqaSample]:
        return self.samples_in(Split.TRAIN)

    def test_samples(self) -> List[VqaSample]:
        return self.samples_in(Split.TEST)

    def by_id(self) -> Dict[str, VqaSample]:
        return {s.sample_id: s for s in self.samples}


def count_test_volumes(n_volumes: int, fraction: float = Config.TEST_FRACTION) -> int:
    """floor(fraction * N), at least 1"""
    return max(1, int(math.floor(fraction * n_volumes)))


def split_dataset(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """
    Assign whole volumes to train/test (80/20).

    Volumes are sorted by id before the seeded shuffle, so the split does not depend
    on sample order.

    Args:
        manifest: Manifest to split (any existing split is replaced)
        seed: Shuffle seed

    Returns:
        New manifest with the split filled in and seed recorded
    """
    volumes = manifest.volume_keys()
    if len(volumes) < 2:
        raise ValueError(f"unsplittable: need at least 2 volumes, got {len(volumes)}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(volumes))
    n_test = count_test_volumes(len(volumes))
    test_ids = {volumes[i] for i in order[:n_test]}

    split = {v: (Split.TEST if v in test_ids else Split.TRAIN) for v in volumes}
    return DatasetManifest(samples=manifest.samples, split=split, seed=seed)


def validate_manifest(manifest: DatasetManifest) -> Dict[str, List[str]]:
    """Map sample id -> violations, for samples that have any"""
    problems = {}
    for sample in manifest.samples:
        violations = validate_sample(sample)
        if violations:
            problems[sample.sample_id] = violations
    return problems


def ensure_valid(samples: Sequence[VqaSample]) -> None:
    """Raise ValueError listing the first invalid sample"""
    for sample in samples:
        violations = validate_sample(sample)
        if violations:
            raise ValueError(f"invalid sample {sample.sample_id!r}: {'; '.join(violations)}")

"""
GroundKit Manifest I/O
JSON manifest persistence, run-length encoded masks and 0/255 mask PNGs
"""

import json
import os
from typing import Dict, List, Optional, Union

import cv2
import numpy as np

from shared.constants import Modality, Split, TaskKind
from shared.datamodel import DatasetManifest, ImageSample, VqaSample
from shared.logging_config import get_data_logger

logger = get_data_logger()


# ==================== RUN-LENGTH ENCODING ====================

def rle_encode(mask: np.ndarray) -> Dict[str, List[int]]:
    """
    Encode a binary mask as alternating zero-run / one-run counts (row-major).

    The first count is always a zero-run (possibly 0).

    Args:
        mask: Binary 2D array

    Returns:
        {"rle": [...], "shape": [H, W]}
    """
    flat = np.asarray(mask, dtype=np.uint8).ravel()
    counts: List[int] = []
    current = 0
    run = 0
    for value in flat:
        if value == current:
            run += 1
        else:
            counts.append(run)
            current = int(value)
            run = 1
    counts.append(run)
    return {"rle": [int(c) for c in counts], "shape": [int(s) for s in np.shape(mask)]}


def rle_decode(encoded: Dict[str, List[int]]) -> np.ndarray:
    """Inverse of rle_encode"""
    height, width = encoded["shape"]
    counts = encoded["rle"]
    if sum(counts) != height * width:
        raise ValueError(f"rle counts sum to {sum(counts)}, expected {height * width}")
    values = np.zeros(len(counts), dtype=np.uint8)
    values[1::2] = 1
    return np.repeat(values, counts).reshape(height, width)


# ==================== MASK PNG ====================

def write_mask_png(mask: np.ndarray, path: str) -> str:
    """Write a binary mask as a single-channel 0/255 PNG"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    if not cv2.imwrite(path, (np.asarray(mask, dtype=np.uint8) * 255)):
        raise RuntimeError(f"Failed to write mask: {path}")
    return path


def read_mask_png(path: str) -> np.ndarray:
    """Read a 0/255 PNG back into a 0/1 mask"""
    image = cv2.imread(path, cv2.IMREAD_GRAYSCALE)
    if image is None:
        raise FileNotFoundError(f"Mask not readable: {path}")
    return (image > 127).astype(np.uint8)


# ==================== MANIFEST ====================

def _mask_to_json(mask: Optional[np.ndarray]):
    return None if mask is None else rle_encode(mask)


def _mask_from_json(value: Union[None, str, dict], base_dir: str) -> Optional[np.ndarray]:
    if value is None:
        return None
    if isinstance(value, str):
        return read_mask_png(os.path.join(base_dir, value))
    return rle_decode(value)


def save_manifest(manifest: DatasetManifest, path: str, image_dir: str = "images") -> str:
    """
    Persist a manifest as JSON; images go to <manifest dir>/<image_dir>/<id>.npy.

    Args:
        manifest: Manifest to write
        path: Output JSON path
        image_dir: Image directory, relative to the manifest

    Returns:
        Path of the written manifest
    """
    base_dir = os.path.dirname(os.path.abspath(path))
    os.makedirs(os.path.join(base_dir, image_dir), exist_ok=True)

    records = []
    for sample in manifest.samples:
        image_rel = f"{image_dir}/{sample.sample_id}.npy"
        image_path = os.path.join(base_dir, image_rel)
        # mixed-task ids carry a "<task>/" prefix
        os.makedirs(os.path.dirname(image_path), exist_ok=True)
        np.save(image_path, sample.image.pixels)
        records.append({
            "id": sample.sample_id,
            "task": sample.task.value,
            "question": sample.question,
            "answer": sample.answer,
            "image": image_rel,
            "modality": sample.image.modality.value,
            "volume_id": sample.image.volume_id,
            "slice_index": sample.image.slice_index,
            "target_mask": _mask_to_json(sample.target_mask),
        })

    document = {
        "seed": int(manifest.seed),
        "samples": records,
        "split": {k: v.value for k, v in sorted(manifest.split.items())},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=1)

    logger.info(f"Manifest saved: {path} ({len(records)} samples)")
    return path


def load_manifest(path: str) -> DatasetManifest:
    """Load a manifest written by save_manifest (PNG mask paths are also accepted)"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Manifest not found: {path}")
    base_dir = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as f:
        document = json.load(f)

    samples = []
    for record in document["samples"]:
        pixels = np.load(os.path.join(base_dir, record["image"]))
        image = ImageSample(
            pixels=pixels,
            modality=Modality(record["modality"]),
            volume_id=record.get("volume_id"),
            slice_index=record.get("slice_index"),
        )
        samples.append(VqaSample(
            image=image,
            question=record["question"],
            answer=record["answer"],
            task=TaskKind(record["task"]),
            target_mask=_mask_from_json(record.get("target_mask"), base_dir),
            sample_id=record["id"],
        ))

    split = {k: Split(v) for k, v in document.get("split", {}).items()}
    return DatasetManifest(samples=samples, split=split, seed=int(document.get("seed", 0)))

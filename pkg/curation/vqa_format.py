"""
VQA Formatting Module
Turns (image, region annotation, task) triplets into uniform question/answer samples
"""

import json
import os
from functools import lru_cache
from typing import Dict, List

import numpy as np

from shared.constants import MaskKind, Modality, NO_FINDINGS, TaskKind, task_requires_mask
from shared.datamodel import (
    ImageSample,
    RegionAnnotation,
    VqaSample,
    check_bbox_in_bounds,
    is_no_findings,
)
from curation.geometry import overlay_bbox

TEMPLATE_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "templates.json")

MODALITY_NAMES: Dict[Modality, str] = {
    Modality.CT: "CT",
    Modality.MRI: "MRI",
    Modality.XRAY: "X-ray",
    Modality.PATHOLOGY: "pathology",
    Modality.ULTRASOUND: "ultrasound",
    Modality.FUNDUS: "fundus",
    Modality.DERMOSCOPY: "dermoscopy",
    Modality.ENDOSCOPE: "endoscopy",
    Modality.OCT: "OCT",
    Modality.PET: "PET",
}


@lru_cache(maxsize=None)
def load_templates(path: str = TEMPLATE_PATH) -> dict:
    """Load the versioned template file"""
    with open(path, "r", encoding="utf-8") as f:
        templates = json.load(f)
    if "version" not in templates or "tasks" not in templates:
        raise ValueError(f"template file {path} lacks version/tasks")
    return templates


def task_templates(task: TaskKind) -> List[dict]:
    return load_templates()["tasks"][TaskKind(task).value]


def class_display_name(class_name: str) -> str:
    """'lesion_a' -> 'Lesion a'"""
    text = class_name.replace("_", " ").strip()
    return text[:1].upper() + text[1:]


def to_vqa(
    image: ImageSample,
    annotation: RegionAnnotation,
    task: TaskKind,
    variant: int = 0,
    sample_id: str = ""
) -> VqaSample:
    """
    Fill the task's question/answer template for one annotated image.

    Args:
        image: Normalized image
        annotation: Mask for Segmentation/DiseaseRecognition/GroundedReport,
                    bbox for RoiClassification/RegionReport
        task: Task kind
        variant: Template variant index
        sample_id: Identifier carried into the sample

    Returns:
        VqaSample; "No findings" labels give answer "No findings" and an all-zero mask
    """
    task = TaskKind(task)
    needs_mask = task_requires_mask(task)
    if needs_mask != (annotation.kind == MaskKind.MASK):
        raise ValueError(
            f"incompatible annotation: {task.value} needs a "
            f"{'mask' if needs_mask else 'bbox'}, got {annotation.kind.value}"
        )

    templates = task_templates(task)
    template = templates[variant % len(templates)]
    fields = {
        "label": annotation.label,
        "label_lower": annotation.label.lower(),
        "modality": MODALITY_NAMES[image.modality],
    }
    question = template["question"].format(**fields)

    if needs_mask:
        if annotation.mask.shape != image.shape:
            raise ValueError(
                f"shape mismatch: mask {annotation.mask.shape} vs image {image.shape}"
            )
        if task == TaskKind.DISEASE_RECOGNITION and is_no_findings(annotation.label):
            answer = NO_FINDINGS
            target_mask = np.zeros(image.shape, dtype=np.uint8)
        else:
            answer = template["answer"].format(**fields)
            target_mask = annotation.mask
        return VqaSample(image=image, question=question, answer=answer, task=task,
                         target_mask=target_mask, sample_id=sample_id)

    check_bbox_in_bounds(annotation.bbox, image.shape)
    boxed = overlay_bbox(image, annotation.bbox)
    answer = template["answer"].format(**fields)
    return VqaSample(image=boxed, question=question, answer=answer, task=task,
                     target_mask=None, sample_id=sample_id)

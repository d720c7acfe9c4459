"""
GroundKit - Shared Test Fixtures
Temporary output directories and the 16x16 toy model / dataset
"""

import os
import shutil
import sys
import tempfile

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from shared.constants import Modality, TaskKind
from shared.datamodel import ImageSample, VqaSample


@pytest.fixture
def output_dir():
    """Temporary directory removed after the test"""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    shutil.rmtree(temp_dir, ignore_errors=True)


@pytest.fixture
def toy():
    """Fresh (model, samples) pair: 16x16 segmentation + ROI data and a tiny seeded model"""
    from cli.selftest import toy_setup
    return toy_setup(seed=42)


def make_image(shape=(8, 8), modality=Modality.CT, volume_id="vol_0", slice_index=0, fill=0.0):
    return ImageSample(np.full(shape, fill, dtype=np.float32), modality,
                       volume_id=volume_id, slice_index=slice_index)


def make_sample(task=TaskKind.SEGMENTATION, answer="It is [SEG]. Liver tumor", mask=True,
                volume_id="vol_0", sample_id="vol_0_s000", shape=(8, 8)):
    target = None
    if mask:
        target = np.zeros(shape, dtype=np.uint8)
        target[2:5, 3:6] = 1
    return VqaSample(
        image=make_image(shape, volume_id=volume_id),
        question="Please segment the liver tumor in this CT image.",
        answer=answer,
        task=task,
        target_mask=target,
        sample_id=sample_id,
    )

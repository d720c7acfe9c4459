"""
GroundKit - Curation Tests
Tests for normalization, slicing, box geometry, VQA templates and directory curation
"""

import os
import sys

import cv2
import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from shared.constants import BodyRegion, Modality, NO_FINDINGS, TaskKind
from shared.datamodel import ImageSample, RegionAnnotation, validate_sample
from curation.curate import annotate_slice, curate_directory
from curation.geometry import fill_bbox, mask_to_bbox, overlay_bbox
from curation.preprocess import (
    CtWindow,
    Volume3D,
    normalize_volume,
    parse_size,
    resize_pair,
    slice_axial,
    stack_slices,
    window_ct,
    zscore_mri,
)
from curation.volume_io import read_gkv, write_gkv
from curation.vqa_format import load_templates, to_vqa


def ct_volume(values, masks=None):
    return Volume3D(voxels=np.asarray(values, dtype=np.float32), modality=Modality.CT, masks=masks)


class TestWindowing:
    """Test CT windowing and MRI standardization"""

    @pytest.fixture
    def chest(self):
        return CtWindow.for_region(BodyRegion.CHEST)

    def test_fixed_windows(self):
        assert (CtWindow.for_region(BodyRegion.CHEST).low, CtWindow.for_region(BodyRegion.CHEST).high) == (-1000.0, 500.0)
        assert (CtWindow.for_region(BodyRegion.ABDOMEN).low, CtWindow.for_region(BodyRegion.ABDOMEN).high) == (-175.0, 250.0)

    def test_wrong_region_window(self):
        with pytest.raises(ValueError):
            CtWindow(low=-900.0, high=500.0, body_region=BodyRegion.CHEST)

    def test_chest_examples(self, chest):
        out = window_ct(ct_volume([[[700.0, -2000.0, -250.0]]]), chest).voxels.ravel()
        assert out[0] == pytest.approx(1.0)
        assert out[1] == pytest.approx(0.0)
        assert out[2] == pytest.approx(0.5)

    def test_range_and_monotone(self, chest):
        values = np.linspace(-3000, 3000, 101).reshape(1, 1, -1)
        out = window_ct(ct_volume(values), chest).voxels.ravel()
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert np.all(np.diff(out) >= 0)

    def test_wrong_modality(self, chest):
        mri = Volume3D(voxels=np.zeros((1, 2, 2)), modality=Modality.MRI)
        with pytest.raises(ValueError, match="wrong modality"):
            window_ct(mri, chest)
        with pytest.raises(ValueError, match="wrong modality"):
            zscore_mri(ct_volume(np.zeros((1, 2, 2))))

    def test_ct_needs_window(self):
        with pytest.raises(ValueError):
            normalize_volume(ct_volume(np.zeros((1, 2, 2))))

    def test_zscore_examples(self):
        constant = Volume3D(voxels=np.full((2, 2, 2), 5.0), modality=Modality.MRI)
        assert np.all(zscore_mri(constant).voxels == 0.0)

        pair = Volume3D(voxels=np.array([[[0.0, 2.0]]]), modality=Modality.MRI)
        assert np.allclose(zscore_mri(pair).voxels.ravel(), [-1.0, 1.0])

    def test_zscore_idempotent(self):
        rng = np.random.default_rng(0)
        volume = Volume3D(voxels=rng.normal(3.0, 2.0, (2, 4, 4)), modality=Modality.MRI)
        once = zscore_mri(volume)
        twice = zscore_mri(once)
        assert np.allclose(once.voxels, twice.voxels, atol=1e-5)

    def test_shape_mismatch_masks(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            ct_volume(np.zeros((2, 4, 4)), masks=np.zeros((2, 4, 3)))


class TestSlicing:
    """Test axial slicing and resizing"""

    def test_slice_count_and_identity(self):
        rng = np.random.default_rng(1)
        voxels = rng.normal(size=(4, 5, 6)).astype(np.float32)
        masks = (rng.random((4, 5, 6)) > 0.5).astype(np.uint8)
        pairs = slice_axial(ct_volume(voxels, masks))

        assert [image.slice_index for image, _ in pairs] == [0, 1, 2, 3]
        for i, (image, mask) in enumerate(pairs):
            assert np.array_equal(image.pixels, voxels[i])
            assert mask.shape == (5, 6)
        assert np.array_equal(stack_slices(pairs), voxels)

    def test_identity_resize(self):
        image = ImageSample(np.random.default_rng(2).random((8, 8)), Modality.CT)
        mask = np.eye(8, dtype=np.uint8)
        resized, resized_mask = resize_pair(image, mask, (8, 8))
        assert np.array_equal(resized.pixels, image.pixels)
        assert np.array_equal(resized_mask, mask)

    def test_mask_stays_binary(self):
        image = ImageSample(np.zeros((10, 10)), Modality.CT)
        mask = np.zeros((10, 10), np.uint8)
        mask[2:7, 3:9] = 1
        _, resized_mask = resize_pair(image, mask, (23, 17))
        assert set(np.unique(resized_mask)) <= {0, 1}

    def test_constant_image(self):
        image = ImageSample(np.full((10, 10), 0.3), Modality.MRI)
        resized, _ = resize_pair(image, None, (16, 12))
        assert resized.shape == (16, 12)
        assert np.allclose(resized.pixels, 0.3, atol=1e-6)

    def test_parse_size(self):
        assert parse_size("64x32") == (64, 32)
        with pytest.raises(ValueError):
            parse_size("64")


class TestGeometry:
    """Test bbox degradation and overlays"""

    def test_mask_to_bbox(self):
        mask = np.zeros((8, 8), np.uint8)
        mask[2:5, 3:6] = 1
        assert mask_to_bbox(mask) == (2, 3, 4, 5)

        single = np.zeros((4, 4), np.uint8)
        single[0, 0] = 1
        assert mask_to_bbox(single) == (0, 0, 0, 0)
        assert mask_to_bbox(np.ones((5, 7), np.uint8)) == (0, 0, 4, 6)

    def test_empty_mask(self):
        with pytest.raises(ValueError, match="empty mask"):
            mask_to_bbox(np.zeros((4, 4), np.uint8))

    def test_bbox_covers_mask(self):
        rng = np.random.default_rng(3)
        mask = (rng.random((12, 12)) > 0.8).astype(np.uint8)
        box = fill_bbox(mask_to_bbox(mask), mask.shape)
        assert np.all(box[mask == 1] == 1)

    def test_overlay_border(self):
        image = ImageSample(np.zeros((16, 16)), Modality.XRAY)
        boxed = overlay_bbox(image, (4, 4, 8, 8))
        assert boxed.pixels[4, 6] == 1.0
        assert boxed.pixels[8, 6] == 1.0
        assert boxed.pixels[6, 4] == 1.0
        assert boxed.pixels[6, 6] == 0.0
        assert boxed.pixels[0, 0] == 0.0

    def test_overlay_idempotent(self):
        image = ImageSample(np.random.default_rng(4).random((16, 16)), Modality.XRAY)
        once = overlay_bbox(image, (0, 0, 15, 15))
        twice = overlay_bbox(once, (0, 0, 15, 15))
        assert np.array_equal(once.pixels, twice.pixels)
        assert np.all(once.pixels[:2, :] == 1.0)

    def test_overlay_out_of_bounds(self):
        image = ImageSample(np.zeros((8, 8)), Modality.XRAY)
        with pytest.raises(ValueError, match="bbox out of bounds"):
            overlay_bbox(image, (0, 0, 8, 3))


class TestVqaFormat:
    """Test template filling per task"""

    @pytest.fixture
    def ct_image(self):
        return ImageSample(np.zeros((8, 8)), Modality.CT, volume_id="case", slice_index=3)

    @pytest.fixture
    def tumor_mask(self):
        mask = np.zeros((8, 8), np.uint8)
        mask[2:4, 2:5] = 1
        return mask

    def test_disease_recognition_template(self, ct_image, tumor_mask):
        sample = to_vqa(ct_image, RegionAnnotation.from_mask(tumor_mask, "Liver tumor"),
                        TaskKind.DISEASE_RECOGNITION)
        assert sample.question == ("Can you identify any abnormality within this CT image? "
                                   "Please respond with segmentation masks.")
        assert sample.answer == "It is [SEG]. Liver tumor"
        assert validate_sample(sample) == []

    def test_healthy_slice(self, ct_image):
        zeros = np.zeros((8, 8), np.uint8)
        sample = to_vqa(ct_image, RegionAnnotation.from_mask(zeros, NO_FINDINGS), TaskKind.DISEASE_RECOGNITION)
        assert sample.answer == "No findings"
        assert not sample.target_mask.any()
        assert validate_sample(sample) == []

    def test_roi_classification(self, ct_image):
        sample = to_vqa(ct_image, RegionAnnotation.from_bbox((1, 1, 5, 5), "Liver tumor"),
                        TaskKind.ROI_CLASSIFICATION)
        assert sample.answer == "Liver tumor"
        assert "[SEG]" not in sample.answer
        assert sample.target_mask is None
        assert sample.image.pixels[1, 3] == 1.0
        assert validate_sample(sample) == []

    def test_incompatible_annotation(self, ct_image, tumor_mask):
        with pytest.raises(ValueError, match="incompatible annotation"):
            to_vqa(ct_image, RegionAnnotation.from_mask(tumor_mask, "Liver"), TaskKind.ROI_CLASSIFICATION)
        with pytest.raises(ValueError, match="incompatible annotation"):
            to_vqa(ct_image, RegionAnnotation.from_bbox((0, 0, 1, 1), "Liver"), TaskKind.SEGMENTATION)

    def test_annotate_slice_skips_empty(self, ct_image):
        assert annotate_slice(ct_image, None, TaskKind.SEGMENTATION, "Liver", "id") is None
        negative = annotate_slice(ct_image, None, TaskKind.DISEASE_RECOGNITION, "Liver", "id")
        assert negative.answer == NO_FINDINGS

    def test_template_file_layout(self):
        templates = load_templates()
        assert set(templates) == {"version", "tasks"}
        assert set(templates["tasks"]) == {t.value for t in TaskKind}

    def test_grounded_report_template(self, ct_image, tumor_mask):
        sample = to_vqa(ct_image, RegionAnnotation.from_mask(tumor_mask, "Lesion a with high intensity."),
                        TaskKind.GROUNDED_REPORT)
        assert sample.answer == "It is [SEG]. Lesion a with high intensity."
        assert validate_sample(sample) == []


class TestCurateDirectory:
    """Test the raw-volume curation driver"""

    def test_gkv_round_trip(self, output_dir):
        array = np.arange(24, dtype=np.int16).reshape(2, 3, 4)
        path = write_gkv(array, os.path.join(output_dir, "case.gkv"))
        assert np.array_equal(read_gkv(path), array)

    def test_curate_ct_volumes(self, output_dir):
        rng = np.random.default_rng(5)
        for i in range(5):
            voxels = rng.uniform(-500, 500, (3, 12, 12)).astype(np.float32)
            masks = np.zeros((3, 12, 12), np.uint8)
            masks[1, 3:7, 4:8] = 1
            write_gkv(voxels, os.path.join(output_dir, f"case_{i}.gkv"))
            write_gkv(masks, os.path.join(output_dir, f"case_{i}_mask.gkv"))

        manifest = curate_directory(output_dir, Modality.CT, TaskKind.DISEASE_RECOGNITION, (8, 8),
                                    window=CtWindow.for_region(BodyRegion.ABDOMEN), label="Liver tumor")
        assert len(manifest.samples) == 15
        assert len(manifest.split) == 5
        assert sum(s.answer == NO_FINDINGS for s in manifest.samples) == 10
        assert all(validate_sample(s) == [] for s in manifest.samples)
        assert all(s.image.shape == (8, 8) for s in manifest.samples)
        print(f"✅ Curated {len(manifest.samples)} slices from 5 volumes")

    def test_curate_png_images(self, output_dir):
        for i in range(3):
            image = np.full((10, 10), 100 + i, np.uint8)
            mask = np.zeros((10, 10), np.uint8)
            mask[2:6, 2:6] = 255
            cv2.imwrite(os.path.join(output_dir, f"xr_{i}.png"), image)
            cv2.imwrite(os.path.join(output_dir, f"xr_{i}_mask.png"), mask)

        manifest = curate_directory(output_dir, Modality.XRAY, TaskKind.SEGMENTATION, (8, 8), label="Lung")
        assert len(manifest.samples) == 3
        assert all(s.image.volume_id is None for s in manifest.samples)
        assert all(s.answer.endswith("Lung") for s in manifest.samples)

    def test_missing_directory(self, output_dir):
        with pytest.raises(FileNotFoundError):
            curate_directory(os.path.join(output_dir, "nope"), Modality.CT, TaskKind.SEGMENTATION)

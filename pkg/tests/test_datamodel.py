"""
GroundKit - Data Model Tests
Tests for sample validation, the volume-level split and manifest persistence
"""

import os
import sys
from dataclasses import replace

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from shared.constants import Modality, Split, TaskKind
from shared.datamodel import (
    DatasetManifest,
    ImageSample,
    RegionAnnotation,
    count_test_volumes,
    has_seg_token,
    is_no_findings,
    split_dataset,
    validate_manifest,
    validate_sample,
)
from shared.manifest_io import load_manifest, rle_decode, rle_encode, save_manifest
from tests.conftest import make_sample


class TestImageSample:
    """Test ImageSample structural invariants"""

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError):
            ImageSample(np.zeros((2, 2, 2)), Modality.CT)

    def test_rejects_non_finite(self):
        pixels = np.zeros((4, 4))
        pixels[1, 1] = np.nan
        with pytest.raises(ValueError):
            ImageSample(pixels, Modality.MRI)

    def test_slice_index_needs_volume(self):
        with pytest.raises(ValueError):
            ImageSample(np.zeros((4, 4)), Modality.CT, slice_index=0)

    def test_pixels_are_read_only(self):
        image = ImageSample(np.zeros((4, 4)), Modality.XRAY)
        with pytest.raises(ValueError):
            image.pixels[0, 0] = 1.0


class TestRegionAnnotation:
    """Test mask / bbox annotations"""

    def test_mask_must_be_binary(self):
        with pytest.raises(ValueError):
            RegionAnnotation.from_mask(np.full((4, 4), 2), "Liver")

    def test_bbox_order(self):
        with pytest.raises(ValueError, match="bbox out of bounds"):
            RegionAnnotation.from_bbox((5, 0, 2, 3), "Liver")

    def test_bbox_ok(self):
        annotation = RegionAnnotation.from_bbox((1, 2, 3, 4), "Liver")
        assert annotation.bbox == (1, 2, 3, 4)


class TestValidateSample:
    """Test the [SEG]/mask biconditional and task mask requirements"""

    def test_seg_answer_with_mask_ok(self):
        assert validate_sample(make_sample()) == []

    def test_mask_forbidden_for_roi(self):
        sample = make_sample(task=TaskKind.ROI_CLASSIFICATION, answer="Liver tumor")
        violations = validate_sample(sample)
        assert any("forbidden" in v for v in violations)

    def test_seg_without_mask(self):
        sample = make_sample(answer="It is [SEG].", mask=False)
        violations = validate_sample(sample)
        assert any("[SEG]" in v for v in violations)

    def test_no_findings_with_empty_mask_ok(self):
        sample = make_sample(task=TaskKind.DISEASE_RECOGNITION, answer="No findings")
        sample = replace(sample, target_mask=np.zeros((8, 8), np.uint8))
        assert validate_sample(sample) == []

    def test_no_findings_with_nonempty_mask(self):
        sample = make_sample(task=TaskKind.DISEASE_RECOGNITION, answer="No findings")
        assert any("No findings" in v for v in validate_sample(sample))

    def test_shape_mismatch(self):
        sample = make_sample()
        sample = replace(sample, target_mask=np.ones((4, 4), np.uint8))
        assert any("shape" in v for v in validate_sample(sample))

    def test_answer_helpers(self):
        assert has_seg_token("It is [SEG]. Liver tumor")
        assert not has_seg_token("It is [seg].")
        assert is_no_findings("  no   FINDINGS ")
        assert not is_no_findings("No findings here")


class TestSplit:
    """Test the 80/20 volume-level split"""

    @staticmethod
    def _manifest(n_volumes, slices=2):
        samples = [
            make_sample(volume_id=f"v{v:02d}", sample_id=f"v{v:02d}_s{s}")
            for v in range(n_volumes) for s in range(slices)
        ]
        return DatasetManifest(samples=samples)

    def test_ten_volumes(self):
        split = split_dataset(self._manifest(10), seed=42).split
        assert sum(v == Split.TEST for v in split.values()) == 2
        assert sum(v == Split.TRAIN for v in split.values()) == 8

    def test_five_volumes(self):
        split = split_dataset(self._manifest(5), seed=42).split
        assert sum(v == Split.TEST for v in split.values()) == 1
        assert count_test_volumes(5) == 1

    def test_test_count_rounds_down(self):
        assert count_test_volumes(13) == 2
        assert count_test_volumes(18) == 3
        assert count_test_volumes(2) == 1

    def test_deterministic(self):
        manifest = self._manifest(10)
        assert split_dataset(manifest, 42).split == split_dataset(manifest, 42).split

    def test_order_independent(self):
        manifest = self._manifest(10)
        reversed_manifest = DatasetManifest(samples=tuple(reversed(manifest.samples)))
        assert split_dataset(manifest, 7).split == split_dataset(reversed_manifest, 7).split

    def test_slices_never_straddle(self):
        manifest = split_dataset(self._manifest(10, slices=3), seed=1)
        train_volumes = {s.volume_key for s in manifest.train_samples()}
        test_volumes = {s.volume_key for s in manifest.test_samples()}
        assert not train_volumes & test_volumes
        assert len(manifest.train_samples()) + len(manifest.test_samples()) == 30

    def test_unsplittable(self):
        with pytest.raises(ValueError, match="unsplittable"):
            split_dataset(self._manifest(1), seed=42)


class TestManifestIO:
    """Test manifest JSON persistence"""

    def test_rle_known_runs(self):
        mask = np.array([[0, 1, 1], [1, 0, 0]], dtype=np.uint8)
        encoded = rle_encode(mask)
        assert encoded["rle"] == [1, 3, 2]
        assert np.array_equal(rle_decode(encoded), mask)

    def test_rle_bad_counts(self):
        with pytest.raises(ValueError):
            rle_decode({"rle": [1, 2], "shape": [2, 2]})

    def test_save_and_load(self, output_dir):
        manifest = split_dataset(TestSplit._manifest(5), seed=42)
        path = save_manifest(manifest, os.path.join(output_dir, "manifest.json"))
        loaded = load_manifest(path)

        assert loaded.split == manifest.split
        assert loaded.seed == 42
        assert [s.sample_id for s in loaded.samples] == [s.sample_id for s in manifest.samples]
        first, original = loaded.samples[0], manifest.samples[0]
        assert np.array_equal(first.target_mask, original.target_mask)
        assert np.array_equal(first.image.pixels, original.image.pixels)
        assert validate_manifest(loaded) == {}
        print(f"✅ Manifest round-tripped through {path}")

    def test_missing_manifest(self, output_dir):
        with pytest.raises(FileNotFoundError):
            load_manifest(os.path.join(output_dir, "missing.json"))

"""
GroundKit - Learning Signal Tests
Slow end-to-end runs at 64x64: held-out Dice and disease recognition accuracy after ten epochs,
and the [SEG] / mask contract on 1000 trained-model inferences

Run with: pytest -m slow
"""

import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from shared.constants import Config, TaskKind
from shared.datamodel import has_seg_token, is_no_findings
from ai_engine.interpreter import forward_grounded, predict_samples
from ai_engine.model import ModelConfig, build_model
from ml.synthgen import gen_mixed_dataset
from ml.train_model import TrainConfig, build_vocabulary, train
from evaluation.evaluate import evaluate_runs, write_predictions, read_predictions

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def trained():
    """Ten epochs on 200 Segmentation + 200 DiseaseRecognition volumes (seed 42)"""
    manifest = gen_mixed_dataset(
        [TaskKind.SEGMENTATION, TaskKind.DISEASE_RECOGNITION], n_volumes=200, seed=Config.SEED,
        depth=4, size=Config.IMAGE_SIZE,
    )
    model = build_model(ModelConfig.for_vocab(build_vocabulary(manifest.samples)), seed=Config.SEED)
    train(model, manifest.train_samples(), TrainConfig(epochs=10))
    return model, manifest


class TestLearningSignal:
    """Test held-out quality after desk-scale training"""

    def test_held_out_scores(self, trained, output_dir):
        model, manifest = trained
        path = write_predictions(predict_samples(model, manifest.test_samples()), output_dir)
        report = evaluate_runs(manifest, [read_predictions(path)])

        dice = report.datasets["Segmentation/CT"]["Dice"][0]
        recognition = report.datasets["DiseaseRecognition/CT"]["Accuracy"][0]
        print(f"✅ held-out Dice {dice:.3f}, disease recognition accuracy {recognition:.3f}")
        assert dice >= 0.70
        assert recognition >= 0.90

    def test_mask_contract_on_1000_inferences(self, trained):
        model, manifest = trained
        samples = list(manifest.samples)
        rng = np.random.default_rng(Config.SEED)
        violations = 0
        for index in rng.integers(len(samples), size=1000):
            sample = samples[int(index)]
            output = forward_grounded(model, sample.image, sample.question)
            if output.has_mask != (has_seg_token(output.answer) or is_no_findings(output.answer)):
                violations += 1
            elif is_no_findings(output.answer) and output.mask.any():
                violations += 1
        assert violations == 0

    def test_healthy_slice_answers_no_findings(self, trained):
        model, manifest = trained
        healthy = [s for s in manifest.test_samples()
                   if s.task == TaskKind.DISEASE_RECOGNITION and is_no_findings(s.answer)]
        assert healthy
        output = forward_grounded(model, healthy[0].image, healthy[0].question)
        assert is_no_findings(output.answer)
        assert output.has_mask and not output.mask.any()

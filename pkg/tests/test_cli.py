"""
GroundKit - Command Line Tests
Tests for run configs, the self-test registry, exit codes and the synth -> train -> infer -> eval pipeline
"""

import json
import os
import sys

import cv2
import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from shared.constants import Config, TaskKind
from shared.datamodel import GroundedOutput
from shared.manifest_io import load_manifest, read_mask_png
from ai_engine.vocab import Vocabulary
from cli.config import RunConfig
from cli.main import EXIT_BAD_INPUT, EXIT_OK, EXIT_SELFTEST_FAILED, main
from cli.selftest import CHECKS, run_selftest

TINY_MODEL = {
    "image_size": [16, 16], "patch_size": 4, "d_model": 16, "n_heads": 2,
    "n_layers_vision": 1, "n_layers_lm": 1, "n_layers_mask_decoder": 1,
    "max_answer_len": 8, "max_seq_len": 96, "adapter_rank": 2,
}
METRIC_CHECKS = ["dice_identity", "dice_disjoint", "dice_half_overlap", "bleu_brevity_penalty",
                 "meteor_best_precision", "rouge_l_lcs", "paired_t_test_oracle", "trial_range_cell"]


def write_config(directory, name="run.json", **sections):
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(sections, f)
    return path


class TestRunConfig:
    """Test JSON / TOML run configs"""

    def test_json(self, output_dir):
        path = write_config(output_dir, model={"d_model": 16, "n_heads": 2}, train={"epochs": 3})
        run = RunConfig.from_file(path, command="train", seed=7)
        assert run.command == "train"
        assert run.train.epochs == 3
        assert run.seed == run.train.seed == 7

    def test_toml(self, output_dir):
        path = os.path.join(output_dir, "run.toml")
        with open(path, "w", encoding="utf-8") as f:
            f.write('command = "train"\nseed = 3\n\n[model]\nd_model = 16\nn_heads = 2\n\n'
                    '[train]\nepochs = 2\nlr = 0.001\n')
        run = RunConfig.from_file(path)
        assert run.train.lr == pytest.approx(0.001)
        assert run.train.seed == 3
        assert run.model == {"d_model": 16, "n_heads": 2}

    def test_rejects_vocab_tokens(self, output_dir):
        path = write_config(output_dir, model={"vocab_tokens": ["a"]})
        with pytest.raises(ValueError):
            RunConfig.from_file(path)

    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            RunConfig(model={"d_model": 15, "n_heads": 2})

    def test_missing_file(self, output_dir):
        with pytest.raises(FileNotFoundError):
            RunConfig.from_file(os.path.join(output_dir, "nope.json"))

    def test_answer_cap_grows_with_data(self):
        vocab = Vocabulary.build([])
        assert RunConfig().build_model_config(vocab).max_answer_len == Config.MAX_ANSWER_LEN
        assert RunConfig().build_model_config(vocab, longest_answer=40).max_answer_len == 41

    def test_explicit_answer_cap_too_short(self):
        run = RunConfig(model={"max_answer_len": 8})
        assert run.build_model_config(Vocabulary.build([]), longest_answer=8).max_answer_len == 8
        with pytest.raises(ValueError):
            run.build_model_config(Vocabulary.build([]), longest_answer=9)


class TestSelftest:
    """Test the self-test registry"""

    def test_names_unique(self):
        names = [name for name, _ in CHECKS]
        assert len(names) == len(set(names))

    def test_all_checks_pass(self):
        report = run_selftest()
        failed = [c for c in report["checks"] if not c["passed"]]
        assert not failed, failed
        assert report["passed"] == len(CHECKS)
        print(f"✅ {report['passed']} self-test checks passed")

    def test_mutated_dice_fails(self):
        def doubled_numerator(pred, gt):
            pred, gt = np.asarray(pred, bool), np.asarray(gt, bool)
            return 4.0 * np.logical_and(pred, gt).sum() / (pred.sum() + gt.sum())

        report = run_selftest(overrides={"dice_score": doubled_numerator}, only=["dice_identity"])
        assert report["failed"] == 1

    def test_mutated_bleu_fails(self):
        report = run_selftest(overrides={"bleu": lambda pair, n=4, smoothing=False: 1.0},
                              only=["bleu_brevity_penalty", "bleu_zero_overlap"])
        assert report["failed"] == 2

    def test_exception_becomes_failure(self):
        def broken(*args, **kwargs):
            raise RuntimeError("boom")

        report = run_selftest(overrides={"rouge_l": broken}, only=["rouge_l_lcs"])
        assert report["failed"] == 1
        assert "boom" in report["checks"][0]["detail"]

    def test_grounding_check_runs_model(self):
        report = run_selftest(only=["seg_mask_biconditional"])
        assert report["passed"] == 1
        assert "120 inferences" in report["checks"][0]["detail"]

    def test_grounding_check_catches_dropped_masks(self, monkeypatch):
        import cli.selftest as selftest
        real = selftest.forward_grounded
        monkeypatch.setattr(selftest, "forward_grounded",
                            lambda model, image, question: GroundedOutput(real(model, image, question).answer))
        report = run_selftest(only=["seg_mask_biconditional"])
        assert report["failed"] == 1

    def test_report_deterministic(self, output_dir):
        first, second = os.path.join(output_dir, "a.json"), os.path.join(output_dir, "b.json")
        only = METRIC_CHECKS + ["gradcheck_seg_embedding"]
        assert main(["selftest", "--out", first, "--only", *only]) == EXIT_OK
        assert main(["selftest", "--out", second, "--only", *only]) == EXIT_OK
        with open(first, "rb") as f1, open(second, "rb") as f2:
            assert f1.read() == f2.read()


class TestExitCodes:
    """Test error mapping in main()"""

    def test_missing_manifest(self, output_dir):
        code = main(["eval", "--manifest", os.path.join(output_dir, "missing.json"),
                     "--predictions", os.path.join(output_dir, "p.jsonl")])
        assert code == EXIT_BAD_INPUT

    def test_missing_input(self):
        assert main(["train"]) == EXIT_BAD_INPUT

    def test_bad_size(self, output_dir):
        assert main(["synth", "--size", "sixteen", "--out", output_dir]) == EXIT_BAD_INPUT

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            main(["explode"])

    def test_selftest_failure_code(self, monkeypatch):
        monkeypatch.setattr("cli.main.run_selftest", lambda only=None: {"checks": [], "passed": 0, "failed": 1})
        assert main(["selftest"]) == EXIT_SELFTEST_FAILED

    def test_answer_cap_shorter_than_reports(self, output_dir):
        synth_dir = os.path.join(output_dir, "reports")
        assert main(["synth", "--task", "GroundedReport", "--volumes", "5", "--depth", "2",
                     "--size", "16x16", "--out", synth_dir]) == EXIT_OK
        config = write_config(output_dir, model=TINY_MODEL)
        code = main(["train", "--config", config, "--manifest", os.path.join(synth_dir, "manifest.json"),
                     "--out", os.path.join(output_dir, "run")])
        assert code == EXIT_BAD_INPUT


class TestPipeline:
    """Test synth -> train -> infer -> eval through the command line"""

    def test_end_to_end(self, output_dir):
        synth_dir = os.path.join(output_dir, "synth")
        run_dir = os.path.join(output_dir, "run")
        pred_dir = os.path.join(output_dir, "pred")
        eval_dir = os.path.join(output_dir, "eval")
        manifest_path = os.path.join(synth_dir, "manifest.json")
        config = write_config(output_dir, model=TINY_MODEL, train={"epochs": 1, "batch_size": 4})

        assert main(["synth", "--task", "Segmentation", "RoiClassification", "--volumes", "5",
                     "--depth", "2", "--size", "16x16", "--out", synth_dir]) == EXIT_OK
        manifest = load_manifest(manifest_path)
        assert {s.task for s in manifest.samples} == {TaskKind.SEGMENTATION, TaskKind.ROI_CLASSIFICATION}

        assert main(["train", "--config", config, "--manifest", manifest_path, "--out", run_dir]) == EXIT_OK
        for name in ("model.gkc", "train.jsonl", "loss_curves.svg", "run_config.json"):
            assert os.path.exists(os.path.join(run_dir, name)), name

        checkpoint = os.path.join(run_dir, "model.gkc")
        assert main(["infer", "--checkpoint", checkpoint, "--manifest", manifest_path,
                     "--out", pred_dir]) == EXIT_OK
        predictions = os.path.join(pred_dir, "predictions.jsonl")
        with open(predictions, "r", encoding="utf-8") as f:
            assert len(f.readlines()) == len(manifest.test_samples())

        assert main(["eval", "--manifest", manifest_path, "--predictions", predictions,
                     "--out", eval_dir]) == EXIT_OK
        with open(os.path.join(eval_dir, "metrics.json"), "r", encoding="utf-8") as f:
            metrics = json.load(f)
        assert "Dice" in metrics["datasets"]["Segmentation/CT"]
        assert "Accuracy" in metrics["datasets"]["RoiClassification/CT"]
        assert os.path.exists(os.path.join(eval_dir, "metrics.xlsx"))
        print("✅ synth -> train -> infer -> eval completed")

    def test_single_image_inference(self, output_dir, toy):
        from ai_engine.checkpoint import save_checkpoint
        model, _ = toy
        checkpoint = save_checkpoint(model, os.path.join(output_dir, "model.gkc"))
        image_path = os.path.join(output_dir, "scan.png")
        cv2.imwrite(image_path, (np.arange(32 * 32).reshape(32, 32) % 256).astype(np.uint8))
        out_dir = os.path.join(output_dir, "single")

        code = main(["infer", "--checkpoint", checkpoint, "--image", image_path, "--modality", "CT",
                     "--question", "Please segment the organ a in this CT image.", "--out", out_dir])
        assert code == EXIT_OK
        with open(os.path.join(out_dir, "record.json"), "r", encoding="utf-8") as f:
            record = json.load(f)
        with open(os.path.join(out_dir, "answer.txt"), "r", encoding="utf-8") as f:
            assert f.read().strip() == record["answer"]
        if record["has_mask"]:
            assert read_mask_png(os.path.join(out_dir, "mask.png")).shape == (16, 16)
        else:
            assert not os.path.exists(os.path.join(out_dir, "mask.png"))


class TestLogging:
    """Test console verbosity switches"""

    def test_quiet_keeps_file_level(self):
        import logging
        import logging.handlers
        from shared.logging_config import LOG_LEVEL, get_eval_logger, set_console_level

        logger = get_eval_logger()
        try:
            set_console_level(logging.WARNING)
            for handler in logger.handlers:
                if isinstance(handler, logging.handlers.RotatingFileHandler):
                    assert handler.level == LOG_LEVEL
                else:
                    assert handler.level == logging.WARNING
            assert logger.isEnabledFor(LOG_LEVEL)
        finally:
            set_console_level(LOG_LEVEL)

    def test_verbose_and_quiet_exclusive(self):
        with pytest.raises(SystemExit):
            main(["selftest", "--verbose", "--quiet"])

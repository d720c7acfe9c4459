"""
GroundKit Configuration
Process settings from environment variables / .env, and run configs from JSON or TOML files
"""

import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from shared.constants import Config
from shared.logging_config import get_cli_logger
from ai_engine.model import ModelConfig
from ai_engine.vocab import Vocabulary
from ml.train_model import TrainConfig

logger = get_cli_logger()

# Try to load .env file
try:
    from dotenv import load_dotenv

    # Look for .env in project root (parent of cli/)
    project_root = Path(__file__).resolve().parent.parent
    env_path = project_root / '.env'

    if env_path.exists():
        load_dotenv(env_path)
        logger.debug(f"Loaded .env from: {env_path}")
except ImportError:
    logger.debug("python-dotenv not installed, using environment variables / defaults")


class GroundKitSettings:
    """Process settings loaded from environment variables"""

    @property
    def THREADS(self) -> int:
        """Internal parallelism; 1 is the deterministic mode"""
        return max(1, int(os.environ.get("GROUNDKIT_THREADS", "1")))

    @property
    def SEED(self) -> int:
        return int(os.environ.get("GROUNDKIT_SEED", str(Config.SEED)))

    @property
    def DEVICE(self) -> str:
        return os.environ.get("GROUNDKIT_DEVICE", "cpu")

    @property
    def LOG_DIR(self) -> Optional[str]:
        return os.environ.get("GROUNDKIT_LOG_DIR")

    def __repr__(self) -> str:
        return (
            f"GroundKitSettings(\n"
            f"  THREADS={self.THREADS},\n"
            f"  SEED={self.SEED},\n"
            f"  DEVICE={self.DEVICE},\n"
            f"  LOG_DIR={self.LOG_DIR or 'default'}\n"
            f")"
        )


# Singleton instance
settings = GroundKitSettings()


# ==================== RUN CONFIG ====================

Command = Literal["synth", "curate", "train", "infer", "eval", "selftest"]

_EMPTY_VOCAB = Vocabulary.build([])


class RunConfig(BaseModel):
    """
    One command's configuration.

    model holds ModelConfig overrides (the vocabulary is only known once data is loaded);
    the run seed is copied into the training config.
    """
    command: Optional[Command] = None
    input: Optional[str] = None
    output: Optional[str] = None
    model: Dict[str, Any] = Field(default_factory=dict)
    train: TrainConfig = Field(default_factory=TrainConfig)
    seed: int = Field(default_factory=lambda: settings.SEED)

    @model_validator(mode="after")
    def _propagate_seed(self) -> "RunConfig":
        if "vocab_tokens" in self.model:
            raise ValueError("the vocabulary is built from data; remove model.vocab_tokens")
        ModelConfig.for_vocab(_EMPTY_VOCAB, **self.model)
        if self.train.seed != self.seed:
            self.train = self.train.model_copy(update={"seed": self.seed})
        return self

    @classmethod
    def from_file(cls, path: str, **overrides) -> "RunConfig":
        """Read a JSON or TOML config; keyword overrides win over file values"""
        if not os.path.exists(path):
            raise FileNotFoundError(f"Config not found: {path}")
        if path.lower().endswith(".toml"):
            with open(path, "rb") as f:
                data = tomllib.load(f)
        else:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.model_validate(data)

    def build_model_config(self, vocab: Vocabulary, longest_answer: int = 0) -> ModelConfig:
        """
        Model config for a data vocabulary.

        Without an explicit model.max_answer_len the cap grows to fit the longest answer plus [EOS];
        an explicit cap shorter than the longest answer is rejected.
        """
        overrides = dict(self.model)
        if "max_answer_len" not in overrides:
            overrides["max_answer_len"] = max(Config.MAX_ANSWER_LEN, longest_answer + 1)
        elif overrides["max_answer_len"] < longest_answer:
            raise ValueError(
                f"model.max_answer_len {overrides['max_answer_len']} is shorter than the "
                f"longest training answer ({longest_answer} tokens)"
            )
        return ModelConfig.for_vocab(vocab, **overrides)

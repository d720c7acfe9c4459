"""
AI Engine Module for GroundKit
Contains the vocabulary, low-rank adapters, the grounded interpreter network and inference
"""

from .vocab import Vocabulary, tokenize, detokenize
from .adapters import LowRankAdapter, AdaptedLinear, apply_adapter
from .model import ModelConfig, GroundedInterpreter, LanguageEmbeddings, build_model, collate_text
from .interpreter import forward_grounded, predict_samples
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    'Vocabulary',
    'tokenize',
    'detokenize',
    'LowRankAdapter',
    'AdaptedLinear',
    'apply_adapter',
    'ModelConfig',
    'GroundedInterpreter',
    'LanguageEmbeddings',
    'build_model',
    'collate_text',
    'forward_grounded',
    'predict_samples',
    'save_checkpoint',
    'load_checkpoint',
]

"""
Grounded Interpreter Network
Vision encoder + causal language model for answers, and a prompt encoder + mask
decoder driven by the language-model embeddings of the instruction and the answer
"""

import math
from dataclasses import dataclass
from itertools import chain
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, Field, model_validator

from shared.constants import Config, SpecialToken
from shared.datamodel import ImageSample
from ai_engine.adapters import AdaptedLinear
from ai_engine.vocab import Vocabulary

INSTRUCTION = "instruction"
GENERATED = "generated"
PROVENANCE_IDS = {INSTRUCTION: 0, GENERATED: 1}
PADDING_TAG = 2


# ==================== CONFIGURATION ====================

class ModelConfig(BaseModel):
    """Architecture hyper-parameters plus the vocabulary token list"""
    image_size: Tuple[int, int] = Config.IMAGE_SIZE
    patch_size: int = Field(default=Config.PATCH_SIZE, ge=1)
    d_model: int = Field(default=Config.D_MODEL, ge=4)
    n_heads: int = Field(default=Config.N_HEADS, ge=1)
    n_layers_vision: int = Field(default=1, ge=0)
    n_layers_lm: int = Field(default=2, ge=1)
    n_layers_mask_decoder: int = Field(default=1, ge=1)
    vocab_tokens: List[str]
    max_answer_len: int = Field(default=Config.MAX_ANSWER_LEN, ge=1)
    max_seq_len: int = Field(default=192, ge=2)
    mask_threshold: float = Field(default=Config.MASK_THRESHOLD, gt=0.0, lt=1.0)
    adapter_rank: Optional[int] = Field(default=Config.ADAPTER_RANK, ge=1)
    prompt_queries: int = Field(default=Config.PROMPT_QUERIES, ge=1)
    injection: Literal["hidden", "embedding"] = "hidden"

    @model_validator(mode="after")
    def _check_geometry(self) -> "ModelConfig":
        height, width = self.image_size
        if height % self.patch_size or width % self.patch_size:
            raise ValueError(f"image size {self.image_size} not divisible by patch size {self.patch_size}")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.n_vision_tokens + 2 > self.max_seq_len:
            raise ValueError(f"max_seq_len {self.max_seq_len} leaves no room after {self.n_vision_tokens} vision tokens")
        Vocabulary(self.vocab_tokens)
        return self

    @classmethod
    def for_vocab(cls, vocab: Vocabulary, **overrides) -> "ModelConfig":
        return cls(vocab_tokens=list(vocab.tokens), **overrides)

    @property
    def vocab(self) -> Vocabulary:
        return Vocabulary(self.vocab_tokens)

    @property
    def grid(self) -> Tuple[int, int]:
        return self.image_size[0] // self.patch_size, self.image_size[1] // self.patch_size

    @property
    def n_vision_tokens(self) -> int:
        rows, cols = self.grid
        return rows * cols


@dataclass
class LanguageEmbeddings:
    """Instruction embeddings followed by generated-token embeddings, with provenance tags"""
    vectors: torch.Tensor
    provenance: Tuple[str, ...]

    def __post_init__(self):
        if self.vectors.dim() != 2 or self.vectors.shape[0] != len(self.provenance):
            raise ValueError(
                f"shape mismatch: {tuple(self.vectors.shape)} vectors vs {len(self.provenance)} tags"
            )

    def __len__(self) -> int:
        return len(self.provenance)

    def provenance_ids(self) -> torch.Tensor:
        return torch.tensor([PROVENANCE_IDS[t] for t in self.provenance],
                            dtype=torch.long, device=self.vectors.device)


@dataclass
class TextBatch:
    """Right-padded question + [BOS] + answer ids with next-token targets"""
    ids: torch.Tensor
    targets: torch.Tensor
    question_lens: List[int]
    answer_lens: List[int]


def collate_text(
    question_ids: Sequence[Sequence[int]],
    answer_ids: Sequence[Sequence[int]],
    device: Optional[torch.device] = None
) -> TextBatch:
    """
    Lay out each sample as question + [BOS] + answer.

    The [BOS] position and every answer position are supervised with the next
    answer token ([EOS] after the last one); question positions are padding targets.
    """
    if len(question_ids) != len(answer_ids):
        raise ValueError(f"shape mismatch: {len(question_ids)} questions vs {len(answer_ids)} answers")
    width = max(len(q) + 1 + len(a) for q, a in zip(question_ids, answer_ids))
    ids = torch.full((len(question_ids), width), int(SpecialToken.PAD), dtype=torch.long)
    targets = torch.full_like(ids, int(SpecialToken.PAD))
    for row, (q, a) in enumerate(zip(question_ids, answer_ids)):
        sequence = list(q) + [int(SpecialToken.BOS)] + list(a)
        ids[row, :len(sequence)] = torch.tensor(sequence, dtype=torch.long)
        start = len(q)
        targets[row, start:start + len(a) + 1] = torch.tensor(list(a) + [int(SpecialToken.EOS)], dtype=torch.long)
    if device is not None:
        ids, targets = ids.to(device), targets.to(device)
    return TextBatch(ids=ids, targets=targets,
                     question_lens=[len(q) for q in question_ids],
                     answer_lens=[len(a) for a in answer_ids])


# ==================== VISION ====================

class VisionEncoder(nn.Module):
    """Patch embedding + learned positions + pre-norm transformer layers"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        self.patch_embed = nn.Conv2d(1, d, kernel_size=config.patch_size, stride=config.patch_size)
        self.pos_embed = nn.Parameter(torch.randn(1, config.n_vision_tokens, d) * 0.02)
        self.layers = nn.ModuleList([
            nn.TransformerEncoderLayer(d, config.n_heads, dim_feedforward=2 * d, dropout=0.0,
                                       activation="gelu", batch_first=True, norm_first=True)
            for _ in range(config.n_layers_vision)
        ])
        self.norm = nn.LayerNorm(d)

    def forward(self, pixels: torch.Tensor) -> torch.Tensor:
        """(B, H, W) -> (B, N, d)"""
        tokens = self.patch_embed(pixels.unsqueeze(1)).flatten(2).transpose(1, 2)
        tokens = tokens + self.pos_embed
        for layer in self.layers:
            tokens = layer(tokens)
        return self.norm(tokens)


# ==================== LANGUAGE MODEL ====================

class CausalSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, rank: Optional[int]):
        super().__init__()
        self.n_heads = n_heads
        self.qkv = AdaptedLinear(d_model, 3 * d_model, rank)
        self.proj = AdaptedLinear(d_model, d_model, rank)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, d = x.shape
        head_dim = d // self.n_heads
        q, k, v = self.qkv(x).split(d, dim=2)
        q, k, v = (t.view(batch, length, self.n_heads, head_dim).transpose(1, 2) for t in (q, k, v))
        scores = q @ k.transpose(-2, -1) / math.sqrt(head_dim)
        future = torch.ones(length, length, dtype=torch.bool, device=x.device).triu(1)
        weights = torch.softmax(scores.masked_fill(future, float("-inf")), dim=-1)
        out = (weights @ v).transpose(1, 2).reshape(batch, length, d)
        return self.proj(out)


class DecoderBlock(nn.Module):
    def __init__(self, d_model: int, n_heads: int, rank: Optional[int]):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = CausalSelfAttention(d_model, n_heads, rank)
        self.norm2 = nn.LayerNorm(d_model)
        self.fc_in = AdaptedLinear(d_model, 4 * d_model, rank)
        self.fc_out = AdaptedLinear(4 * d_model, d_model, rank)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.fc_out(F.gelu(self.fc_in(self.norm2(x))))


class LanguageModel(nn.Module):
    """Decoder-only transformer over [vision tokens] + text tokens"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        self.max_seq_len = config.max_seq_len
        self.token_embed = nn.Embedding(len(config.vocab_tokens), d)
        self.pos_embed = nn.Parameter(torch.randn(config.max_seq_len, d) * 0.02)
        self.blocks = nn.ModuleList([
            DecoderBlock(d, config.n_heads, config.adapter_rank) for _ in range(config.n_layers_lm)
        ])
        self.norm = nn.LayerNorm(d)
        self.head = nn.Linear(d, len(config.vocab_tokens))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, T, d) input embeddings -> (B, T, d) final hidden states"""
        length = x.shape[1]
        if length > self.max_seq_len:
            raise ValueError(f"sequence too long: {length} > {self.max_seq_len}")
        x = x + self.pos_embed[:length]
        for block in self.blocks:
            x = block(x)
        return self.norm(x)


# ==================== SEGMENTATION BRANCH ====================

class PromptEncoder(nn.Module):
    """K learnable queries cross-attending over the language embeddings"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        self.queries = nn.Parameter(torch.randn(config.prompt_queries, d) * 0.02)
        self.provenance_embed = nn.Embedding(3, d)
        self.lang_proj = nn.Linear(d, d)
        self.attn = nn.MultiheadAttention(d, config.n_heads, batch_first=True)
        self.norm1 = nn.LayerNorm(d)
        self.mlp = nn.Sequential(nn.Linear(d, 2 * d), nn.GELU(), nn.Linear(2 * d, d))
        self.norm2 = nn.LayerNorm(d)

    def forward(self, lang: torch.Tensor, provenance: torch.Tensor, padding: torch.Tensor) -> torch.Tensor:
        """(B, L, d) language embeddings -> (B, K, d) prompt tokens"""
        keys = self.lang_proj(lang) + self.provenance_embed(provenance)
        queries = self.queries.unsqueeze(0).expand(lang.shape[0], -1, -1)
        attended, _ = self.attn(queries, keys, keys, key_padding_mask=padding, need_weights=False)
        prompts = self.norm1(queries + attended)
        return self.norm2(prompts + self.mlp(prompts))


class TwoWayBlock(nn.Module):
    """Prompt self-attention, prompt-to-image and image-to-prompt cross-attention"""

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(d_model, n_heads, batch_first=True)
        self.norm1 = nn.LayerNorm(d_model)
        self.prompt_to_image = nn.MultiheadAttention(d_model, n_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(nn.Linear(d_model, 2 * d_model), nn.GELU(), nn.Linear(2 * d_model, d_model))
        self.norm3 = nn.LayerNorm(d_model)
        self.image_to_prompt = nn.MultiheadAttention(d_model, n_heads, batch_first=True)
        self.norm4 = nn.LayerNorm(d_model)

    def forward(self, prompts: torch.Tensor, image: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        prompts = self.norm1(prompts + self.self_attn(prompts, prompts, prompts, need_weights=False)[0])
        prompts = self.norm2(prompts + self.prompt_to_image(prompts, image, image, need_weights=False)[0])
        prompts = self.norm3(prompts + self.mlp(prompts))
        image = self.norm4(image + self.image_to_prompt(image, prompts, prompts, need_weights=False)[0])
        return prompts, image


class MaskDecoder(nn.Module):
    """
    Two-way attention between prompts and image tokens, then a hypernetwork on the
    first prompt token weighs upsampled image features into full-resolution logits.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        channels = max(d // 4, 4)
        self.grid = config.grid
        self.image_size = tuple(config.image_size)
        self.image_proj = nn.Linear(d, d)
        self.blocks = nn.ModuleList([TwoWayBlock(d, config.n_heads) for _ in range(config.n_layers_mask_decoder)])
        self.upscale = nn.Conv2d(d, channels, kernel_size=1)
        self.pixel_features = nn.Sequential(
            nn.Conv2d(1, channels, kernel_size=3, padding=1),
            nn.GELU(),
            nn.Conv2d(channels, channels, kernel_size=3, padding=1),
        )
        self.hypernet = nn.Sequential(nn.Linear(d, d), nn.GELU(), nn.Linear(d, channels))
        self.bias = nn.Parameter(torch.zeros(()))

    def forward(self, image_tokens: torch.Tensor, prompts: torch.Tensor, pixels: torch.Tensor) -> torch.Tensor:
        """-> (B, H, W) mask logits"""
        batch, _, d = image_tokens.shape
        image = self.image_proj(image_tokens)
        for block in self.blocks:
            prompts, image = block(prompts, image)
        rows, cols = self.grid
        fmap = image.transpose(1, 2).reshape(batch, d, rows, cols)
        fmap = F.interpolate(fmap, size=self.image_size, mode="bilinear", align_corners=False)
        features = F.gelu(self.upscale(fmap) + self.pixel_features(pixels.unsqueeze(1)))
        weights = self.hypernet(prompts[:, 0])
        return torch.einsum("bc,bchw->bhw", weights, features) + self.bias


# ==================== FULL MODEL ====================

class GroundedInterpreter(nn.Module):
    """
    Generates answers autoregressively and decodes a mask from the language embeddings.

    The language-model vision encoder and the segmentation vision encoder are frozen.
    With adapter_rank set, the language-model linear layers train through adapters only.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.vocab = config.vocab
        self.vision_encoder = VisionEncoder(config)
        self.vision_proj = nn.Linear(config.d_model, config.d_model)
        self.lm = LanguageModel(config)
        self.seg_encoder = VisionEncoder(config)
        self.prompt_encoder = PromptEncoder(config)
        self.mask_decoder = MaskDecoder(config)
        for param in chain(self.vision_encoder.parameters(), self.seg_encoder.parameters()):
            param.requires_grad_(False)

    @property
    def device(self) -> torch.device:
        return self.lm.pos_embed.device

    @property
    def dtype(self) -> torch.dtype:
        return self.lm.pos_embed.dtype

    # ---------- parameter groups ----------

    def frozen_modules(self) -> Dict[str, nn.Module]:
        return {"vision_encoder": self.vision_encoder, "seg_encoder": self.seg_encoder}

    def mask_branch_parameters(self) -> List[nn.Parameter]:
        """Prompt encoder + mask decoder parameters (only mask losses reach them)"""
        return list(chain(self.prompt_encoder.parameters(), self.mask_decoder.parameters()))

    def trainable_parameters(self) -> List[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def count_parameters(self, trainable_only: bool = False) -> int:
        params = self.trainable_parameters() if trainable_only else self.parameters()
        return sum(p.numel() for p in params)

    # ---------- inputs ----------

    def image_tensor(self, images: Sequence[ImageSample]) -> torch.Tensor:
        """Stack images into a (B, H, W) tensor, checking the configured size"""
        expected = tuple(self.config.image_size)
        for image in images:
            if image.shape != expected:
                raise ValueError(f"shape mismatch: image {image.shape} vs configured {expected}")
        stacked = np.stack([image.pixels for image in images], axis=0)
        return torch.as_tensor(stacked, dtype=self.dtype, device=self.device)

    # ---------- language path ----------

    def vision_tokens(self, pixels: torch.Tensor) -> torch.Tensor:
        """(B, H, W) -> (B, N, d) projected vision tokens as the language model sees them"""
        return self.vision_proj(self.vision_encoder(pixels))

    def run_language_model(self, vision: torch.Tensor, text_ids: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Args:
            vision: (B, N, d) projected vision tokens
            text_ids: (B, T) text ids

        Returns:
            (hidden, logits) for the text positions: (B, T, d) and (B, T, V)
        """
        embedded = torch.cat([vision, self.lm.token_embed(text_ids)], dim=1)
        hidden = self.lm(embedded)[:, vision.shape[1]:]
        return hidden, self.lm.head(hidden)

    def language_batch(
        self,
        batch: TextBatch,
        hidden: torch.Tensor
    ) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """
        Gather instruction + answer embeddings per sample, skipping [BOS].

        Returns:
            (vectors (B, L, d), provenance ids (B, L), padding mask (B, L))
        """
        source = hidden if self.config.injection == "hidden" else self.lm.token_embed(batch.ids)
        vectors, tags = [], []
        for row, (q_len, a_len) in enumerate(zip(batch.question_lens, batch.answer_lens)):
            positions = list(range(q_len)) + list(range(q_len + 1, q_len + 1 + a_len))
            if not positions:
                raise ValueError("language embeddings need at least one instruction token")
            vectors.append(source[row, positions])
            tags.append(torch.tensor([0] * q_len + [1] * a_len, dtype=torch.long, device=source.device))
        lengths = [len(t) for t in tags]
        vectors = nn.utils.rnn.pad_sequence(vectors, batch_first=True)
        provenance = nn.utils.rnn.pad_sequence(tags, batch_first=True, padding_value=PADDING_TAG)
        padding = torch.arange(vectors.shape[1], device=source.device)[None, :] >= torch.tensor(
            lengths, device=source.device)[:, None]
        return vectors, provenance, padding

    # ---------- mask path ----------

    def mask_logits(
        self,
        pixels: torch.Tensor,
        lang: torch.Tensor,
        provenance: torch.Tensor,
        padding: torch.Tensor
    ) -> torch.Tensor:
        """(B, H, W) pixels + (B, L, d) language embeddings -> (B, H, W) logits"""
        image_tokens = self.seg_encoder(pixels)
        prompts = self.prompt_encoder(lang, provenance, padding)
        return self.mask_decoder(image_tokens, prompts, pixels)

    def forward(self, pixels: torch.Tensor, batch: TextBatch, with_mask: bool = True) -> Dict[str, torch.Tensor]:
        """
        Teacher-forced pass.

        Returns:
            {"logits": (B, T, V), "mask_logits": (B, H, W)} (mask_logits only when with_mask)
        """
        hidden, logits = self.run_language_model(self.vision_tokens(pixels), batch.ids)
        outputs = {"logits": logits}
        if with_mask:
            lang, provenance, padding = self.language_batch(batch, hidden)
            outputs["mask_logits"] = self.mask_logits(pixels, lang, provenance, padding)
        return outputs

    # ==================== SINGLE-IMAGE OPERATIONS ====================

    def encode_image_mllm(self, image: ImageSample) -> torch.Tensor:
        """(H/p * W/p, d) vision tokens for one image"""
        return self.vision_tokens(self.image_tensor([image]))[0]

    @torch.no_grad()
    def generate(self, image: ImageSample, question_ids: Sequence[int]) -> List[int]:
        """
        Greedy decoding after question + [BOS].

        Returns:
            Answer ids without the terminating [EOS]; at most max_answer_len ids
        """
        if not question_ids:
            raise ValueError("question is empty")
        vision = self.vision_tokens(self.image_tensor([image]))
        prefix = list(question_ids) + [int(SpecialToken.BOS)]
        answer: List[int] = []
        for _ in range(self.config.max_answer_len):
            text = torch.tensor([prefix + answer], dtype=torch.long, device=self.device)
            _, logits = self.run_language_model(vision, text)
            next_id = int(torch.argmax(logits[0, -1]).item())
            if next_id == int(SpecialToken.EOS):
                break
            answer.append(next_id)
        return answer

    def build_language_embeddings(
        self,
        instruction_ids: Sequence[int],
        generated_ids: Sequence[int],
        image: Optional[ImageSample] = None
    ) -> LanguageEmbeddings:
        """
        Concatenate instruction and generated-token embeddings.

        Hidden-state injection runs the language model over image + question + [BOS] + answer
        and needs the image; embedding injection reads the embedding table directly.
        """
        if not instruction_ids:
            raise ValueError("instruction_ids must be non-empty")
        batch = collate_text([instruction_ids], [generated_ids], device=self.device)
        if self.config.injection == "hidden":
            if image is None:
                raise ValueError("hidden-state injection needs the image")
            hidden, _ = self.run_language_model(self.vision_tokens(self.image_tensor([image])), batch.ids)
        else:
            hidden = None
        vectors, _, _ = self.language_batch(batch, hidden)
        tags = (INSTRUCTION,) * len(instruction_ids) + (GENERATED,) * len(generated_ids)
        return LanguageEmbeddings(vectors=vectors[0], provenance=tags)

    def decode_mask(self, image: ImageSample, lang: LanguageEmbeddings) -> torch.Tensor:
        """(H, W) mask logits for one image"""
        if len(lang) == 0:
            raise ValueError("language embeddings are empty")
        pixels = self.image_tensor([image])
        padding = torch.zeros(1, len(lang), dtype=torch.bool, device=self.device)
        return self.mask_logits(pixels, lang.vectors.unsqueeze(0), lang.provenance_ids().unsqueeze(0), padding)[0]


def build_model(config: ModelConfig, seed: int = Config.SEED, device: str = "cpu") -> GroundedInterpreter:
    """Seeded construction; the same seed gives bit-identical initial weights"""
    torch.manual_seed(seed)
    return GroundedInterpreter(config).to(device)

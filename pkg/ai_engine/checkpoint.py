"""
Checkpoint Archive
Single zip holding config.json, vocab.json, index.json and params.bin
(row-major little-endian f32 tensors; index maps name -> shape, byte offset)
"""

import json
import os
import zipfile
from typing import Dict

import numpy as np
import torch

from shared.logging_config import get_model_logger
from ai_engine.model import GroundedInterpreter, ModelConfig, build_model
from ai_engine.vocab import Vocabulary

logger = get_model_logger()

CONFIG_ENTRY = "config.json"
VOCAB_ENTRY = "vocab.json"
INDEX_ENTRY = "index.json"
PARAMS_ENTRY = "params.bin"
FIXED_TIMESTAMP = (1980, 1, 1, 0, 0, 0)
PARAM_DTYPE = np.dtype("<f4")


def _write_entry(archive: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=FIXED_TIMESTAMP)
    info.compress_type = zipfile.ZIP_DEFLATED
    archive.writestr(info, data)


def save_checkpoint(model: GroundedInterpreter, path: str) -> str:
    """
    Write every state-dict tensor (frozen ones included) to one archive.

    Identical weights give byte-identical archives.
    """
    index: Dict[str, dict] = {}
    chunks = []
    offset = 0
    for name, tensor in model.state_dict().items():
        array = tensor.detach().cpu().numpy().astype(PARAM_DTYPE)
        data = np.ascontiguousarray(array).tobytes(order="C")
        index[name] = {"shape": list(array.shape), "offset": offset}
        chunks.append(data)
        offset += len(data)

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with zipfile.ZipFile(path, "w") as archive:
        _write_entry(archive, CONFIG_ENTRY, model.config.model_dump_json(indent=1).encode("utf-8"))
        _write_entry(archive, VOCAB_ENTRY, model.vocab.to_json().encode("utf-8"))
        _write_entry(archive, INDEX_ENTRY, json.dumps(index, indent=1).encode("utf-8"))
        _write_entry(archive, PARAMS_ENTRY, b"".join(chunks))
    logger.info(f"Checkpoint saved: {path} ({len(index)} tensors, {offset} bytes)")
    return path


def load_checkpoint(path: str, device: str = "cpu") -> GroundedInterpreter:
    """
    Rebuild a model from an archive written by save_checkpoint.

    Raises:
        FileNotFoundError: archive missing
        RuntimeError: archive unreadable or inconsistent with its config
    """
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"Checkpoint not found: {path}\n"
            f"Train a model first with: python run_groundkit.py train"
        )
    try:
        with zipfile.ZipFile(path, "r") as archive:
            config = ModelConfig.model_validate_json(archive.read(CONFIG_ENTRY))
            vocab = Vocabulary.from_json(archive.read(VOCAB_ENTRY).decode("utf-8"))
            index = json.loads(archive.read(INDEX_ENTRY))
            params = archive.read(PARAMS_ENTRY)
        if vocab != config.vocab:
            raise ValueError("vocab.json disagrees with the config vocabulary")

        model = build_model(config, device="cpu")
        state = model.state_dict()
        missing = set(state) - set(index)
        if missing:
            raise ValueError(f"missing tensors: {sorted(missing)}")
        for name, target in state.items():
            entry = index[name]
            count = int(np.prod(entry["shape"], dtype=np.int64))
            array = np.frombuffer(params, dtype=PARAM_DTYPE, count=count, offset=entry["offset"])
            state[name] = torch.from_numpy(array.reshape(entry["shape"]).copy()).to(target.dtype)
        model.load_state_dict(state)
    except Exception as e:
        raise RuntimeError(f"Failed to load checkpoint: {e}")

    logger.info(f"Checkpoint loaded: {path}")
    return model.to(device)

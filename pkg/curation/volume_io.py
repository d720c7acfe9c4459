"""
Volume & Image I/O
GKV1 binary volume container plus PNG / NPY 2D image readers
"""

import os
import struct
from typing import Tuple

import cv2
import numpy as np

GKV_MAGIC = b"GKV1"
# <4s magic> <uint32 dtype code> <uint32 D> <uint32 H> <uint32 W>
GKV_HEADER = struct.Struct("<4sIIII")

DTYPE_CODES = {
    1: np.dtype("<u1"),
    2: np.dtype("<i2"),
    3: np.dtype("<i4"),
    4: np.dtype("<f4"),
    5: np.dtype("<f8"),
}
CODE_FOR_DTYPE = {dtype: code for code, dtype in DTYPE_CODES.items()}


def write_gkv(array: np.ndarray, path: str) -> str:
    """
    Write a 3D array as a GKV1 container (little-endian, row-major).

    Args:
        array: D x H x W array of a supported dtype
        path: Output path

    Returns:
        The path written
    """
    array = np.asarray(array)
    if array.ndim != 3:
        raise ValueError(f"GKV1 stores 3D arrays, got shape {array.shape}")
    dtype = array.dtype.newbyteorder("<")
    if dtype not in CODE_FOR_DTYPE:
        raise ValueError(f"unsupported GKV1 dtype: {array.dtype}")
    depth, height, width = array.shape
    with open(path, "wb") as f:
        f.write(GKV_HEADER.pack(GKV_MAGIC, CODE_FOR_DTYPE[dtype], depth, height, width))
        f.write(np.ascontiguousarray(array, dtype=dtype).tobytes(order="C"))
    return path


def read_gkv(path: str) -> np.ndarray:
    """Read a GKV1 container into a D x H x W array"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Volume not found: {path}")
    with open(path, "rb") as f:
        header = f.read(GKV_HEADER.size)
        if len(header) != GKV_HEADER.size:
            raise ValueError(f"truncated GKV1 header: {path}")
        magic, code, depth, height, width = GKV_HEADER.unpack(header)
        if magic != GKV_MAGIC:
            raise ValueError(f"not a GKV1 file (magic {magic!r}): {path}")
        if code not in DTYPE_CODES:
            raise ValueError(f"unknown GKV1 dtype code {code}: {path}")
        data = np.frombuffer(f.read(), dtype=DTYPE_CODES[code])
    expected = depth * height * width
    if data.size != expected:
        raise ValueError(f"GKV1 payload has {data.size} values, header says {expected}: {path}")
    return data.reshape(depth, height, width).copy()


def read_image_2d(path: str) -> np.ndarray:
    """
    Read a 2D image as float32.

    PNGs are scaled to [0, 1] by their bit depth; .npy files are returned as stored.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Image not found: {path}")
    if path.lower().endswith(".npy"):
        pixels = np.load(path)
    else:
        raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise ValueError(f"Image not readable: {path}")
        if raw.ndim == 3:
            raw = cv2.cvtColor(raw, cv2.COLOR_BGR2GRAY)
        scale = 65535.0 if raw.dtype == np.uint16 else 255.0
        pixels = raw.astype(np.float32) / scale
    if pixels.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {pixels.shape}: {path}")
    return pixels.astype(np.float32)


def split_stem(path: str) -> Tuple[str, str]:
    """'dir/case_01_mask.gkv' -> ('case_01_mask', '.gkv')"""
    name = os.path.basename(path)
    stem, ext = os.path.splitext(name)
    return stem, ext.lower()

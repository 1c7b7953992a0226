"""Little-endian binary helpers for the model file formats."""
from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .corpus import Vocabulary


def write_u32(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<I", int(value)))


def write_u64(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<Q", int(value)))


def write_f64(fh: BinaryIO, value: float) -> None:
    fh.write(struct.pack("<d", float(value)))


def write_str(fh: BinaryIO, value: str) -> None:
    raw = value.encode("utf-8")
    write_u32(fh, len(raw))
    fh.write(raw)


def write_array(fh: BinaryIO, arr: np.ndarray, dtype: str) -> None:
    fh.write(np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<")).tobytes())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise ValueError("truncated model file")
    return raw


def read_u32(fh: BinaryIO) -> int:
    return struct.unpack("<I", _read_exact(fh, 4))[0]


def read_u64(fh: BinaryIO) -> int:
    return struct.unpack("<Q", _read_exact(fh, 8))[0]


def read_f64(fh: BinaryIO) -> float:
    return struct.unpack("<d", _read_exact(fh, 8))[0]


def read_str(fh: BinaryIO) -> str:
    return _read_exact(fh, read_u32(fh)).decode("utf-8")


def read_array(fh: BinaryIO, shape: tuple[int, ...], dtype: str) -> np.ndarray:
    dt = np.dtype(dtype).newbyteorder("<")
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(_read_exact(fh, count * dt.itemsize), dtype=dt)
    return arr.astype(np.dtype(dtype), copy=True).reshape(shape)


def expect_magic(fh: BinaryIO, magic: bytes, supported: int) -> int:
    got = fh.read(len(magic))
    if got != magic:
        raise ValueError(f"not a {magic.decode()} model file (magic {got!r})")
    version = read_u32(fh)
    if version != supported:
        raise ValueError(f"unsupported {magic.decode()} format version {version}")
    return version


def write_vocabulary(fh: BinaryIO, vocab: Vocabulary) -> None:
    write_u32(fh, vocab.min_freq)
    write_u64(fh, vocab.total_tokens)
    for token, freq in zip(vocab.id_to_token, vocab.frequency):
        write_str(fh, token)
        write_u64(fh, int(freq))


def read_vocabulary(fh: BinaryIO, size: int) -> Vocabulary:
    min_freq = read_u32(fh)
    total = read_u64(fh)
    tokens, freqs = [], []
    for _ in range(size):
        tokens.append(read_str(fh))
        freqs.append(read_u64(fh))
    return Vocabulary(tuple(tokens), np.asarray(freqs, dtype=np.int64), min_freq, total)

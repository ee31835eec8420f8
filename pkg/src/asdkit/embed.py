"""Clip embeddings.

The toolkit has no neural frontend; a deterministic baseline embedder maps
an enhanced spectrogram to band statistics (per-band mean and standard
deviation, L2-normalized), which is enough to make filter-bank and
enhancement choices observable downstream.  Externally computed embeddings
(e.g. from a fine-tuned model) enter through the same binary format and are
treated identically by the scoring backend.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .filterbank import LogMelSpectrogram

logger = logging.getLogger(__name__)

EMBEDDING_MAGIC = b"ASDE"
EMBEDDING_VERSION = 1

_HEADER = struct.Struct("<4sHII")
_U16 = struct.Struct("<H")


class EmbeddingFormatError(ValueError):
    """Malformed embedding file."""


@dataclass
class Embedding:
    vector: np.ndarray
    clip_id: str


@dataclass
class EmbeddingSet:
    dim: int
    entries: list[Embedding]
    provenance: str = "baseline"      # baseline | imported

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if entry.vector.shape != (self.dim,):
                raise ValueError(
                    f"embedding {entry.clip_id!r} has shape {entry.vector.shape}, "
                    f"expected ({self.dim},)")
            if entry.clip_id in seen:
                raise ValueError(f"duplicate clip_id {entry.clip_id!r}")
            seen.add(entry.clip_id)

    def __len__(self) -> int:
        return len(self.entries)


def baseline_embed(feature: LogMelSpectrogram, bands: int = 16,
                   clip_id: str = "") -> Embedding:
    """Band-statistics embedding of a spectrogram.

    The frequency axis is cut into ``bands`` contiguous bands of width
    ceil(F / bands) (the last band may be smaller); each contributes its
    mean and population standard deviation over all frames.  The
    concatenated vector (means first, stds second, D = 2 * bands) is
    L2-normalized; an all-zero vector is returned unchanged.
    """
    values = feature.values
    if values.size == 0:
        raise ValueError("cannot embed an empty spectrogram")
    n_freq = values.shape[0]
    if not 1 <= bands <= n_freq:
        raise ValueError(f"bands must be in [1, {n_freq}], got {bands}")
    width = -(-n_freq // bands)
    if bands > 1 and (bands - 1) * width >= n_freq:
        raise ValueError(
            f"bands={bands} cannot partition {n_freq} rows into width-{width} bands")
    means = np.empty(bands)
    stds = np.empty(bands)
    for b in range(bands):
        chunk = values[b * width:(b + 1) * width]
        means[b] = chunk.mean()
        stds[b] = chunk.std()
    vector = np.concatenate([means, stds])
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        logger.warning("degenerate all-zero embedding for clip %r", clip_id)
        return Embedding(vector=vector, clip_id=clip_id)
    return Embedding(vector=vector / norm, clip_id=clip_id)


# ---------------------------------------------------------------------------
# Embedding file format
#
# magic 'ASDE' | version u16 LE | dim u32 LE | count u32 LE |
# per entry: clip_id length u16 LE, UTF-8 bytes, dim float32 LE
# ---------------------------------------------------------------------------

def write_embeddings(embedding_set: EmbeddingSet, path) -> None:
    parts = [_HEADER.pack(EMBEDDING_MAGIC, EMBEDDING_VERSION,
                          embedding_set.dim, len(embedding_set.entries))]
    for entry in embedding_set.entries:
        encoded = entry.clip_id.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise EmbeddingFormatError(f"clip_id too long ({len(encoded)} bytes)")
        parts.append(_U16.pack(len(encoded)))
        parts.append(encoded)
        parts.append(np.asarray(entry.vector, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_embeddings(path, provenance: str = "imported") -> EmbeddingSet:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise EmbeddingFormatError(f"{path}: {len(data)} bytes is too short for a header")
    magic, version, dim, count = _HEADER.unpack_from(data)
    if magic != EMBEDDING_MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
    if version != EMBEDDING_VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise EmbeddingFormatError(f"{path}: embedding dim 0 is not allowed")

    entries = []
    offset = _HEADER.size
    vec_bytes = dim * 4
    for _ in range(count):
        if offset + _U16.size > len(data):
            raise EmbeddingFormatError(f"{path}: truncated at byte {offset}")
        (name_len,) = _U16.unpack_from(data, offset)
        offset += _U16.size
        if offset + name_len + vec_bytes > len(data):
            raise EmbeddingFormatError(f"{path}: truncated at byte {offset}")
        clip_id = data[offset:offset + name_len].decode("utf-8")
        offset += name_len
        vector = np.frombuffer(data[offset:offset + vec_bytes], dtype="<f4").astype(np.float64)
        offset += vec_bytes
        entries.append(Embedding(vector=vector, clip_id=clip_id))
    if offset != len(data):
        raise EmbeddingFormatError(
            f"{path}: {len(data) - offset} trailing bytes at byte {offset}")

    try:
        return EmbeddingSet(dim=dim, entries=entries, provenance=provenance)
    except ValueError as exc:
        raise EmbeddingFormatError(f"{path}: {exc}") from exc

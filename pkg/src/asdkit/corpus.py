"""DCASE-style corpus handling.

WAV decoding/encoding, clip-name metadata parsing, attribute-class
construction, and plain-text manifests.  File names follow the layout

    <machine>/<split>/section_<NN>_<domain>_<split>_<condition>_<index>[_<key>_<value>]*.wav

with ``split`` in {train, test}, ``domain`` in {source, target} and
``condition`` in {normal, anomaly, unknown}.  Paths that do not match are
rejected rather than guessed.
"""

import struct
from dataclasses import dataclass
from pathlib import Path, PurePosixPath

import numpy as np

SPLITS = ("train", "test")
DOMAINS = ("source", "target")
CONDITIONS = ("normal", "anomaly", "unknown")

PCM16_SCALE = 32768.0


class WavFormatError(ValueError):
    """Malformed RIFF/WAVE container."""


class WavChannelError(WavFormatError):
    """Only mono input is supported; no mixdown is attempted."""


class WavCodecError(WavFormatError):
    """Encoding other than PCM16 or IEEE float32."""


class ClipNameError(ValueError):
    """Path does not match the corpus naming grammar."""


@dataclass
class Waveform:
    """Mono audio: float amplitudes in [-1, 1] plus a sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int


@dataclass(frozen=True)
class ClipMetadata:
    machine_type: str
    section: int
    split: str
    domain: str
    condition: str
    index: int
    attributes: tuple[tuple[str, str], ...] = ()
    clip_id: str = ""


@dataclass(frozen=True)
class AttributeClassMap:
    """Contiguous class indices for (machine_type, domain, attributes) keys."""

    index_of: dict
    count: int

    def class_of(self, meta: ClipMetadata) -> int:
        return self.index_of[(meta.machine_type, meta.domain, meta.attributes)]


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

def read_wav(path) -> Waveform:
    """Decode a mono RIFF/WAVE file.

    Accepts PCM 16-bit integer (scaled by 1/32768) and IEEE float32.
    Raises :class:`WavFormatError` for container damage,
    :class:`WavChannelError` for multichannel data and
    :class:`WavCodecError` for any other encoding.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise WavFormatError(
                f"{path}: chunk {chunk_id!r} truncated "
                f"({len(body)} of {chunk_size} bytes)")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise WavFormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        # chunks are word aligned
        pos += 8 + chunk_size + (chunk_size & 1)

    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if payload is None:
        raise WavFormatError(f"{path}: missing data chunk")

    audio_format, channels, sample_rate, _, _, bits = fmt
    if sample_rate <= 0:
        raise WavFormatError(f"{path}: non-positive sample rate {sample_rate}")
    if channels != 1:
        raise WavChannelError(f"{path}: {channels} channels, expected mono")

    if audio_format == 1 and bits == 16:
        if len(payload) % 2:
            raise WavFormatError(f"{path}: odd PCM16 payload size {len(payload)}")
        raw = np.frombuffer(payload, dtype="<i2")
        samples = raw.astype(np.float64) / PCM16_SCALE
    elif audio_format == 3 and bits == 32:
        if len(payload) % 4:
            raise WavFormatError(f"{path}: float32 payload size {len(payload)} not a multiple of 4")
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise WavCodecError(
            f"{path}: unsupported encoding (format tag {audio_format}, {bits} bits);"
            " expected PCM16 or IEEE float32")

    return Waveform(samples=samples, sample_rate=int(sample_rate))


def write_wav(path, samples, sample_rate: int, encoding: str = "pcm16") -> None:
    """Write mono samples as RIFF/WAVE, either ``pcm16`` or ``float32``.

    PCM16 quantizes with round-half-even at scale 32768 and clamps to the
    int16 range, so values already on the k/32768 grid round-trip exactly.
    """
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if sample_rate <= 0:
        raise ValueError(f"sample_rate must be positive, got {sample_rate}")

    if encoding == "pcm16":
        ints = np.clip(np.round(samples * PCM16_SCALE), -32768, 32767)
        payload = ints.astype("<i2").tobytes()
        audio_format, bits = 1, 16
    elif encoding == "float32":
        payload = samples.astype("<f4").tobytes()
        audio_format, bits = 3, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}")

    block_align = bits // 8
    fmt_chunk = struct.pack(
        "<HHIIHH", audio_format, 1, sample_rate,
        sample_rate * block_align, block_align, bits)
    body = (b"WAVE"
            + b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
            + b"data" + struct.pack("<I", len(payload)) + payload)
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


# ---------------------------------------------------------------------------
# Clip names
# ---------------------------------------------------------------------------

def parse_clip_name(path) -> ClipMetadata:
    """Parse metadata out of a corpus-relative clip path.

    Raises :class:`ClipNameError` naming the offending component.
    """
    rel = PurePosixPath(str(path).replace("\\", "/"))
    parts = rel.parts
    if len(parts) != 3:
        raise ClipNameError(
            f"{rel}: expected <machine>/<split>/<file>.wav, got {len(parts)} components")
    machine, split_dir, fname = parts
    if split_dir not in SPLITS:
        raise ClipNameError(f"{rel}: split directory {split_dir!r} not in {SPLITS}")
    if not fname.endswith(".wav"):
        raise ClipNameError(f"{rel}: file name must end in .wav")

    tokens = fname[:-4].split("_")
    if len(tokens) < 6:
        raise ClipNameError(f"{rel}: file name has {len(tokens)} fields, expected at least 6")
    if tokens[0] != "section":
        raise ClipNameError(f"{rel}: file name must start with 'section', got {tokens[0]!r}")
    if not tokens[1].isdigit():
        raise ClipNameError(f"{rel}: section number {tokens[1]!r} is not numeric")
    if tokens[2] not in DOMAINS:
        raise ClipNameError(f"{rel}: domain {tokens[2]!r} not in {DOMAINS}")
    if tokens[3] not in SPLITS:
        raise ClipNameError(f"{rel}: split field {tokens[3]!r} not in {SPLITS}")
    if tokens[3] != split_dir:
        raise ClipNameError(
            f"{rel}: split field {tokens[3]!r} disagrees with directory {split_dir!r}")
    if tokens[4] not in CONDITIONS:
        raise ClipNameError(f"{rel}: condition {tokens[4]!r} not in {CONDITIONS}")
    if not tokens[5].isdigit():
        raise ClipNameError(f"{rel}: clip index {tokens[5]!r} is not numeric")

    attr_tokens = tokens[6:]
    if len(attr_tokens) % 2:
        raise ClipNameError(
            f"{rel}: attribute fields {attr_tokens!r} do not form key/value pairs")
    attributes = tuple(
        (attr_tokens[i], attr_tokens[i + 1]) for i in range(0, len(attr_tokens), 2))

    return ClipMetadata(
        machine_type=machine,
        section=int(tokens[1]),
        split=split_dir,
        domain=tokens[2],
        condition=tokens[4],
        index=int(tokens[5]),
        attributes=attributes,
        clip_id=str(rel),
    )


def format_clip_name(meta: ClipMetadata) -> str:
    """Inverse of :func:`parse_clip_name`; returns the corpus-relative path."""
    for value in (meta.machine_type,):
        if "/" in value:
            raise ClipNameError(f"machine type {value!r} may not contain '/'")
    for key, value in meta.attributes:
        for piece in (key, value):
            if "_" in piece or "/" in piece or not piece:
                raise ClipNameError(f"attribute field {piece!r} is not representable")
    if meta.split not in SPLITS or meta.domain not in DOMAINS or meta.condition not in CONDITIONS:
        raise ClipNameError(
            f"cannot format metadata with split={meta.split!r} domain={meta.domain!r} "
            f"condition={meta.condition!r}")
    fields = [
        "section", f"{meta.section:02d}", meta.domain, meta.split,
        meta.condition, f"{meta.index:04d}",
    ]
    for key, value in meta.attributes:
        fields.extend((key, value))
    return f"{meta.machine_type}/{meta.split}/{'_'.join(fields)}.wav"


def build_attribute_classes(metadata) -> AttributeClassMap:
    """One class per distinct (machine_type, domain, attributes) key.

    Keys are indexed contiguously in lexicographic order, so machines
    without attributes collapse to one class per (machine_type, domain).
    All entries must come from the train split.
    """
    metadata = list(metadata)
    if not metadata:
        raise ValueError("cannot build attribute classes from an empty metadata list")
    for meta in metadata:
        if meta.split != "train":
            raise ValueError(
                f"attribute classes are defined on train clips only, got {meta.clip_id or meta}")
    keys = sorted({(m.machine_type, m.domain, m.attributes) for m in metadata})
    return AttributeClassMap(index_of={k: i for i, k in enumerate(keys)}, count=len(keys))


# ---------------------------------------------------------------------------
# Corpus walking and manifests
# ---------------------------------------------------------------------------

def index_corpus(root) -> list[ClipMetadata]:
    """Parse every ``<machine>/<split>/*.wav`` under ``root``, sorted by clip id."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root {root} is not a directory")
    metas = []
    for split in SPLITS:
        for wav in root.glob(f"*/{split}/*.wav"):
            metas.append(parse_clip_name(wav.relative_to(root).as_posix()))
    metas.sort(key=lambda m: m.clip_id)
    if not metas:
        raise FileNotFoundError(f"no clips found under {root}")
    return metas


def write_manifest(clip_ids, path) -> None:
    """One relative clip path per line, UTF-8, LF endings."""
    text = "".join(f"{cid}\n" for cid in clip_ids)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_manifest(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]

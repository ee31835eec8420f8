"""Filter banks and log filter-bank energies.

Three bank flavors share one application path:

* ``ofb`` -- triangular filters on mel-spaced edges (HTK convention,
  m = 2595 * log10(1 + f/700)).  Spacing widens with frequency, which
  favors the low end of the spectrum.
* ``mfb`` -- triangular filters on evenly spaced edges.  Every frequency
  region gets the same resolution, which suits machine sounds whose
  faults can show up anywhere in the spectrum.
* ``gfb`` -- 4th-order gammatone magnitude responses on ERB-rate-spaced
  centers (Glasberg & Moore parameters), peak-normalized per filter.

Triangles are peak-1 by default; Slaney-style area normalization is
available behind a flag.  Applying a bank takes a natural log with an
absolute floor so silence maps to a finite value.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import PowerSpectrogram

BANK_KINDS = ("ofb", "mfb", "gfb")
ENHANCEMENTS = ("none", "global", "local", "customized")

LOG_FLOOR = 1e-10

# Glasberg & Moore ERB parameters
EAR_Q = 9.26449
MIN_BW = 24.7

FEATURE_MAGIC = b"ASDF"
FEATURE_VERSION = 1
_KIND_CODE = {k: i for i, k in enumerate(BANK_KINDS)}
_ENH_CODE = {e: i for i, e in enumerate(ENHANCEMENTS)}


class BankConstructionError(ValueError):
    """Edges unusable for building a filter bank."""


class DegenerateFilterError(BankConstructionError):
    """A filter's support contains no FFT bin."""


class DimensionError(ValueError):
    """Bank and spectrogram shapes disagree."""


class FeatureFormatError(ValueError):
    """Malformed feature file."""


@dataclass
class FilterBank:
    weights: np.ndarray           # (n_filters, n_fft/2 + 1)
    kind: str
    f_min: float
    f_max: float
    center_freqs: np.ndarray


@dataclass
class LogMelSpectrogram:
    """n_filters x T natural-log filter-bank energies."""

    values: np.ndarray
    kind: str
    enhancement: str = "none"


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def erb_bandwidth(f):
    """Equivalent rectangular bandwidth at frequency f, in Hz."""
    return np.asarray(f, dtype=np.float64) / EAR_Q + MIN_BW


def erb_rate(f):
    return EAR_Q * np.log1p(np.asarray(f, dtype=np.float64) / (EAR_Q * MIN_BW))


def erb_rate_inv(e):
    return (EAR_Q * MIN_BW) * np.expm1(np.asarray(e, dtype=np.float64) / EAR_Q)


def _check_range(n_filters: int, f_min: float, f_max: float) -> None:
    if n_filters < 1:
        raise BankConstructionError(f"need at least one filter, got {n_filters}")
    if not 0.0 <= f_min < f_max:
        raise BankConstructionError(f"need 0 <= f_min < f_max, got [{f_min}, {f_max}]")


def mel_edges(n_filters: int, f_min: float, f_max: float) -> np.ndarray:
    """n_filters + 2 edge frequencies, equally spaced on the mel scale."""
    _check_range(n_filters, f_min, f_max)
    mels = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_filters + 2)
    edges = mel_to_hz(mels)
    edges[0], edges[-1] = f_min, f_max
    return edges


def uniform_edges(n_filters: int, f_min: float, f_max: float) -> np.ndarray:
    """n_filters + 2 edge frequencies in arithmetic progression."""
    _check_range(n_filters, f_min, f_max)
    return np.linspace(f_min, f_max, n_filters + 2)


def build_triangular_bank(edges, n_fft: int, sample_rate: int,
                          kind: str = "ofb",
                          area_normalize: bool = False) -> FilterBank:
    """Triangular filters: filter j rises over (edges[j], edges[j+1]) and
    falls over (edges[j+1], edges[j+2]), peaking at 1.0, evaluated at the
    FFT bin frequencies k * sr / n_fft.

    A filter with zero weight at every bin raises
    :class:`DegenerateFilterError` naming its index.
    """
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 3:
        raise BankConstructionError(f"need at least 3 edges, got shape {edges.shape}")
    if np.any(np.diff(edges) <= 0):
        raise BankConstructionError("edges must be strictly increasing")
    nyquist = sample_rate / 2.0
    if edges[-1] > nyquist + 1e-9:
        raise BankConstructionError(
            f"top edge {edges[-1]:.3f} Hz exceeds Nyquist {nyquist:.1f} Hz")
    if kind not in ("ofb", "mfb"):
        raise BankConstructionError(f"triangular bank kind must be ofb or mfb, got {kind!r}")

    n_filters = edges.size - 2
    bin_freqs = np.arange(n_fft // 2 + 1, dtype=np.float64) * sample_rate / n_fft
    weights = np.zeros((n_filters, bin_freqs.size), dtype=np.float64)
    for j in range(n_filters):
        left, center, right = edges[j], edges[j + 1], edges[j + 2]
        rise = (bin_freqs - left) / (center - left)
        fall = (right - bin_freqs) / (right - center)
        row = np.minimum(rise, fall)
        row[(bin_freqs <= left) | (bin_freqs >= right)] = 0.0
        np.clip(row, 0.0, None, out=row)
        if not np.any(row > 0.0):
            raise DegenerateFilterError(
                f"filter {j} with support ({left:.3f}, {right:.3f}) Hz contains no FFT bin; "
                f"increase n_fft or reduce the filter count")
        if area_normalize:
            row *= 2.0 / (right - left)
        weights[j] = row
    return FilterBank(weights=weights, kind=kind, f_min=float(edges[0]),
                      f_max=float(edges[-1]), center_freqs=edges[1:-1].copy())


def build_gammatone_bank(n_filters: int, f_min: float, f_max: float,
                         n_fft: int, sample_rate: int) -> FilterBank:
    """Frequency-sampled 4th-order gammatone bank on ERB-rate-spaced centers.

    Row j is |H(f)|^2 = (1 + ((f - fc)/b)^2)^-4 with b = 1.019 * ERB(fc),
    normalized so the sampled maximum is exactly 1.
    """
    _check_range(n_filters, f_min, f_max)
    nyquist = sample_rate / 2.0
    if f_max > nyquist + 1e-9:
        raise BankConstructionError(f"f_max {f_max:.3f} Hz exceeds Nyquist {nyquist:.1f} Hz")
    rates = np.linspace(erb_rate(f_min), erb_rate(f_max), n_filters + 2)[1:-1]
    centers = erb_rate_inv(rates)
    bandwidths = 1.019 * erb_bandwidth(centers)
    bin_freqs = np.arange(n_fft // 2 + 1, dtype=np.float64) * sample_rate / n_fft
    detune = (bin_freqs[None, :] - centers[:, None]) / bandwidths[:, None]
    weights = (1.0 + detune ** 2) ** -4.0
    weights /= weights.max(axis=1, keepdims=True)
    return FilterBank(weights=weights, kind="gfb", f_min=float(f_min),
                      f_max=float(f_max), center_freqs=centers)


def build_bank(kind: str, n_filters: int, f_min: float, f_max: float,
               n_fft: int, sample_rate: int,
               area_normalize: bool = False) -> FilterBank:
    """Dispatch on `kind` (ofb / mfb / gfb)."""
    if kind == "ofb":
        return build_triangular_bank(mel_edges(n_filters, f_min, f_max),
                                     n_fft, sample_rate, kind="ofb",
                                     area_normalize=area_normalize)
    if kind == "mfb":
        return build_triangular_bank(uniform_edges(n_filters, f_min, f_max),
                                     n_fft, sample_rate, kind="mfb",
                                     area_normalize=area_normalize)
    if kind == "gfb":
        return build_gammatone_bank(n_filters, f_min, f_max, n_fft, sample_rate)
    raise BankConstructionError(f"unknown bank kind {kind!r}, expected one of {BANK_KINDS}")


def apply_log_fbank(spec: PowerSpectrogram, bank: FilterBank,
                    floor: float = LOG_FLOOR) -> LogMelSpectrogram:
    """values[j][t] = ln(max(sum_k weights[j][k] * spec[k][t], floor))."""
    if bank.weights.shape[1] != spec.values.shape[0]:
        raise DimensionError(
            f"bank expects {bank.weights.shape[1]} FFT bins, "
            f"spectrogram has {spec.values.shape[0]}")
    energies = bank.weights @ spec.values
    return LogMelSpectrogram(values=np.log(np.maximum(energies, floor)),
                             kind=bank.kind)


# ---------------------------------------------------------------------------
# Feature file format
#
# magic 'ASDF' | version u16 LE | kind u8 | enhancement u8 |
# n_filters u32 LE | T u32 LE | n_filters*T float32 LE, filter-major
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sHBBII")


def write_feature(feature: LogMelSpectrogram, path) -> None:
    values = np.ascontiguousarray(feature.values, dtype="<f4")
    if values.ndim != 2:
        raise FeatureFormatError(f"feature values must be 2-D, got shape {values.shape}")
    header = _HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION,
                          _KIND_CODE[feature.kind], _ENH_CODE[feature.enhancement],
                          values.shape[0], values.shape[1])
    Path(path).write_bytes(header + values.tobytes())


def read_feature(path) -> LogMelSpectrogram:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FeatureFormatError(f"{path}: {len(data)} bytes is too short for a header")
    magic, version, kind_code, enh_code, n_filters, n_frames = _HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise FeatureFormatError(f"{path}: unsupported version {version}")
    if kind_code >= len(BANK_KINDS):
        raise FeatureFormatError(f"{path}: unknown bank kind code {kind_code}")
    if enh_code >= len(ENHANCEMENTS):
        raise FeatureFormatError(f"{path}: unknown enhancement code {enh_code}")
    expected = n_filters * n_frames * 4
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise FeatureFormatError(
            f"{path}: expected {expected} payload bytes at offset {_HEADER.size}, "
            f"got {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return LogMelSpectrogram(values=values.reshape(n_filters, n_frames),
                             kind=BANK_KINDS[kind_code],
                             enhancement=ENHANCEMENTS[enh_code])

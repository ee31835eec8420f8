"""Waveform conditioning and power-spectrogram extraction.

The pipeline is deliberately minimal and bit-reproducible: pad/truncate to a
fixed duration, first-difference pre-emphasis, strided framing, windowing,
and an rFFT power spectrum.  No dithering, no DC removal, no snip-edges
heuristics.
"""

from dataclasses import dataclass

import numpy as np

from .corpus import Waveform

WINDOWS = ("hann", "hamming", "rectangular")


class EmptyInputError(ValueError):
    """Waveform has no samples."""


class TooShortError(ValueError):
    """Waveform shorter than one analysis frame."""


@dataclass(frozen=True)
class FrameParams:
    """Analysis parameters; defaults give 25 ms frames / 10 ms hop at 16 kHz."""

    frame_len: int = 400
    hop: int = 160
    n_fft: int = 512
    pre_emphasis: float = 0.97
    window: str = "hann"
    target_duration: float = 10.0

    def __post_init__(self):
        if not (0 < self.hop <= self.frame_len <= self.n_fft):
            raise ValueError(
                f"need 0 < hop <= frame_len <= n_fft, got "
                f"hop={self.hop} frame_len={self.frame_len} n_fft={self.n_fft}")
        if self.n_fft & (self.n_fft - 1):
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft}")
        if not 0.0 <= self.pre_emphasis < 1.0:
            raise ValueError(f"pre_emphasis must be in [0, 1), got {self.pre_emphasis}")
        if self.window not in WINDOWS:
            raise ValueError(f"window {self.window!r} not in {WINDOWS}")
        if self.target_duration <= 0:
            raise ValueError(f"target_duration must be positive, got {self.target_duration}")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


@dataclass
class PowerSpectrogram:
    """(n_fft/2 + 1) x T matrix of squared rFFT magnitudes."""

    values: np.ndarray
    params: FrameParams
    sample_rate: int


def frame_count(n_samples: int, params: FrameParams) -> int:
    if n_samples < params.frame_len:
        return 0
    return 1 + (n_samples - params.frame_len) // params.hop


def condition(w: Waveform, target_duration: float) -> Waveform:
    """Zero-pad or truncate at the end to exactly round(duration * sr) samples."""
    if target_duration <= 0:
        raise ValueError(f"target_duration must be positive, got {target_duration}")
    if w.samples.size == 0:
        raise EmptyInputError("cannot condition an empty waveform")
    n_target = int(round(target_duration * w.sample_rate))
    x = w.samples
    if x.size >= n_target:
        out = x[:n_target].copy()
    else:
        out = np.zeros(n_target, dtype=np.float64)
        out[:x.size] = x
    return Waveform(samples=out, sample_rate=w.sample_rate)


def pre_emphasize(w: Waveform, alpha: float) -> Waveform:
    """y[0] = (1 - alpha) * x[0]; y[t] = x[t] - alpha * x[t-1]."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    if w.samples.size == 0:
        raise EmptyInputError("cannot pre-emphasize an empty waveform")
    x = w.samples
    y = np.empty_like(x)
    y[0] = x[0] * (1.0 - alpha)
    y[1:] = x[1:] - alpha * x[:-1]
    return Waveform(samples=y, sample_rate=w.sample_rate)


def _window(kind: str, length: int) -> np.ndarray:
    if kind == "hann":
        return np.hanning(length)
    if kind == "hamming":
        return np.hamming(length)
    return np.ones(length)


def stft_power(w: Waveform, params: FrameParams) -> PowerSpectrogram:
    """Frame, window, zero-pad to n_fft and take |rFFT|^2 per frame.

    Frame t covers samples [t*hop, t*hop + frame_len); the number of frames
    is 1 + floor((N - frame_len) / hop).
    """
    x = w.samples
    if x.size < params.frame_len:
        raise TooShortError(
            f"waveform of {x.size} samples is shorter than one frame ({params.frame_len})")
    n_frames = frame_count(x.size, params)
    offsets = params.hop * np.arange(n_frames)
    idx = offsets[:, None] + np.arange(params.frame_len)[None, :]
    frames = x[idx] * _window(params.window, params.frame_len)[None, :]
    spectrum = np.fft.rfft(frames, n=params.n_fft, axis=1)
    power = np.abs(spectrum) ** 2
    return PowerSpectrogram(values=power.T.copy(), params=params, sample_rate=w.sample_rate)

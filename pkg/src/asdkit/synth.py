"""Synthetic machine-sound corpus generator.

Produces a DCASE-layout directory of WAV clips small enough for desk-scale
experiments.  Normal clips are machine-like tonal beds (a handful of
harmonics with per-clip phase and gain jitter) over a broadband noise
floor; target-domain clips get a shifted noise floor.  Anomalies add one
of three perturbations:

* ``tone-shift``  -- all harmonics shifted up by a random few percent.
* ``transient``   -- short high-energy bursts at random positions.
* ``band-noise``  -- a narrow noise band at a center frequency drawn
                     uniformly from the full 0-8 kHz range.

Everything is derived from a single seed through per-clip seed sequences,
so a fixed seed reproduces the corpus byte for byte regardless of
generation order.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import ClipMetadata, format_clip_name, write_manifest, write_wav

ANOMALY_KINDS = ("tone-shift", "transient", "band-noise")

MACHINE_NAMES = ("fan", "gearbox", "valve", "slider", "bearing",
                 "pump", "compressor", "blower", "motor")

_SPLIT_CODE = {"train": 0, "test": 1}
_DOMAIN_CODE = {"source": 1, "target": 2}
_CONDITION_CODE = {"normal": 1, "anomaly": 2}


@dataclass(frozen=True)
class SynthSpec:
    machines: int = 3
    train_per_machine: int = 60
    test_per_machine: int = 40
    anomaly_kind: str = "transient"
    domain_shift: float = 0.5
    seed: int = 0
    duration: float = 10.0
    sample_rate: int = 16000
    target_fraction: float = 1.0 / 6.0   # share of train clips in the target domain
    anomaly_strength: float = 1.0        # scales the perturbation amplitude

    def __post_init__(self):
        if self.machines < 1:
            raise ValueError(f"need at least one machine, got {self.machines}")
        if self.train_per_machine < 2:
            raise ValueError(
                f"need at least 2 train clips per machine, got {self.train_per_machine}")
        if self.test_per_machine < 4:
            raise ValueError(
                f"need at least 4 test clips per machine, got {self.test_per_machine}")
        if self.anomaly_kind not in ANOMALY_KINDS:
            raise ValueError(f"anomaly kind {self.anomaly_kind!r} not in {ANOMALY_KINDS}")
        if self.domain_shift < 0:
            raise ValueError(f"domain shift must be >= 0, got {self.domain_shift}")
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample rate must be positive")
        if self.anomaly_strength <= 0:
            raise ValueError(f"anomaly strength must be positive, got {self.anomaly_strength}")


def machine_name(index: int) -> str:
    if index < len(MACHINE_NAMES):
        return MACHINE_NAMES[index]
    return f"machine{index:02d}"


@dataclass(frozen=True)
class _MachineProfile:
    harmonics: tuple          # (freq_hz, amplitude) pairs
    noise_amp: float
    has_attributes: bool


def _machine_profile(spec: SynthSpec, machine_idx: int) -> _MachineProfile:
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(spec.seed, 0xA5, machine_idx)))
    f0 = rng.uniform(90.0, 320.0)
    n_harm = int(rng.integers(3, 7))
    harmonics = []
    for k in range(1, n_harm + 1):
        freq = f0 * k
        if freq >= spec.sample_rate / 2.0 * 0.95:
            break
        amp = 0.06 / k ** 0.8 * rng.uniform(0.7, 1.0)
        harmonics.append((freq, amp))
    noise_amp = rng.uniform(0.05, 0.07)
    return _MachineProfile(harmonics=tuple(harmonics), noise_amp=noise_amp,
                           has_attributes=machine_idx % 2 == 0)


def _clip_rng(spec: SynthSpec, meta: ClipMetadata, machine_idx: int) -> np.random.Generator:
    entropy = (spec.seed, machine_idx, _SPLIT_CODE[meta.split],
               _DOMAIN_CODE[meta.domain], _CONDITION_CODE[meta.condition], meta.index)
    return np.random.default_rng(np.random.SeedSequence(entropy=entropy))


def _render_clip(spec: SynthSpec, profile: _MachineProfile,
                 meta: ClipMetadata, machine_idx: int) -> np.ndarray:
    rng = _clip_rng(spec, meta, machine_idx)
    n = int(round(spec.duration * spec.sample_rate))
    t = np.arange(n, dtype=np.float64) / spec.sample_rate

    freq_scale = 1.0
    if meta.condition == "anomaly" and spec.anomaly_kind == "tone-shift":
        freq_scale = 1.0 + spec.anomaly_strength * rng.uniform(0.05, 0.12)

    gain = rng.uniform(0.97, 1.03)
    x = np.zeros(n, dtype=np.float64)
    for freq, amp in profile.harmonics:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        x += gain * amp * np.sin(2.0 * np.pi * freq * freq_scale * t + phase)

    noise_amp = profile.noise_amp
    if meta.domain == "target":
        noise_amp *= 1.0 + spec.domain_shift
    x += noise_amp * rng.standard_normal(n)

    if meta.condition == "anomaly":
        strength = spec.anomaly_strength
        if spec.anomaly_kind == "transient":
            # a knocking fault: damped tone bursts recurring through the clip
            rate = rng.uniform(1.0, 2.0)
            n_bursts = max(1, int(round(spec.duration * rate)))
            burst_len = int(0.08 * spec.sample_rate)
            tau = 0.02 * spec.sample_rate
            for _ in range(n_bursts):
                start = int(rng.integers(0, n - burst_len))
                ring_freq = rng.uniform(500.0, spec.sample_rate / 2.0 * 0.9)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                k = np.arange(burst_len)
                ring = np.sin(2.0 * np.pi * ring_freq * k / spec.sample_rate + phase)
                x[start:start + burst_len] += 0.5 * strength * np.exp(-k / tau) * ring
        elif spec.anomaly_kind == "band-noise":
            center = rng.uniform(200.0, spec.sample_rate / 2.0 - 200.0)
            for offset in np.linspace(-30.0, 30.0, 7):
                phase = rng.uniform(0.0, 2.0 * np.pi)
                x += 0.012 * strength * np.sin(2.0 * np.pi * (center + offset) * t + phase)

    peak = np.max(np.abs(x))
    if peak > 0.98:
        x *= 0.98 / peak
    return x


def _plan_metadata(spec: SynthSpec, machine_idx: int,
                   profile: _MachineProfile) -> list[ClipMetadata]:
    """Deterministic clip list for one machine: train then test."""
    machine = machine_name(machine_idx)
    metas = []

    def add(split, domain, condition, index):
        attributes = ()
        if profile.has_attributes:
            rng = np.random.default_rng(np.random.SeedSequence(
                entropy=(spec.seed, 0x5E, machine_idx, _SPLIT_CODE[split],
                         _DOMAIN_CODE[domain], index)))
            attributes = (("spd", str(rng.choice(("28V", "31V")))),)
        metas.append(ClipMetadata(
            machine_type=machine, section=0, split=split, domain=domain,
            condition=condition, index=index, attributes=attributes))

    n_target = max(1, int(round(spec.train_per_machine * spec.target_fraction)))
    n_source = spec.train_per_machine - n_target
    index = 1
    for _ in range(n_source):
        add("train", "source", "normal", index)
        index += 1
    for _ in range(n_target):
        add("train", "target", "normal", index)
        index += 1

    base, extra = divmod(spec.test_per_machine, 4)
    cells = [("source", "normal"), ("source", "anomaly"),
             ("target", "normal"), ("target", "anomaly")]
    index = 1
    for cell_idx, (domain, condition) in enumerate(cells):
        count = base + (1 if cell_idx < extra else 0)
        for _ in range(count):
            add("test", domain, condition, index)
            index += 1
    return metas


def generate_corpus(spec: SynthSpec, out_dir) -> list[str]:
    """Write the corpus under ``out_dir``; returns sorted clip ids."""
    out_dir = Path(out_dir)
    clip_ids = []
    for machine_idx in range(spec.machines):
        profile = _machine_profile(spec, machine_idx)
        for meta in _plan_metadata(spec, machine_idx, profile):
            clip_id = format_clip_name(meta)
            path = out_dir / clip_id
            path.parent.mkdir(parents=True, exist_ok=True)
            samples = _render_clip(spec, profile, meta, machine_idx)
            write_wav(path, samples, spec.sample_rate, encoding="pcm16")
            clip_ids.append(clip_id)
    clip_ids.sort()
    write_manifest(clip_ids, out_dir / "manifest.txt")
    return clip_ids

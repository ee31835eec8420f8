"""End-to-end orchestration: corpus -> features -> enhancement -> embeddings
-> detectors -> scores -> report.

Features are cached content-addressed: the cache key hashes the clip bytes
together with the configuration subset that feeds the stage, so a config
change invalidates exactly the stages it touches (changing enhancement does
not re-run the STFT).  All per-clip work is pure, which makes clip-level
parallelism safe; outputs are assembled in sorted clip order so results are
byte-identical for any worker count.
"""

import functools
import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import backend, metrics
from .corpus import index_corpus, read_wav, write_manifest
from .dsp import FrameParams, condition, pre_emphasize, stft_power
from .embed import Embedding, EmbeddingSet, baseline_embed, read_embeddings
from .enhance import SimamParams, enhance, parse_mode_map
from .filterbank import (BANK_KINDS, LOG_FLOOR, LogMelSpectrogram, apply_log_fbank,
                         build_bank, read_feature, write_feature)

FEATURE_CHOICES = BANK_KINDS
ENHANCE_CHOICES = ("none", "global", "local", "customized")


class PipelineError(RuntimeError):
    """A clip failed and the run is strict."""


@dataclass(frozen=True)
class PipelineConfig:
    corpus_root: Path = Path(".")
    out_dir: Path = Path("out")
    cache_dir: Path | None = None           # defaults to out_dir / "cache"
    feature: str = "mfb"
    frame: FrameParams = field(default_factory=FrameParams)
    n_filters: int = 128
    f_min: float = 0.0
    f_max: float | None = None              # None -> Nyquist
    log_floor: float = LOG_FLOOR
    area_normalize: bool = False
    enhance_mode: str = "global"            # none | global | local | customized
    simam: SimamParams = field(default_factory=SimamParams)
    bands: int = 16
    stats: str = "batch"
    normalize: bool = True
    pauc_p: float = 0.1
    dev_machines: tuple = ()
    sample_rate: int = 16000
    jobs: int = 1
    strict: bool = True
    embeddings_path: Path | None = None

    def __post_init__(self):
        if self.feature not in FEATURE_CHOICES:
            raise ValueError(f"feature {self.feature!r} not in {FEATURE_CHOICES}")
        if self.enhance_mode not in ENHANCE_CHOICES:
            raise ValueError(f"enhance {self.enhance_mode!r} not in {ENHANCE_CHOICES}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")

    @property
    def resolved_f_max(self) -> float:
        return self.sample_rate / 2.0 if self.f_max is None else self.f_max

    @property
    def resolved_cache_dir(self) -> Path:
        return self.cache_dir if self.cache_dir is not None else self.out_dir / "cache"


# ---------------------------------------------------------------------------
# Configuration file: flat key=value lines, namespaced keys, one per line
# ---------------------------------------------------------------------------

def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_tile(value: str) -> tuple[int, int]:
    parts = value.lower().split("x")
    if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
        raise ValueError(f"tile must look like 32x32, got {value!r}")
    tile = (int(parts[0]), int(parts[1]))
    if min(tile) < 1:
        raise ValueError(f"tile dims must be >= 1, got {value!r}")
    return tile


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; blank lines and ``#`` comments allowed."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
    return mapping


def config_from_mapping(mapping: dict) -> PipelineConfig:
    """Build a config from namespaced keys, validating names and values."""
    mapping = dict(mapping)

    def take(key, conv, default):
        if key not in mapping:
            return default
        raw = mapping.pop(key)
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"config key {key}: {exc}") from exc

    frame = FrameParams(
        frame_len=take("dsp.frame_len", int, 400),
        hop=take("dsp.hop", int, 160),
        n_fft=take("dsp.n_fft", int, 512),
        pre_emphasis=take("dsp.pre_emphasis", float, 0.97),
        window=take("dsp.window", str, "hann"),
        target_duration=take("dsp.target_duration", float, 10.0),
    )
    mode_map: dict = {}
    default_mode = take("simam.default", str, "global")
    mode_map_path = take("simam.mode_map", str, "")
    if mode_map_path:
        mode_map, file_default = parse_mode_map(mode_map_path)
        if "simam.default" not in mapping:
            default_mode = file_default
    simam = SimamParams(
        e_lambda=take("simam.lambda", float, 1e-4),
        mode="global",
        tile=take("simam.tile", parse_tile, (32, 32)),
        mode_map=mode_map,
        default_mode=default_mode,
    )
    enhance_mode = take("simam.mode", str, "global")
    if enhance_mode != "none":
        simam = replace(simam, mode=enhance_mode)

    f_max_raw = take("fbank.f_max", str, "")
    config = PipelineConfig(
        corpus_root=Path(take("paths.corpus", str, ".")),
        out_dir=Path(take("paths.out", str, "out")),
        cache_dir=Path(mapping.pop("paths.cache")) if "paths.cache" in mapping else None,
        feature=take("fbank.kind", str, "mfb"),
        frame=frame,
        n_filters=take("fbank.n_filters", int, 128),
        f_min=take("fbank.f_min", float, 0.0),
        f_max=float(f_max_raw) if f_max_raw else None,
        log_floor=take("fbank.log_floor", float, LOG_FLOOR),
        area_normalize=take("fbank.area_normalize", _parse_bool, False),
        enhance_mode=enhance_mode,
        simam=simam,
        bands=take("embed.bands", int, 16),
        stats=take("backend.stats", str, "batch"),
        normalize=take("backend.normalize", _parse_bool, True),
        pauc_p=take("metrics.pauc_p", float, 0.1),
        dev_machines=tuple(
            m for m in take("metrics.dev_machines", str, "").split(",") if m),
        sample_rate=take("run.sample_rate", int, 16000),
        jobs=take("run.jobs", int, 1),
        strict=take("run.strict", _parse_bool, True),
        embeddings_path=Path(mapping.pop("paths.embeddings"))
        if "paths.embeddings" in mapping else None,
    )
    if mapping:
        unknown = ", ".join(sorted(mapping))
        raise ValueError(f"unknown config keys: {unknown}")
    if config.stats not in backend.STATS_MODES:
        raise ValueError(f"backend.stats must be one of {backend.STATS_MODES}")
    return config


# ---------------------------------------------------------------------------
# Cached feature extraction
# ---------------------------------------------------------------------------

def _feature_stage_tag(config: PipelineConfig) -> str:
    f = config.frame
    return "|".join([
        "feature-v1", config.feature, str(config.n_filters),
        repr(config.f_min), repr(config.resolved_f_max), repr(config.log_floor),
        str(config.area_normalize), str(config.sample_rate),
        str(f.frame_len), str(f.hop), str(f.n_fft), repr(f.pre_emphasis),
        f.window, repr(f.target_duration),
    ])


def _enhance_stage_tag(config: PipelineConfig, resolved_mode: str) -> str:
    s = config.simam
    return "|".join([
        "enhance-v1", resolved_mode, repr(s.e_lambda),
        f"{s.tile[0]}x{s.tile[1]}",
    ])


def _resolved_enhance_mode(config: PipelineConfig, machine_type: str) -> str:
    if config.enhance_mode != "customized":
        return config.enhance_mode
    return config.simam.mode_map.get(machine_type, config.simam.default_mode)


@functools.lru_cache(maxsize=8)
def _bank_for(feature, n_filters, f_min, f_max, n_fft, sample_rate, area_normalize):
    return build_bank(feature, n_filters, f_min, f_max, n_fft, sample_rate,
                      area_normalize=area_normalize)


def _atomic_write_feature(feature: LogMelSpectrogram, path: Path) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    write_feature(feature, tmp)
    os.replace(tmp, path)


def _raw_feature(config: PipelineConfig, wav_path: Path, wav_bytes: bytes) -> LogMelSpectrogram:
    key = hashlib.sha256(wav_bytes + _feature_stage_tag(config).encode()).hexdigest()
    cache_path = config.resolved_cache_dir / "features" / f"{key}.asdf"
    if cache_path.exists():
        return read_feature(cache_path)
    waveform = read_wav(wav_path)
    if waveform.sample_rate != config.sample_rate:
        raise PipelineError(
            f"{wav_path}: sample rate {waveform.sample_rate} != configured "
            f"{config.sample_rate}; resampling is not supported")
    waveform = condition(waveform, config.frame.target_duration)
    waveform = pre_emphasize(waveform, config.frame.pre_emphasis)
    spec = stft_power(waveform, config.frame)
    bank = _bank_for(config.feature, config.n_filters, config.f_min,
                     config.resolved_f_max, config.frame.n_fft,
                     config.sample_rate, config.area_normalize)
    feature = apply_log_fbank(spec, bank, config.log_floor)
    cache_path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_feature(feature, cache_path)
    # hand back the float32-rounded values so warm and cold runs agree
    return read_feature(cache_path)


def clip_feature(config: PipelineConfig, clip_id: str) -> LogMelSpectrogram:
    """Enhanced (per config) feature for one clip, via the cache."""
    wav_path = config.corpus_root / clip_id
    wav_bytes = wav_path.read_bytes()
    machine_type = clip_id.split("/", 1)[0]
    resolved = _resolved_enhance_mode(config, machine_type)

    if resolved == "none":
        return _raw_feature(config, wav_path, wav_bytes)

    stage_tag = (_feature_stage_tag(config) + _enhance_stage_tag(config, resolved)).encode()
    key = hashlib.sha256(wav_bytes + stage_tag).hexdigest()
    cache_path = config.resolved_cache_dir / "enhanced" / f"{key}.asdf"
    if cache_path.exists():
        return read_feature(cache_path)

    raw = _raw_feature(config, wav_path, wav_bytes)
    params = replace(config.simam, mode=resolved)
    enhanced = enhance(raw, machine_type, params)
    if config.enhance_mode == "customized":
        enhanced = replace(enhanced, enhancement="customized")
    cache_path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_feature(enhanced, cache_path)
    return read_feature(cache_path)


def _extract_task(args) -> tuple[str, str, str]:
    config, clip_id = args
    try:
        feature = clip_feature(config, clip_id)
        out_path = config.out_dir / "features" / Path(clip_id).with_suffix(".asdf")
        out_path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write_feature(feature, out_path)
        return clip_id, "ok", str(out_path)
    except Exception as exc:  # collected; re-raised by the caller in strict mode
        return clip_id, "error", f"{type(exc).__name__}: {exc}"


def _embed_task(args) -> tuple[str, str, object]:
    config, clip_id = args
    try:
        feature = clip_feature(config, clip_id)
        embedding = baseline_embed(feature, config.bands, clip_id=clip_id)
        return clip_id, "ok", embedding.vector
    except Exception as exc:
        return clip_id, "error", f"{type(exc).__name__}: {exc}"


def _parallel_map(task, items, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [task(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(task, items, chunksize=max(1, len(items) // (jobs * 4))))


def _collect(results, strict: bool) -> tuple[dict, list[str]]:
    good, errors = {}, []
    for clip_id, status, payload in results:
        if status == "ok":
            good[clip_id] = payload
        else:
            errors.append(f"{clip_id}: {payload}")
    if errors and strict:
        raise PipelineError("; ".join(errors))
    return good, errors


@dataclass
class ExtractResult:
    feature_paths: dict
    manifest_path: Path
    errors: list


def run_extract(config: PipelineConfig) -> ExtractResult:
    """Write one feature file per clip plus a manifest of processed clips."""
    metas = index_corpus(config.corpus_root)
    clip_ids = [m.clip_id for m in metas]
    results = _parallel_map(_extract_task, [(config, cid) for cid in clip_ids], config.jobs)
    good, errors = _collect(results, config.strict)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = config.out_dir / "manifest.txt"
    write_manifest(sorted(good), manifest_path)
    return ExtractResult(feature_paths={k: Path(v) for k, v in sorted(good.items())},
                         manifest_path=manifest_path, errors=errors)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    summary: metrics.SummaryReport
    score_paths: dict
    report_text_path: Path
    report_kv_path: Path
    warnings: list


def compute_embeddings(config: PipelineConfig, clip_ids) -> tuple[dict, list[str]]:
    """clip_id -> embedding vector, computed or imported per config."""
    if config.embeddings_path is not None:
        imported = read_embeddings(config.embeddings_path)
        table = {e.clip_id: e.vector for e in imported.entries}
        missing = [cid for cid in clip_ids if cid not in table]
        if missing:
            raise PipelineError(
                f"imported embeddings missing {len(missing)} clips, e.g. {missing[0]}")
        return {cid: table[cid] for cid in clip_ids}, []
    results = _parallel_map(_embed_task, [(config, cid) for cid in clip_ids], config.jobs)
    return _collect(results, config.strict)


def _embedding_set(vectors: dict, clip_ids, provenance: str) -> EmbeddingSet:
    entries = [Embedding(vector=vectors[cid], clip_id=cid) for cid in clip_ids]
    dim = entries[0].vector.size
    return EmbeddingSet(dim=dim, entries=entries, provenance=provenance)


def run_eval(config: PipelineConfig) -> EvalResult:
    """Fit per-machine dual-domain detectors on train clips, score the test
    split, and write per-machine CSVs plus text and key=value reports."""
    metas = index_corpus(config.corpus_root)
    train = [m for m in metas if m.split == "train"]
    test = [m for m in metas if m.split == "test"]
    if not train or not test:
        raise PipelineError("corpus needs both train and test splits")
    unlabeled = [m.clip_id for m in test if m.condition == "unknown"]
    if unlabeled:
        raise PipelineError(
            f"evaluation needs labeled test clips; {len(unlabeled)} unknown, "
            f"e.g. {unlabeled[0]}")

    provenance = "imported" if config.embeddings_path is not None else "baseline"
    vectors, embed_errors = compute_embeddings(config, sorted(m.clip_id for m in metas))

    machines = sorted({m.machine_type for m in metas})
    scores_dir = config.out_dir / "scores"
    scores_dir.mkdir(parents=True, exist_ok=True)

    reports = {}
    score_paths = {}
    warnings = [f"embedding failed: {err}" for err in embed_errors]
    for machine in machines:
        train_src = sorted(m.clip_id for m in train
                           if m.machine_type == machine and m.domain == "source"
                           and m.clip_id in vectors)
        train_tgt = sorted(m.clip_id for m in train
                           if m.machine_type == machine and m.domain == "target"
                           and m.clip_id in vectors)
        test_ids = sorted(m.clip_id for m in test
                          if m.machine_type == machine and m.clip_id in vectors)
        missing = [d for d, ids in (("source", train_src), ("target", train_tgt)) if not ids]
        if missing or not test_ids:
            what = f"missing {'/'.join(missing)} train domain" if missing else "no test clips"
            warnings.append(f"{machine}: skipped ({what})")
            continue

        pair = backend.DetectorPair(
            machine_type=machine,
            source_refs=_embedding_set(vectors, train_src, provenance),
            target_refs=_embedding_set(vectors, train_tgt, provenance))
        test_set = _embedding_set(vectors, test_ids, provenance)
        clip_scores, _ = backend.score_batch(
            pair, test_set, stats=config.stats, normalize=config.normalize)

        csv_path = scores_dir / f"{machine}.csv"
        backend.write_scores_csv(clip_scores, csv_path)
        score_paths[machine] = csv_path

        by_id = {m.clip_id: m for m in test if m.machine_type == machine}
        labeled = [
            metrics.LabeledScore(clip_id=s.clip_id, score=s.final,
                                 condition=by_id[s.clip_id].condition,
                                 domain=by_id[s.clip_id].domain,
                                 machine_type=machine)
            for s in clip_scores
        ]
        reports[machine] = metrics.machine_report(labeled, config.pauc_p)

    if not reports:
        raise PipelineError("every machine was skipped; nothing to report")
    summary = metrics.summarize(
        reports, dev_machines=config.dev_machines or None)

    report_text_path = config.out_dir / "report.txt"
    report_kv_path = config.out_dir / "report.kv"
    text = metrics.render_report_text(summary, warnings)
    kv = metrics.render_report_kv(summary, warnings)
    report_text_path.write_text(text, encoding="utf-8")
    report_kv_path.write_text(kv, encoding="utf-8")
    return EvalResult(summary=summary, score_paths=score_paths,
                      report_text_path=report_text_path,
                      report_kv_path=report_kv_path, warnings=warnings)

"""Command-line interface.

Subcommands: extract, embed, fit, score, eval, gen-synth, inspect.
Exit codes are a stable contract: 0 success, 1 runtime failure, 2 usage
error.  Every config-file key can be overridden on the command line, either
through a named flag or through repeated ``--set key=value``.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import backend, pipeline, synth
from .corpus import parse_clip_name
from .embed import (Embedding, EmbeddingSet, EMBEDDING_MAGIC, read_embeddings,
                    write_embeddings)
from .filterbank import FEATURE_MAGIC, read_feature
from .metrics import render_report_text
from .synth import ANOMALY_KINDS, SynthSpec


def _jobs(value: str) -> int:
    if value == "max":
        return os.cpu_count() or 1
    try:
        jobs = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"jobs must be a positive integer or 'max', got {value!r}")
    if jobs < 1:
        raise argparse.ArgumentTypeError(f"jobs must be >= 1, got {jobs}")
    return jobs


def _tile(value: str) -> str:
    try:
        pipeline.parse_tile(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))
    return value


def _positive_float(value: str) -> str:
    try:
        if float(value) <= 0:
            raise ValueError
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value!r}")
    return value


def _pauc_p(value: str) -> str:
    try:
        p = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {value!r}")
    if not 0.0 < p <= 1.0:
        raise argparse.ArgumentTypeError(f"pauc-p must be in (0, 1], got {value}")
    return value


def _positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}")
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _setting(value: str) -> tuple[str, str]:
    if "=" not in value:
        raise argparse.ArgumentTypeError(f"--set expects key=value, got {value!r}")
    key, _, val = value.partition("=")
    return key.strip(), val.strip()


# maps a named flag's dest to its config key
_FLAG_KEYS = {
    "corpus": "paths.corpus",
    "out": "paths.out",
    "cache": "paths.cache",
    "embeddings": "paths.embeddings",
    "jobs": "run.jobs",
    "feature": "fbank.kind",
    "enhance": "simam.mode",
    "tile": "simam.tile",
    "simam_lambda": "simam.lambda",
    "mode_map": "simam.mode_map",
    "bands": "embed.bands",
    "stats": "backend.stats",
    "pauc_p": "metrics.pauc_p",
}


def _add_pipeline_flags(sp, *, corpus: bool = True, embeddings: bool = False) -> None:
    sp.add_argument("--config", type=Path, help="key=value configuration file")
    if corpus:
        sp.add_argument("--corpus", type=Path, help="corpus root directory")
    if embeddings:
        sp.add_argument("--embeddings", type=Path, help="embedding file (ASDE)")
    sp.add_argument("--out", type=Path, help="output directory")
    sp.add_argument("--cache", type=Path, help="cache directory (default: <out>/cache)")
    sp.add_argument("--jobs", type=_jobs, default=None,
                    help="worker processes, or 'max' for all cores")
    sp.add_argument("--feature", choices=pipeline.FEATURE_CHOICES,
                    help="filter bank kind")
    sp.add_argument("--enhance", choices=pipeline.ENHANCE_CHOICES,
                    help="feature enhancement mode")
    sp.add_argument("--tile", type=_tile, help="local enhancement tile, e.g. 32x32")
    sp.add_argument("--lambda", dest="simam_lambda", type=_positive_float,
                    help="enhancement regularizer")
    sp.add_argument("--mode-map", dest="mode_map", type=Path,
                    help="machine_type=global|local file for customized enhancement")
    sp.add_argument("--bands", type=_positive_int, help="embedding band count")
    sp.add_argument("--stats", choices=backend.STATS_MODES,
                    help="normalization statistics population")
    sp.add_argument("--pauc-p", dest="pauc_p", type=_pauc_p,
                    help="max false-positive rate for pAUC")
    sp.add_argument("--set", dest="settings", type=_setting, action="append",
                    default=[], metavar="KEY=VALUE",
                    help="override any config key (repeatable)")


def _build_config(args) -> pipeline.PipelineConfig:
    mapping = pipeline.read_config_file(args.config) if args.config else {}
    for dest, key in _FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            mapping[key] = str(value)
    for key, value in args.settings:
        mapping[key] = value
    return pipeline.config_from_mapping(mapping)


def cmd_extract(args) -> int:
    config = _build_config(args)
    result = pipeline.run_extract(config)
    for warning in result.errors:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {len(result.feature_paths)} feature files under "
          f"{config.out_dir / 'features'}")
    return 0


def cmd_embed(args) -> int:
    config = _build_config(args)
    metas = pipeline.index_corpus(config.corpus_root)
    vectors, errors = pipeline.compute_embeddings(
        config, sorted(m.clip_id for m in metas))
    for err in errors:
        print(f"warning: {err}", file=sys.stderr)
    if not vectors:
        print("error: no embeddings could be computed", file=sys.stderr)
        return 1
    dim = next(iter(vectors.values())).size
    entries = [Embedding(vector=v, clip_id=cid) for cid, v in sorted(vectors.items())]
    config.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = config.out_dir / "embeddings.asde"
    write_embeddings(EmbeddingSet(dim=dim, entries=entries, provenance="baseline"), out_path)
    print(f"wrote {len(entries)} embeddings (dim {dim}) to {out_path}")
    return 0


def _split_by_machine_domain(embedding_set: EmbeddingSet):
    groups: dict = {}
    for entry in embedding_set.entries:
        meta = parse_clip_name(entry.clip_id)
        groups.setdefault((meta.machine_type, meta.split, meta.domain), []).append(entry)
    return groups


def cmd_fit(args) -> int:
    config = _build_config(args)
    if config.embeddings_path is None:
        print("error: fit requires --embeddings", file=sys.stderr)
        return 2
    embedding_set = read_embeddings(config.embeddings_path)
    groups = _split_by_machine_domain(embedding_set)
    machines = sorted({k[0] for k in groups})
    refs_dir = config.out_dir / "refs"
    refs_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for machine in machines:
        for domain in ("source", "target"):
            entries = groups.get((machine, "train", domain))
            if not entries:
                print(f"warning: {machine}: no train/{domain} embeddings, skipped",
                      file=sys.stderr)
                continue
            entries = sorted(entries, key=lambda e: e.clip_id)
            out_path = refs_dir / f"{machine}.{domain}.asde"
            write_embeddings(EmbeddingSet(dim=embedding_set.dim, entries=entries,
                                          provenance=embedding_set.provenance), out_path)
            written += 1
    print(f"wrote {written} reference sets under {refs_dir}")
    return 0


def cmd_score(args) -> int:
    config = _build_config(args)
    if config.embeddings_path is None:
        print("error: score requires --embeddings", file=sys.stderr)
        return 2
    refs_dir = Path(args.refs)
    embedding_set = read_embeddings(config.embeddings_path)
    groups = _split_by_machine_domain(embedding_set)
    machines = sorted({k[0] for k in groups if k[1] == "test"})
    if not machines:
        print("error: no test-split embeddings to score", file=sys.stderr)
        return 1
    scores_dir = config.out_dir / "scores"
    scores_dir.mkdir(parents=True, exist_ok=True)
    scored = 0
    for machine in machines:
        ref_sets = {}
        for domain in ("source", "target"):
            path = refs_dir / f"{machine}.{domain}.asde"
            if not path.exists():
                print(f"warning: {machine}: missing {path.name}, skipped", file=sys.stderr)
                break
            ref_sets[domain] = read_embeddings(path)
        if len(ref_sets) < 2:
            continue
        tests = sorted(
            groups.get((machine, "test", "source"), [])
            + groups.get((machine, "test", "target"), []),
            key=lambda e: e.clip_id)
        test_set = EmbeddingSet(dim=embedding_set.dim, entries=tests,
                                provenance=embedding_set.provenance)
        pair = backend.DetectorPair(machine_type=machine,
                                    source_refs=ref_sets["source"],
                                    target_refs=ref_sets["target"])
        clip_scores, _ = backend.score_batch(
            pair, test_set, stats=config.stats, normalize=config.normalize)
        backend.write_scores_csv(clip_scores, scores_dir / f"{machine}.csv")
        scored += 1
    print(f"wrote score CSVs for {scored} machines under {scores_dir}")
    return 0


def cmd_eval(args) -> int:
    config = _build_config(args)
    result = pipeline.run_eval(config)
    sys.stdout.write(render_report_text(result.summary, result.warnings))
    print(f"report written to {result.report_text_path}")
    return 0


def cmd_gen_synth(args) -> int:
    try:
        spec = SynthSpec(
            machines=args.machines,
            train_per_machine=args.clips_per_machine,
            test_per_machine=args.test_clips_per_machine,
            anomaly_kind=args.anomaly_kind,
            anomaly_strength=args.anomaly_strength,
            domain_shift=args.domain_shift,
            seed=args.seed,
            duration=args.duration,
        )
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    clip_ids = synth.generate_corpus(spec, args.out)
    print(f"wrote {len(clip_ids)} clips under {args.out}")
    return 0


def cmd_inspect(args) -> int:
    path = Path(args.path)
    magic = path.read_bytes()[:4]
    if magic == FEATURE_MAGIC:
        feature = read_feature(path)
        values = feature.values
        print(f"feature file {path}")
        print(f"kind: {feature.kind}")
        print(f"enhancement: {feature.enhancement}")
        print(f"n_filters: {values.shape[0]}")
        print(f"frames: {values.shape[1]}")
        print(f"min: {values.min():.6f}")
        print(f"max: {values.max():.6f}")
        print(f"mean: {values.mean():.6f}")
    elif magic == EMBEDDING_MAGIC:
        embedding_set = read_embeddings(path)
        print(f"embedding file {path}")
        print(f"dim: {embedding_set.dim}")
        print(f"count: {len(embedding_set.entries)}")
        norms = [float(np.linalg.norm(e.vector)) for e in embedding_set.entries]
        if norms:
            print(f"norm min: {min(norms):.6f}")
            print(f"norm max: {max(norms):.6f}")
        for entry in embedding_set.entries[:5]:
            print(f"  {entry.clip_id}")
        if len(embedding_set.entries) > 5:
            print(f"  ... {len(embedding_set.entries) - 5} more")
    else:
        raise ValueError(f"{path}: unknown magic {magic!r}; expected ASDF or ASDE")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asdkit",
        description="Machine-sound anomaly detection: filter-bank features, "
                    "parameter-free enhancement, dual-domain k-NN scoring.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("extract", help="write per-clip feature files")
    _add_pipeline_flags(sp)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("embed", help="compute baseline embeddings for a corpus")
    _add_pipeline_flags(sp)
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("fit", help="split train embeddings into per-machine reference sets")
    _add_pipeline_flags(sp, corpus=False, embeddings=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("score", help="score test embeddings against fitted references")
    _add_pipeline_flags(sp, corpus=False, embeddings=True)
    sp.add_argument("--refs", type=Path, required=True, help="reference set directory")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("eval", help="end-to-end evaluation with metrics report")
    _add_pipeline_flags(sp, embeddings=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gen-synth", help="generate a synthetic DCASE-layout corpus")
    sp.add_argument("--out", type=Path, required=True, help="corpus output directory")
    sp.add_argument("--machines", type=_positive_int, default=3)
    sp.add_argument("--clips-per-machine", dest="clips_per_machine",
                    type=_positive_int, default=60, help="train clips per machine")
    sp.add_argument("--test-clips-per-machine", dest="test_clips_per_machine",
                    type=_positive_int, default=40)
    sp.add_argument("--anomaly-kind", choices=ANOMALY_KINDS, default="transient")
    sp.add_argument("--anomaly-strength", dest="anomaly_strength", type=float,
                    default=1.0, help="perturbation amplitude multiplier")
    sp.add_argument("--domain-shift", type=float, default=0.5)
    sp.add_argument("--duration", type=float, default=10.0, help="clip length in seconds")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gen_synth)

    sp = sub.add_parser("inspect", help="dump a feature or embedding file as text")
    sp.add_argument("path", help="ASDF or ASDE file")
    sp.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

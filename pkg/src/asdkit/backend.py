"""Dual-domain nearest-neighbor anomaly scoring.

Each machine type gets two k=1 detectors, one over source-domain reference
embeddings and one over target-domain references.  A test clip's raw score
per domain is the cosine distance to its nearest reference.  Raw scores are
z-normalized per domain and the minimum of the two normalized scores is the
clip's final anomaly score, which makes the two domains' score scales
comparable and softens domain shift.

Normalization statistics come from the scored test batch by default
(``stats="batch"``); ``stats="loo"`` instead uses leave-one-out scores of
the reference sets themselves.
"""

from dataclasses import dataclass

import numpy as np

from .embed import Embedding, EmbeddingSet

STATS_MODES = ("batch", "loo")

_SIGMA_GUARD = 1e-12


class ZeroVectorError(ValueError):
    """Cosine distance is undefined for a zero vector."""


class DimensionError(ValueError):
    """Embedding dimensions disagree."""


class EmptyBatchError(ValueError):
    """No test clips to score."""


@dataclass
class DomainStats:
    mu_s: float
    sigma_s: float
    mu_t: float
    sigma_t: float


@dataclass
class AnomalyScore:
    clip_id: str
    raw_source: float
    raw_target: float
    norm_source: float
    norm_target: float
    final: float


@dataclass
class DetectorPair:
    """Immutable per-machine-type reference sets; both domains required."""

    machine_type: str
    source_refs: EmbeddingSet
    target_refs: EmbeddingSet

    def __post_init__(self):
        if not self.source_refs.entries:
            raise ValueError(f"{self.machine_type}: empty source reference set")
        if not self.target_refs.entries:
            raise ValueError(f"{self.machine_type}: empty target reference set")
        if self.source_refs.dim != self.target_refs.dim:
            raise DimensionError(
                f"{self.machine_type}: source dim {self.source_refs.dim} != "
                f"target dim {self.target_refs.dim}")


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b), clamped to [0, 2]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine distance is undefined for zero vectors")
    # identical and opposite vectors hit the range endpoints exactly, so
    # membership in a reference set always scores 0
    if np.array_equal(a, b):
        return 0.0
    if np.array_equal(a, -b):
        return 2.0
    d = 1.0 - float(np.dot(a, b)) / (norm_a * norm_b)
    return min(max(d, 0.0), 2.0)


def knn_raw_score(refs: EmbeddingSet, embedding: Embedding) -> float:
    """Cosine distance to the nearest reference (k = 1)."""
    if not refs.entries:
        raise ValueError("empty reference set")
    if embedding.vector.shape != (refs.dim,):
        raise DimensionError(
            f"embedding dim {embedding.vector.shape} does not match refs dim {refs.dim}")
    return min(cosine_distance(embedding.vector, ref.vector) for ref in refs.entries)


def z_normalize(values, mu: float | None = None, sigma: float | None = None) -> np.ndarray:
    """(values - mu) / sigma with population statistics by default.

    A sigma below 1e-12 is replaced by 1, leaving pure mean-centering.
    """
    values = np.asarray(values, dtype=np.float64)
    if mu is None:
        mu = float(values.mean())
    if sigma is None:
        sigma = float(values.std())
    if sigma < _SIGMA_GUARD:
        sigma = 1.0
    return (values - mu) / sigma


def _loo_scores(refs: EmbeddingSet) -> np.ndarray:
    if len(refs.entries) < 2:
        raise ValueError("leave-one-out statistics need at least 2 references")
    scores = np.empty(len(refs.entries))
    for i, entry in enumerate(refs.entries):
        scores[i] = min(
            cosine_distance(entry.vector, other.vector)
            for j, other in enumerate(refs.entries) if j != i)
    return scores


def score_batch(pair: DetectorPair, tests: EmbeddingSet, *,
                stats: str = "batch",
                normalize: bool = True) -> tuple[list[AnomalyScore], DomainStats]:
    """Score every test clip against both domain detectors.

    Returns the per-clip scores (input order preserved) and the
    normalization statistics that were applied.  A population standard
    deviation below 1e-12 is replaced by 1 so degenerate batches still
    produce usable rankings; ``normalize=False`` skips z-normalization
    entirely (the minimum is then taken over raw scores).
    """
    if stats not in STATS_MODES:
        raise ValueError(f"stats mode {stats!r} not in {STATS_MODES}")
    if not tests.entries:
        raise EmptyBatchError(f"{pair.machine_type}: empty test batch")

    raw_s = np.array([knn_raw_score(pair.source_refs, e) for e in tests.entries])
    raw_t = np.array([knn_raw_score(pair.target_refs, e) for e in tests.entries])

    if stats == "batch":
        pool_s, pool_t = raw_s, raw_t
    else:
        pool_s = _loo_scores(pair.source_refs)
        pool_t = _loo_scores(pair.target_refs)

    domain_stats = DomainStats(
        mu_s=float(pool_s.mean()), sigma_s=float(pool_s.std()),
        mu_t=float(pool_t.mean()), sigma_t=float(pool_t.std()))

    if normalize:
        norm_s = z_normalize(raw_s, domain_stats.mu_s, domain_stats.sigma_s)
        norm_t = z_normalize(raw_t, domain_stats.mu_t, domain_stats.sigma_t)
    else:
        norm_s, norm_t = raw_s, raw_t

    scores = [
        AnomalyScore(
            clip_id=entry.clip_id,
            raw_source=float(raw_s[i]),
            raw_target=float(raw_t[i]),
            norm_source=float(norm_s[i]),
            norm_target=float(norm_t[i]),
            final=float(min(norm_s[i], norm_t[i])),
        )
        for i, entry in enumerate(tests.entries)
    ]
    return scores, domain_stats


def write_scores_csv(scores, path) -> None:
    """Header-free ``clip_id,final_score`` rows, 9 significant digits, sorted."""
    lines = [
        f"{s.clip_id},{s.final:.9g}\n"
        for s in sorted(scores, key=lambda s: s.clip_id)
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def read_scores_csv(path) -> dict:
    """Inverse of :func:`write_scores_csv`; clip_id -> final score."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            clip_id, _, value = line.rpartition(",")
            if not clip_id:
                raise ValueError(f"{path}:{lineno}: expected clip_id,score")
            out[clip_id] = float(value)
    return out

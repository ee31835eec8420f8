"""Detection metrics and summary reports.

AUC is defined by pair counting (Mann-Whitney with ties at 0.5) and
computed via midranks, which agrees exactly with an O(n^2) pairwise count.
pAUC restricts the tie-grouped ROC curve to false-positive rates in
[0, p] with linear interpolation at the boundary and rescales by p
(plain area / p, no McClish standardization).  Per-domain AUC evaluates
one domain's normal clips against anomalies from both domains, matching
the DCASE reporting convention.  The summary score is the harmonic mean
of (AUC_source, AUC_target, pAUC) pooled over machine types.
"""

from dataclasses import dataclass

import numpy as np

DEFAULT_PAUC_P = 0.1


class UndefinedMetricError(ValueError):
    """Metric needs both a normal and an anomalous clip."""


@dataclass
class LabeledScore:
    clip_id: str
    score: float
    condition: str      # normal | anomaly
    domain: str         # source | target
    machine_type: str


@dataclass
class MachineReport:
    auc_source: float
    auc_target: float
    pauc: float


@dataclass
class SummaryReport:
    machines: dict                  # machine_type -> MachineReport
    dev_score: float | None
    eval_score: float | None
    all_score: float


def _split_scores(scores, is_anomaly):
    scores = np.asarray(scores, dtype=np.float64)
    is_anomaly = np.asarray(is_anomaly, dtype=bool)
    if scores.shape != is_anomaly.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    pos = scores[is_anomaly]
    neg = scores[~is_anomaly]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError(
            f"need both classes, got {pos.size} anomalies and {neg.size} normals")
    return pos, neg


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, is_anomaly) -> float:
    """Fraction of (anomaly, normal) pairs ranked correctly; ties count 0.5."""
    pos, neg = _split_scores(scores, is_anomaly)
    ranks = _midranks(np.concatenate([pos, neg]))
    rank_sum = ranks[:pos.size].sum()
    return (rank_sum - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size)


def roc_points(scores, is_anomaly) -> tuple[np.ndarray, np.ndarray]:
    """Tie-grouped ROC polyline from (0,0) to (1,1), thresholds descending."""
    pos, neg = _split_scores(scores, is_anomaly)
    merged = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(pos.size, dtype=np.int64),
                             np.zeros(neg.size, dtype=np.int64)])
    order = np.argsort(-merged, kind="stable")
    merged = merged[order]
    labels = labels[order]
    tps = np.cumsum(labels)
    fps = np.cumsum(1 - labels)
    # last index of each tie group
    group_ends = np.r_[np.nonzero(np.diff(merged))[0], merged.size - 1]
    fpr = np.r_[0.0, fps[group_ends] / neg.size]
    tpr = np.r_[0.0, tps[group_ends] / pos.size]
    return fpr, tpr


def pauc(scores, is_anomaly, p: float = DEFAULT_PAUC_P) -> float:
    """Area under the ROC curve over FPR in [0, p], divided by p."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    fpr, tpr = roc_points(scores, is_anomaly)
    area = 0.0
    for i in range(1, fpr.size):
        left, right = fpr[i - 1], fpr[i]
        if right <= p or left >= p:
            hi = min(right, p)
            if hi <= left:
                continue
            t_left, t_right = tpr[i - 1], tpr[i]
            area += (hi - left) * (t_left + t_right) / 2.0
        else:
            # segment straddles p: interpolate tpr at the boundary
            t_p = tpr[i - 1] + (tpr[i] - tpr[i - 1]) * (p - left) / (right - left)
            area += (p - left) * (tpr[i - 1] + t_p) / 2.0
    return area / p


def domain_auc(labeled, domain: str) -> float:
    """AUC of one domain's normals against anomalies from both domains."""
    if domain not in ("source", "target"):
        raise ValueError(f"domain must be source or target, got {domain!r}")
    kept = [
        s for s in labeled
        if s.condition == "anomaly" or (s.condition == "normal" and s.domain == domain)
    ]
    scores = [s.score for s in kept]
    labels = [s.condition == "anomaly" for s in kept]
    if not scores:
        raise UndefinedMetricError(f"no clips usable for {domain} AUC")
    return auc(scores, labels)


def harmonic_score(values) -> float:
    """Harmonic mean; every value must be positive."""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise ValueError("harmonic mean of an empty list")
    if np.any(values <= 0.0):
        raise ValueError("harmonic mean requires strictly positive values")
    return values.size / float(np.sum(1.0 / values))


def machine_report(labeled, p: float = DEFAULT_PAUC_P) -> MachineReport:
    """Per-machine AUC_source, AUC_target and cross-domain pAUC."""
    scores = [s.score for s in labeled]
    labels = [s.condition == "anomaly" for s in labeled]
    return MachineReport(
        auc_source=domain_auc(labeled, "source"),
        auc_target=domain_auc(labeled, "target"),
        pauc=pauc(scores, labels, p),
    )


def summarize(reports: dict, dev_machines=None) -> SummaryReport:
    """Pool (AUC_s, AUC_t, pAUC) triples into harmonic-mean scores.

    ``dev_machines`` optionally names the development subset; machines not
    in it count toward the evaluation score.  Without it every machine is
    pooled into both the dev and the all score.
    """
    if not reports:
        raise ValueError("no machine reports to summarize")

    def pool(names):
        values = []
        for name in sorted(names):
            r = reports[name]
            values.extend((r.auc_source, r.auc_target, r.pauc))
        return harmonic_score(values) if values else None

    all_score = pool(reports)
    if dev_machines is None:
        dev_score, eval_score = all_score, None
    else:
        dev = set(dev_machines) & set(reports)
        dev_score = pool(dev)
        eval_score = pool(set(reports) - dev)
    return SummaryReport(machines=dict(sorted(reports.items())),
                         dev_score=dev_score, eval_score=eval_score,
                         all_score=all_score)


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

def render_report_text(summary: SummaryReport, warnings=()) -> str:
    """Fixed-width table, one row per machine, then the summary scores."""
    width = max([len("machine")] + [len(m) for m in summary.machines])
    lines = [f"{'machine':<{width}}  {'AUC_s':>8}  {'AUC_t':>8}  {'pAUC':>8}"]
    for name, r in summary.machines.items():
        lines.append(
            f"{name:<{width}}  {r.auc_source:>8.4f}  {r.auc_target:>8.4f}  {r.pauc:>8.4f}")
    lines.append("-" * len(lines[0]))
    for label, value in (("dev score", summary.dev_score),
                         ("eval score", summary.eval_score),
                         ("all score", summary.all_score)):
        rendered = f"{value:.4f}" if value is not None else "-"
        lines.append(f"{label:<{width}}  {rendered:>8}")
    for warning in warnings:
        lines.append(f"warning: {warning}")
    return "\n".join(lines) + "\n"


def render_report_kv(summary: SummaryReport, warnings=()) -> str:
    """Flat ``key=value`` lines for machine consumption."""
    lines = []
    for name, r in summary.machines.items():
        lines.append(f"machine.{name}.auc_source={r.auc_source:.6f}")
        lines.append(f"machine.{name}.auc_target={r.auc_target:.6f}")
        lines.append(f"machine.{name}.pauc={r.pauc:.6f}")
    for key, value in (("summary.dev_score", summary.dev_score),
                       ("summary.eval_score", summary.eval_score),
                       ("summary.all_score", summary.all_score)):
        if value is not None:
            lines.append(f"{key}={value:.6f}")
    for i, warning in enumerate(warnings):
        lines.append(f"warning.{i}={warning}")
    return "\n".join(lines) + "\n"

"""Classification metrics per horizon and the latency harness."""

import csv
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UndefinedMetricError

LATENCY_BUDGET_MS = 300.0


def confusion_counts(labels, probs, threshold: float = 0.5):
    """(tp, fp, tn, fn) at the given probability threshold."""
    labels = np.asarray(labels)
    probs = np.asarray(probs)
    if labels.shape != probs.shape:
        raise ValueError(f"length mismatch: {labels.shape} vs {probs.shape}")
    preds = probs >= threshold
    pos = labels == 1
    tp = int(np.sum(preds & pos))
    fp = int(np.sum(preds & ~pos))
    fn = int(np.sum(~preds & pos))
    tn = int(np.sum(~preds & ~pos))
    return tp, fp, tn, fn


def f1_score(labels, probs, threshold: float = 0.5):
    """(precision, recall, F1). Zero-denominator cases evaluate to 0.

    F1 is computed as 2tp / (2tp + fp + fn), which equals 2PR/(P+R) under
    those conventions and is exact as a single division.
    """
    tp, fp, tn, fn = confusion_counts(labels, probs, threshold)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else 0.0
    return precision, recall, f1


def auc_roc(labels, scores) -> float:
    """Probability a random positive outscores a random negative (ties 0.5).

    Computed exactly from tie-averaged ranks; equivalent to exhaustive
    pair counting.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ValueError(f"length mismatch: {labels.shape} vs {scores.shape}")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    s = scores[order]
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            j += 1
        ranks[order[i:j]] = (i + 1 + j) / 2.0  # average 1-based rank
        i = j
    rank_sum = ranks[np.asarray(labels) == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class HorizonMetrics:
    horizon: int  # 1-based future step
    f1: float
    auc: float
    precision: float = 0.0
    recall: float = 0.0
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0


@dataclass
class ComboMetrics:
    combination: str
    horizons: list


def horizon_metrics(combination: str, labels, probs,
                    threshold: float = 0.5) -> ComboMetrics:
    """Per-horizon confusion counts, F1 and AUC for (N, k) labels/probs."""
    labels = np.asarray(labels)
    probs = np.asarray(probs)
    rows = []
    for i in range(labels.shape[1]):
        tp, fp, tn, fn = confusion_counts(labels[:, i], probs[:, i], threshold)
        precision, recall, f1 = f1_score(labels[:, i], probs[:, i], threshold)
        rows.append(
            HorizonMetrics(
                horizon=i + 1, f1=f1, auc=auc_roc(labels[:, i], probs[:, i]),
                precision=precision, recall=recall, tp=tp, fp=fp, tn=tn, fn=fn,
            )
        )
    return ComboMetrics(combination=combination, horizons=rows)


@dataclass
class TimingReport:
    combination: str
    repetitions: int
    preprocess_ms_mean: float
    preprocess_ms_p95: float
    inference_ms_mean: float
    inference_ms_p95: float
    fusion_ms_mean: float
    stage_ms_mean: dict = field(default_factory=dict)  # per-modality preprocessing

    @property
    def total_ms_mean(self) -> float:
        return self.preprocess_ms_mean + self.inference_ms_mean

    @property
    def over_budget(self) -> bool:
        return self.total_ms_mean > LATENCY_BUDGET_MS


def benchmark(combination, windows, preprocessors, models, weights,
              repetitions: int = 100, warmup: int = 10) -> TimingReport:
    """Wall-clock preprocessing and inference per window for one combination.

    `windows` holds preloaded raw payloads: each item maps modality ->
    list of 5 per-frame payloads. `preprocessors[m]` turns that list into
    the model input; `models[m]` scores it. Windows are cycled to cover
    warmup + repetitions. Run this with worker pools disabled so timings
    are comparable.
    """
    combo = tuple(combination)
    if repetitions < 100:
        warnings.warn(f"timing with {repetitions} repetitions; >= 100 recommended")
    if not windows:
        raise ValueError("benchmark needs at least one preloaded window")
    pre_ms = np.empty(repetitions)
    inf_ms = np.empty(repetitions)
    fuse_ms = np.empty(repetitions)
    stage_ms = {m: np.empty(repetitions) for m in combo}
    for rep in range(warmup + repetitions):
        win = windows[rep % len(windows)]
        i = rep - warmup
        feats = {}
        t_pre = 0.0
        for m in combo:
            t0 = time.perf_counter()
            feats[m] = preprocessors[m](win[m])
            dt = (time.perf_counter() - t0) * 1e3
            t_pre += dt
            if i >= 0:
                stage_ms[m][i] = dt
        t0 = time.perf_counter()
        member_probs = [models[m].forward(feats[m], training=False) for m in combo]
        t_inf = (time.perf_counter() - t0) * 1e3
        t0 = time.perf_counter()
        fused = np.zeros(len(member_probs[0]))
        for w, p in zip(weights, member_probs):
            fused += w * p
        t_fuse = (time.perf_counter() - t0) * 1e3
        if i >= 0:
            pre_ms[i] = t_pre
            inf_ms[i] = t_inf + t_fuse
            fuse_ms[i] = t_fuse
    return TimingReport(
        combination="_".join(combo) if len(combo) > 1 else f"{combo[0]}_only",
        repetitions=repetitions,
        preprocess_ms_mean=float(pre_ms.mean()),
        preprocess_ms_p95=float(np.percentile(pre_ms, 95)),
        inference_ms_mean=float(inf_ms.mean()),
        inference_ms_p95=float(np.percentile(inf_ms, 95)),
        fusion_ms_mean=float(fuse_ms.mean()),
        stage_ms_mean={m: float(v.mean()) for m, v in stage_ms.items()},
    )


# ---------------------------------------------------------------------------
# report emission

METRICS_CSV_COLUMNS = ("combination", "horizon", "f1", "auc", "tp", "fp", "tn", "fn")
TIMINGS_CSV_COLUMNS = (
    "combination",
    "preprocess_ms_mean",
    "preprocess_ms_p95",
    "inference_ms_mean",
    "inference_ms_p95",
    "fusion_ms_mean",
)


def format_metrics_markdown(combos) -> str:
    """Markdown grid: one row per combination (sorted by final-horizon F1
    descending), F1/AUC-ROC columns for each horizon."""
    if not combos:
        raise ValueError("no combinations to report")
    k = len(combos[0].horizons)
    rows = sorted(combos, key=lambda c: -c.horizons[-1].f1)
    header = ["Modality"]
    for i in range(1, k + 1):
        header += [f"t+{i} F1", f"t+{i} AUC-ROC"]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "---|" * len(header)]
    for combo in rows:
        cells = [combo.combination]
        for hm in combo.horizons:
            cells += [f"{hm.f1 * 100:.1f}%", f"{hm.auc:.3f}"]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def format_timings_markdown(reports) -> str:
    rows = sorted(reports, key=lambda r: -r.inference_ms_mean)
    lines = [
        "| Modality | Preprocessing (ms) | Inference (ms) | Total (ms) | Budget |",
        "|---|---|---|---|---|",
    ]
    for r in rows:
        flag = "OVER 300ms" if r.over_budget else "ok"
        lines.append(
            f"| {r.combination} | {r.preprocess_ms_mean:.1f} "
            f"| {r.inference_ms_mean:.1f} | {r.total_ms_mean:.1f} | {flag} |"
        )
    return "\n".join(lines) + "\n"


def write_metrics_csv(path, combos) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_CSV_COLUMNS)
        for combo in sorted(combos, key=lambda c: -c.horizons[-1].f1):
            for hm in combo.horizons:
                w.writerow(
                    [combo.combination, hm.horizon, repr(hm.f1), repr(hm.auc),
                     hm.tp, hm.fp, hm.tn, hm.fn]
                )


def read_metrics_csv(path):
    """Parse metrics.csv back into ComboMetrics (bit-exact floats)."""
    combos = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != METRICS_CSV_COLUMNS:
            raise ValueError(f"unexpected metrics header {header}")
        for name, horizon, f1, auc, tp, fp, tn, fn in reader:
            combos.setdefault(name, []).append(
                HorizonMetrics(
                    horizon=int(horizon), f1=float(f1), auc=float(auc),
                    tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn),
                )
            )
    return [ComboMetrics(name, rows) for name, rows in combos.items()]


def write_timings_csv(path, reports) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TIMINGS_CSV_COLUMNS)
        for r in sorted(reports, key=lambda r: -r.inference_ms_mean):
            w.writerow(
                [r.combination, repr(r.preprocess_ms_mean), repr(r.preprocess_ms_p95),
                 repr(r.inference_ms_mean), repr(r.inference_ms_p95),
                 repr(r.fusion_ms_mean)]
            )


def read_timings_csv(path):
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != TIMINGS_CSV_COLUMNS:
            raise ValueError(f"unexpected timings header {header}")
        for name, pm, pp, im, ip, fm in reader:
            out.append(
                TimingReport(
                    combination=name, repetitions=0,
                    preprocess_ms_mean=float(pm), preprocess_ms_p95=float(pp),
                    inference_ms_mean=float(im), inference_ms_p95=float(ip),
                    fusion_ms_mean=float(fm),
                )
            )
    return out


def emit_report(combos, timings, out_dir) -> dict:
    """Write report.md plus metrics.csv / timings.csv twins; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    parts = ["# Blockage prediction report", "", "## Prediction quality", ""]
    parts.append(format_metrics_markdown(combos))
    if timings:
        parts += ["", "## Latency", "", format_timings_markdown(timings)]
    report_md = "\n".join(parts)
    (out_dir / "report.md").write_text(report_md)
    write_metrics_csv(out_dir / "metrics.csv", combos)
    if timings:
        write_timings_csv(out_dir / "timings.csv", timings)
    return {
        "report_md": out_dir / "report.md",
        "metrics_csv": out_dir / "metrics.csv",
        "timings_csv": out_dir / "timings.csv" if timings else None,
        "markdown": report_md,
    }

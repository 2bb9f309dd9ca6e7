"""Evaluation metrics and figure-style analytics.

Edit distance / WER, decoder perplexity, per-word F1 gains on homophene
pairs bucketed by grapheme edit distance, and mean attention distance
(attention-weighted frame offset, a locality measure of learned attention).
Everything here is pure numpy over immutable inputs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimal insert/delete/substitute count between two symbol sequences."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, sa in enumerate(a, start=1):
        cur = [i]
        for j, sb in enumerate(b, start=1):
            cur.append(min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (sa != sb),
            ))
        prev = cur
    return prev[-1]


def wer(hypothesis: Sequence, reference: Sequence) -> float:
    """Word error rate: word-level edit distance over reference length."""
    if len(reference) == 0:
        raise ValueError("reference must be nonempty")
    return levenshtein(hypothesis, reference) / len(reference)


def perplexity(mean_nll: float) -> float:
    """exp of the mean per-position negative log-likelihood."""
    return math.exp(mean_nll)


def one_vs_rest_f1(predictions: Sequence[int], labels: Sequence[int], cls: int) -> float:
    """Per-class F1; 0.0 when the class never appears in labels or predictions."""
    tp = fp = fn = 0
    for p, y in zip(predictions, labels):
        if p == cls and y == cls:
            tp += 1
        elif p == cls:
            fp += 1
        elif y == cls:
            fn += 1
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


@dataclass
class BucketStats:
    distance: int
    pair_count: int
    words: list[int]
    f1: dict[str, float]          # per-method mean F1 over included words
    gain_pct: dict[str, float]    # relative F1 gain over vanilla, in percent


@dataclass
class HomopheneReport:
    buckets: dict[int, BucketStats]
    excluded_words: list[int]     # vanilla F1 == 0, gain undefined
    vanilla_method: str
    aggregation: str = "unweighted mean of per-word one-vs-rest F1 per bucket"

    def to_json(self) -> dict:
        return {
            "vanilla_method": self.vanilla_method,
            "aggregation": self.aggregation,
            "excluded_words": self.excluded_words,
            "buckets": {
                str(d): {
                    "distance": b.distance,
                    "pair_count": b.pair_count,
                    "words": b.words,
                    "f1": b.f1,
                    "gain_pct": b.gain_pct,
                }
                for d, b in sorted(self.buckets.items())
            },
        }


def homophene_f1_gain(
    predictions: Mapping[str, Sequence[int]],
    labels: Sequence[int],
    pairs: Sequence[tuple],
    vanilla: str = "vanilla",
) -> HomopheneReport:
    """Relative F1 gain over the no-audio baseline, bucketed by edit distance.

    ``predictions`` maps a method label to per-sample predicted word indices
    on one shared eval split; ``pairs`` holds (word1, word2, distance, ...)
    tuples. Words whose vanilla F1 is zero are excluded and flagged.
    """
    if vanilla not in predictions:
        raise ValueError(f"missing vanilla method {vanilla!r}")
    n = len(labels)
    for name, preds in predictions.items():
        if len(preds) != n:
            raise ValueError(
                f"method {name!r} evaluated on {len(preds)} samples, "
                f"labels have {n}: eval splits differ")

    per_word_f1: dict[str, dict[int, float]] = {}
    words_by_distance: dict[int, set[int]] = {}
    pairs_by_distance: dict[int, int] = {}
    for pair in pairs:
        w1, w2, dist = int(pair[0]), int(pair[1]), int(pair[2])
        words_by_distance.setdefault(dist, set()).update((w1, w2))
        pairs_by_distance[dist] = pairs_by_distance.get(dist, 0) + 1

    all_words = sorted(set().union(*words_by_distance.values())) if words_by_distance else []
    for name, preds in predictions.items():
        per_word_f1[name] = {w: one_vs_rest_f1(preds, labels, w) for w in all_words}

    excluded = [w for w in all_words if per_word_f1[vanilla][w] == 0.0]

    buckets: dict[int, BucketStats] = {}
    for dist, words in sorted(words_by_distance.items()):
        included = [w for w in sorted(words) if w not in excluded]
        f1_means = {}
        gains = {}
        for name in predictions:
            member = [per_word_f1[name][w] for w in sorted(words)]
            f1_means[name] = float(np.mean(member)) if member else 0.0
            if included:
                rel = [
                    (per_word_f1[name][w] - per_word_f1[vanilla][w])
                    / per_word_f1[vanilla][w]
                    for w in included
                ]
                gains[name] = 100.0 * float(np.mean(rel))
            else:
                gains[name] = float("nan")
        buckets[dist] = BucketStats(
            distance=dist, pair_count=pairs_by_distance[dist],
            words=sorted(words), f1=f1_means, gain_pct=gains)

    return HomopheneReport(buckets=buckets, excluded_words=excluded, vanilla_method=vanilla)


HOMOPHENE_CSV_COLUMNS = ["distance", "pair_count", "method", "mean_f1", "gain_pct"]


def write_homophene_csv(report: HomopheneReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HOMOPHENE_CSV_COLUMNS)
        for dist, bucket in sorted(report.buckets.items()):
            for method in sorted(bucket.f1):
                writer.writerow([
                    dist, bucket.pair_count, method,
                    f"{bucket.f1[method]:.6f}", f"{bucket.gain_pct[method]:.4f}",
                ])
    Path(path).with_suffix(".json").write_text(
        json.dumps(report.to_json(), indent=2), encoding="utf-8")


def mean_attention_distance(attention: Sequence[np.ndarray],
                            tol: float = 1e-4) -> dict[tuple[int, int], float]:
    """Mean attention-weighted |query - key| offset per (layer, head).

    ``attention[layer]`` has shape (n_heads, T, T) with row-stochastic rows
    (rows are queries). For a head matrix A the distance is
    (1/T) * sum_i sum_j A[i, j] * |i - j|.
    """
    out: dict[tuple[int, int], float] = {}
    for layer, mats in enumerate(attention):
        mats = np.asarray(mats, dtype=np.float64)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValueError(f"layer {layer}: expected (heads, T, T), got {mats.shape}")
        T = mats.shape[1]
        row_sums = mats.sum(axis=-1)
        if np.any(np.abs(row_sums - 1.0) > tol) or np.any(mats < -tol):
            raise ValueError(f"layer {layer}: attention rows are not stochastic")
        idx = np.arange(T, dtype=np.float64)
        offsets = np.abs(idx[:, None] - idx[None, :])
        for head in range(mats.shape[0]):
            out[(layer, head)] = float((mats[head] * offsets).sum() / T)
    return out


@dataclass
class AttentionDistanceReport:
    # per (layer, head): one mean distance per evaluated sample
    distances: dict[tuple[int, int], list[float]] = field(default_factory=dict)

    def add(self, per_head: Mapping[tuple[int, int], float]) -> None:
        for key, value in per_head.items():
            self.distances.setdefault(key, []).append(value)

    def summary(self) -> dict[tuple[int, int], dict[str, float]]:
        out = {}
        for key, values in sorted(self.distances.items()):
            arr = np.asarray(values, dtype=np.float64)
            out[key] = {
                "mean": float(arr.mean()),
                "q25": float(np.quantile(arr, 0.25)),
                "median": float(np.quantile(arr, 0.5)),
                "q75": float(np.quantile(arr, 0.75)),
            }
        return out

    def overall_mean(self) -> float:
        all_values = [v for values in self.distances.values() for v in values]
        return float(np.mean(all_values))


ATTENTION_CSV_COLUMNS = ["layer", "head", "sample", "mean_attention_distance"]


def write_attention_csv(report: AttentionDistanceReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ATTENTION_CSV_COLUMNS)
        for (layer, head), values in sorted(report.distances.items()):
            for i, v in enumerate(values):
                writer.writerow([layer, head, i, f"{v:.8f}"])
    summary = {
        "overall_mean": report.overall_mean(),
        "per_head": {f"{l}/{h}": s for (l, h), s in report.summary().items()},
    }
    Path(path).with_suffix(".json").write_text(
        json.dumps(summary, indent=2), encoding="utf-8")

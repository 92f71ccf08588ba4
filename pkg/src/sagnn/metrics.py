"""Classification metrics, stratified splitting, and bucketed reports."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ValidationError


def accuracy(predicted, truth) -> float:
    """Exact match rate."""
    p, t = _aligned(predicted, truth)
    return float(np.mean(p == t))


def f1_score(predicted, truth) -> float:
    """Harmonic mean of precision and recall on class 1.

    Degenerate cases follow the empty-set convention: 1.0 when class 1 is
    neither predicted nor present, 0.0 when it is present or predicted but
    never correctly.
    """
    p, t = _aligned(predicted, truth)
    tp = int(np.sum((p == 1) & (t == 1)))
    fp = int(np.sum((p == 1) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    if tp == 0:
        return 1.0 if (fp == 0 and fn == 0) else 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2.0 * precision * recall / (precision + recall))


def _aligned(a, b):
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.shape != b.shape:
        raise ValidationError("prediction and truth lengths differ")
    if a.size == 0:
        raise ValidationError("empty inputs")
    return a, b


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged (midranks)."""
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts
    mid = starts + (counts + 1) / 2.0
    return mid[inverse]


def roc_auc(scores, truth) -> float | None:
    """Area under the ROC curve via the midrank Mann-Whitney statistic.

    Tie-robust and invariant under any strictly increasing transform of the
    scores. Returns None when only one class is present (undefined, not 0).
    """
    s, t = _aligned(scores, truth)
    pos = int(np.sum(t == 1))
    neg = len(t) - pos
    if pos == 0 or neg == 0:
        return None
    ranks = _midranks(s.astype(np.float64))
    rank_sum = float(np.sum(ranks[t == 1]))
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg)


@dataclass
class MetricsReport:
    accuracy: float | None
    f1: float | None
    auc: float | None
    n: int
    buckets: dict = field(default_factory=dict)
    note: str | None = None

    def to_dict(self) -> dict:
        out = {"accuracy": self.accuracy, "f1": self.f1, "auc": self.auc,
               "n": self.n}
        if self.note is not None:
            out["note"] = self.note
        if self.buckets:
            out["buckets"] = {k: v.to_dict() for k, v in self.buckets.items()}
        return out


def evaluate_predictions(predicted, scores, truth) -> MetricsReport:
    p, t = _aligned(predicted, truth)
    return MetricsReport(
        accuracy=accuracy(p, t),
        f1=f1_score(p, t),
        auc=roc_auc(scores, t),
        n=int(len(t)),
    )


def bucket_metrics(predicted, scores, truth, bucket_labels,
                   bucket_order=None) -> dict:
    """Per-bucket metric reports keyed by bucket label.

    ``bucket_labels`` assigns each item a label. Buckets named in
    ``bucket_order`` but holding no items are reported with n=0 and absent
    metrics rather than dropped.
    """
    p, t = _aligned(predicted, truth)
    s = np.asarray(scores).reshape(-1)
    blabels = np.asarray(bucket_labels)
    if blabels.shape != p.shape:
        raise ValidationError("bucket labels must align with predictions")
    if bucket_order is None:
        bucket_order = list(dict.fromkeys(blabels.tolist()))
    out = {}
    for name in bucket_order:
        mask = blabels == name
        if not mask.any():
            out[str(name)] = MetricsReport(accuracy=None, f1=None, auc=None, n=0)
            continue
        out[str(name)] = evaluate_predictions(p[mask], s[mask], t[mask])
    return out


def degree_bucket_labels(degrees, edges=((0, 5), (6, 20), (21, None))):
    """Map integer degrees onto labeled ranges like '0-5', '6-20', '21+'."""
    degrees = np.asarray(degrees, dtype=np.int64)
    names = []
    labels = np.empty(len(degrees), dtype=object)
    assigned = np.zeros(len(degrees), dtype=bool)
    for lo, hi in edges:
        if hi is None:
            name = f"{lo}+"
            mask = degrees >= lo
        else:
            name = f"{lo}-{hi}"
            mask = (degrees >= lo) & (degrees <= hi)
        names.append(name)
        labels[mask & ~assigned] = name
        assigned |= mask
    if not assigned.all():
        raise ValidationError("degree bucket edges do not cover all degrees")
    return labels, names


@dataclass
class Split:
    """Disjoint, exhaustive train/val/test index sets."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    fractions: tuple
    seed: int
    stratified: bool = True

    def part(self, name: str) -> np.ndarray:
        try:
            return getattr(self, name)
        except AttributeError:
            raise ValidationError(f"unknown split part {name!r}") from None

    def to_dict(self, ids=None) -> dict:
        def convert(arr):
            return [ids[i] for i in arr] if ids is not None else arr.tolist()
        return {
            "train": convert(self.train), "val": convert(self.val),
            "test": convert(self.test),
            "fractions": list(self.fractions), "seed": self.seed,
            "stratified": self.stratified,
        }

    @classmethod
    def from_dict(cls, data: dict, id_index=None) -> "Split":
        def convert(items):
            if id_index is not None:
                items = [id_index[i] for i in items]
            return np.asarray(sorted(items), dtype=np.int64)
        return cls(
            train=convert(data["train"]), val=convert(data["val"]),
            test=convert(data["test"]),
            fractions=tuple(data["fractions"]), seed=int(data["seed"]),
            stratified=bool(data.get("stratified", True)),
        )


def stratified_split(labels, fractions=(0.8, 0.1, 0.1), seed: int = 0,
                     min_per_class: int = 10) -> Split:
    """Per-class shuffled partition into train/val/test.

    Each class's items land within one item of the exact fractions;
    deterministic per seed.
    """
    labels = np.asarray(labels).reshape(-1)
    if len(fractions) != 3:
        raise ValidationError("fractions must be (train, val, test)")
    if any(f < 0 for f in fractions):
        raise ValidationError("fractions must be nonnegative")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions sum to {sum(fractions)}, expected 1")
    classes = np.unique(labels)
    gen = np.random.default_rng(rng.derive_seed(seed, rng.SPLIT))
    parts = {"train": [], "val": [], "test": []}
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if len(idx) < min_per_class:
            raise ValidationError(
                f"class {c} has {len(idx)} items; need >= {min_per_class}")
        perm = gen.permutation(idx)
        cut1 = int(round(fractions[0] * len(idx)))
        cut2 = int(round((fractions[0] + fractions[1]) * len(idx)))
        parts["train"].append(perm[:cut1])
        parts["val"].append(perm[cut1:cut2])
        parts["test"].append(perm[cut2:])
    return Split(
        train=np.sort(np.concatenate(parts["train"])).astype(np.int64),
        val=np.sort(np.concatenate(parts["val"])).astype(np.int64),
        test=np.sort(np.concatenate(parts["test"])).astype(np.int64),
        fractions=tuple(fractions), seed=seed, stratified=True,
    )

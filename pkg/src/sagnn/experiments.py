"""Experiment orchestration: datasets, single runs, multi-seed trials, exports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .errors import TrialError, ValidationError
from .graph import BipartiteGraph, build_graph, read_edge_tsv
from .metrics import (
    MetricsReport,
    Split,
    bucket_metrics,
    degree_bucket_labels,
    evaluate_predictions,
    stratified_split,
)
from .model import (
    BaselineConfig,
    ContentConfig,
    MODEL_KINDS,
    SAGNNConfig,
    TrainConfig,
    predict_scores,
    train_model,
)
from .optim import OptimConfig
from .pipeline import read_features_tsv, read_flag_tsv, read_labels_tsv
from .sampling import WalkConfig
from .synth import degree_report

BUCKETINGS = ("feature_signal", "first_order_degree", "second_order_degree")
DEFAULT_DEGREE_EDGES = ((0, 5), (6, 20), (21, None))


@dataclass
class Dataset:
    """Features, labels, and edges with aligned tweet indexing."""

    ids: list
    features: np.ndarray
    labels: np.ndarray
    edges: list
    low_signal: np.ndarray | None = None
    _graph: BipartiteGraph | None = field(default=None, repr=False)

    @property
    def num_tweets(self) -> int:
        return len(self.ids)

    def graph(self) -> BipartiteGraph:
        """Build (once) the graph; feature rows are re-aligned to its indices."""
        if self._graph is None:
            g = build_graph(self.edges, strict_author=True)
            if list(g.tweet_ids) != list(self.ids):
                index = {pid: i for i, pid in enumerate(self.ids)}
                missing = [t for t in g.tweet_ids if t not in index]
                if missing:
                    raise ValidationError(
                        f"edge list references unknown tweet id {missing[0]!r}")
                if g.num_tweets != len(self.ids):
                    raise ValidationError(
                        "edge list does not cover every labeled tweet")
                perm = np.asarray([index[t] for t in g.tweet_ids])
                self.ids = list(g.tweet_ids)
                self.features = self.features[perm]
                self.labels = self.labels[perm]
                if self.low_signal is not None:
                    self.low_signal = self.low_signal[perm]
            self._graph = g
        return self._graph


def load_dataset(data_dir) -> Dataset:
    """Read features.tsv, labels.tsv, edges.tsv (+ optional low_signal.tsv)."""
    data_dir = Path(data_dir)
    ids, features = read_features_tsv(data_dir / "features.tsv")
    label_map = read_labels_tsv(data_dir / "labels.tsv")
    missing = [i for i in ids if i not in label_map]
    if missing:
        raise ValidationError(f"labels.tsv is missing id {missing[0]!r}")
    labels = np.asarray([label_map[i] for i in ids], dtype=np.int64)
    edges = read_edge_tsv(data_dir / "edges.tsv")
    low_signal = None
    flag_path = data_dir / "low_signal.tsv"
    if flag_path.exists():
        flag_map = read_flag_tsv(flag_path)
        low_signal = np.asarray([flag_map.get(i, 0) for i in ids], dtype=bool)
    return Dataset(ids=list(ids), features=features, labels=labels,
                   edges=edges, low_signal=low_signal)


@dataclass
class ExperimentConfig:
    """Everything a run needs; mirrors the command-line flags."""

    model: str = "sagnn"
    aggregator: str = "max"
    num_layers: int = 3
    hidden_dim: int = 64
    activation: str = "relu"
    head_bias: bool = False
    edge_type_aware: bool = True
    num_walks: int = 20
    top_k: int = 10
    exclude_self: bool = True
    fanout: int = 10
    init_strategy: str = "random"
    baseline_layers: int = 2
    epochs: int = 5
    batch_size: int = 512
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    warmup_fraction: float = 0.06
    eval_every: int | None = None
    threshold: float = 0.5
    split_fractions: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValidationError(f"unknown model {self.model!r};"
                                  f" expected one of {MODEL_KINDS}")
        if not 0.0 < self.threshold < 1.0:
            raise ValidationError("threshold must be in (0, 1)")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["split_fractions"] = list(self.split_fractions)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config key(s): {sorted(unknown)}")
        if "split_fractions" in data:
            data = dict(data, split_fractions=tuple(data["split_fractions"]))
        return cls(**data)

    def model_cfg(self, input_dim: int):
        kind = self.model
        if kind in ("sagnn", "sagnn_no_edge_type"):
            return SAGNNConfig(
                input_dim=input_dim, num_layers=self.num_layers,
                hidden_dim=self.hidden_dim, aggregator=self.aggregator,
                edge_type_aware=(kind == "sagnn" and self.edge_type_aware),
                activation=self.activation, head_bias=self.head_bias)
        if kind == "baseline":
            return BaselineConfig(
                input_dim=input_dim, num_layers=self.baseline_layers,
                hidden_dim=self.hidden_dim, fanout=self.fanout,
                init_strategy=self.init_strategy, activation=self.activation,
                head_bias=self.head_bias)
        return ContentConfig(input_dim=input_dim, head_bias=self.head_bias)

    def walk_cfg(self, seed: int) -> WalkConfig | None:
        if self.model not in ("sagnn", "sagnn_no_edge_type"):
            return None
        return WalkConfig(num_walks=self.num_walks, top_k=self.top_k,
                          rng_seed=seed, exclude_self=self.exclude_self)

    def train_cfg(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, seed=seed,
            optimizer=OptimConfig(
                learning_rate=self.learning_rate,
                weight_decay=self.weight_decay,
                warmup_fraction=self.warmup_fraction),
            eval_every=self.eval_every)


@dataclass
class RunResult:
    seed: int
    report: MetricsReport
    history: list
    train_result: object
    split: Split
    predictions: np.ndarray
    scores: np.ndarray      # probabilities on the evaluated part
    logits: np.ndarray
    embeddings: np.ndarray | None
    part_idx: np.ndarray


def run_experiment(config: ExperimentConfig, dataset: Dataset,
                   seed: int | None = None, split: Split | None = None,
                   part: str = "test") -> RunResult:
    """Train one model and evaluate it on one split part.

    The split is fixed by ``config.seed`` so that multi-seed trials vary only
    initialization, shuffling, and sampling; pass ``split`` to reuse one.
    """
    seed = config.seed if seed is None else seed
    graph = dataset.graph() if config.model != "content_only" else None
    if split is None:
        split = stratified_split(dataset.labels, config.split_fractions,
                                 seed=config.seed)
    model_cfg = config.model_cfg(dataset.features.shape[1])
    result = train_model(
        config.model, graph, dataset.features, dataset.labels,
        split.train, split.val, model_cfg, config.train_cfg(seed),
        walk_cfg=config.walk_cfg(seed), threshold=config.threshold)

    part_idx = split.part(part)
    z, logits, probs = predict_scores(
        config.model, result.params, graph, dataset.features, part_idx,
        model_cfg, result.walk_cfg, seed=seed)
    pred = (probs >= config.threshold).astype(np.int64)
    report = evaluate_predictions(pred, probs, dataset.labels[part_idx])
    return RunResult(seed=seed, report=report, history=result.history,
                     train_result=result, split=split, predictions=pred,
                     scores=probs, logits=logits, embeddings=z,
                     part_idx=part_idx)


def attach_buckets(run: RunResult, dataset: Dataset, bucketing: str,
                   degree_edges=DEFAULT_DEGREE_EDGES) -> dict:
    """Add per-bucket reports for one bucketing to the run's metrics report.

    Degree bucketings flag low second-order connectivity, where aggregation
    has little to work with and accuracy is expected to sag.
    """
    if bucketing not in BUCKETINGS:
        raise ValidationError(f"unknown bucketing {bucketing!r};"
                              f" expected one of {BUCKETINGS}")
    idx = run.part_idx
    truth = dataset.labels[idx]
    if bucketing == "feature_signal":
        if dataset.low_signal is None:
            raise ValidationError("dataset has no low-signal flags")
        labels = np.where(dataset.low_signal[idx], "low_signal", "normal")
        order = ["low_signal", "normal"]
    else:
        degrees = degree_report(dataset.graph())
        per_node = (degrees.first_order if bucketing == "first_order_degree"
                    else degrees.second_order)
        labels, order = degree_bucket_labels(per_node[idx], degree_edges)
    buckets = bucket_metrics(run.predictions, run.scores, truth, labels,
                             bucket_order=order)
    if bucketing == "second_order_degree":
        for (lo, hi), name in zip(degree_edges, order):
            if hi is not None and hi <= 5 and name in buckets:
                buckets[name].note = (
                    "low second-order connectivity: aggregation has little"
                    " to draw on here and accuracy typically sags")
    run.report.buckets[bucketing] = _bucket_container(buckets, bucketing)
    return buckets


def _bucket_container(buckets: dict, bucketing: str) -> MetricsReport:
    # Wrap per-bucket reports so MetricsReport.to_dict nests them cleanly.
    container = MetricsReport(accuracy=None, f1=None, auc=None,
                              n=sum(b.n for b in buckets.values()))
    container.buckets = buckets
    return container


@dataclass
class TrialSummary:
    seeds: list
    reports: list
    mean: dict
    std: dict | None

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "per_seed": [{"seed": s, "metrics": r.to_dict()}
                         for s, r in zip(self.seeds, self.reports)],
            "mean": self.mean,
            "std": self.std,
        }


def summarize_reports(seeds, reports) -> TrialSummary:
    """Mean and sample standard deviation per metric over per-seed reports."""
    metric_names = ("accuracy", "f1", "auc")
    mean, std = {}, {}
    for name in metric_names:
        values = [getattr(r, name) for r in reports]
        if any(v is None for v in values):
            continue
        arr = np.asarray(values, dtype=np.float64)
        mean[name] = float(arr.mean())
        if len(arr) >= 2:
            std[name] = float(arr.std(ddof=1))
    return TrialSummary(seeds=list(seeds), reports=list(reports), mean=mean,
                        std=std if len(reports) >= 2 else None)


def run_trials(config: ExperimentConfig, seeds, dataset: Dataset,
               part: str = "test") -> TrialSummary:
    """One model per seed; aggregates each seed's best-validation test metrics.

    A failing trial raises :class:`TrialError` with the completed trials
    attached so partial results can still be written out.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("need at least one seed")
    split = stratified_split(dataset.labels, config.split_fractions,
                             seed=config.seed)
    done_seeds, reports = [], []
    for seed in seeds:
        try:
            run = run_experiment(config, dataset, seed=seed, split=split,
                                 part=part)
        except Exception as exc:
            partial = summarize_reports(done_seeds, reports) if reports else None
            raise TrialError(f"trial with seed {seed} failed: {exc}",
                             partial) from exc
        done_seeds.append(seed)
        reports.append(run.report)
    return summarize_reports(done_seeds, reports)


# --- exports ------------------------------------------------------------------


def export_misclassified_logits(path, ids, logits, predictions, truth) -> None:
    """TSV rows (id, pre-sigmoid logit, true label) for misclassified items only."""
    predictions = np.asarray(predictions).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    logits = np.asarray(logits).reshape(-1)
    with open(path, "w", encoding="utf-8") as fh:
        for i in np.flatnonzero(predictions != truth):
            fh.write(f"{ids[i]}\t{float(logits[i])!r}\t{int(truth[i])}\n")


def export_embeddings(path, ids, labels, embeddings, fraction: float = 1.0,
                      seed: int = 0) -> int:
    """Stratified per-class sample of embedding rows to TSV (id, label, z...).

    Returns the number of rows written. Sample sizes match the class
    proportions within one item.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValidationError("fraction must be in (0, 1]")
    labels = np.asarray(labels).reshape(-1)
    embeddings = np.asarray(embeddings)
    if embeddings.shape[0] != len(labels):
        raise ValidationError("embeddings and labels differ in length")
    gen = np.random.default_rng(rng.derive_seed(seed, rng.EXPORT))
    chosen = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        take = len(idx) if fraction == 1.0 else max(1, round(fraction * len(idx)))
        chosen.append(gen.permutation(idx)[:take])
    chosen = np.sort(np.concatenate(chosen))
    with open(path, "w", encoding="utf-8") as fh:
        for i in chosen:
            row = "\t".join(repr(float(v)) for v in embeddings[i])
            fh.write(f"{ids[i]}\t{int(labels[i])}\t{row}\n")
    return len(chosen)


def write_history_jsonl(path, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in history:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

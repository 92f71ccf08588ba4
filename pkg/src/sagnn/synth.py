"""Synthetic polarized bipartite graphs with ground truth and dials.

Users split 50/50 into two camps; every tweet inherits its author's camp as
its label. Tweet features sit at the camp mean (two means a configurable
distance apart along a random direction) plus Gaussian noise, except a
configurable fraction of low-signal tweets that get pure noise. Retweet
counts follow a capped power law thinned to a target mean, and each retweet
attaches a same-camp user except with the configured flip probability, which
makes cross-camp edges retweet-typed by construction. Everything is a
deterministic function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .graph import BipartiteGraph, EdgeType, build_graph, write_edge_tsv
from .pipeline import write_features_tsv, write_flag_tsv, write_labels_tsv


@dataclass
class SynthConfig:
    num_users: int = 200
    tweets_per_user_mean: float = 5.0   # geometric distribution mean
    flip_probability: float = 0.05      # retweet crosses camps with this prob
    retweet_rate: float = 1.5           # expected retweets per tweet
    feature_dim: int = 64
    class_separation: float = 1.0       # distance between camp mean vectors
    noise_sigma: float = 1.0
    low_signal_fraction: float = 0.0    # tweets whose features are pure noise
    power_exponent: float = 2.2
    retweet_cap: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.num_users < 2:
            raise ValidationError("need at least 2 users (one per camp)")
        if self.tweets_per_user_mean < 1.0:
            raise ValidationError("tweets_per_user_mean must be >= 1")
        if not 0.0 <= self.flip_probability < 0.5:
            raise ValidationError("flip_probability must be in [0, 0.5)")
        if self.retweet_rate < 0.0:
            raise ValidationError("retweet_rate must be >= 0")
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be >= 1")
        if self.class_separation < 0.0 or self.noise_sigma < 0.0:
            raise ValidationError("separation and noise must be >= 0")
        if not 0.0 <= self.low_signal_fraction <= 1.0:
            raise ValidationError("low_signal_fraction must be in [0, 1]")
        if self.power_exponent <= 1.0:
            raise ValidationError("power_exponent must be > 1")
        if self.retweet_cap < 1:
            raise ValidationError("retweet_cap must be >= 1")


@dataclass
class SynthDataset:
    tweet_ids: list
    user_ids: list
    labels: np.ndarray       # int64, camp of the author
    features: np.ndarray
    low_signal: np.ndarray   # bool per tweet
    authors: np.ndarray      # user index per tweet
    user_camps: np.ndarray
    edges: list              # (tweet id, user id, EdgeType)

    @property
    def num_tweets(self) -> int:
        return len(self.tweet_ids)

    def build_graph(self) -> BipartiteGraph:
        return build_graph(self.edges, strict_author=True)

    def to_files(self, out_dir) -> None:
        """Emit the pipeline-shaped artifact files, plus the low-signal flags."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_labels_tsv(out / "labels.tsv", self.tweet_ids, self.labels)
        write_edge_tsv(out / "edges.tsv", self.edges)
        write_features_tsv(out / "features.tsv", self.tweet_ids, self.features)
        write_flag_tsv(out / "low_signal.tsv", self.tweet_ids,
                       self.low_signal.astype(int))


def _capped_zipf_minus_one_mean(exponent: float, cap: int) -> float:
    """E[min(Z - 1, cap)] for Z ~ zipf(exponent), computed from the pmf."""
    tail_start = 2_000_000
    k = np.arange(1, tail_start, dtype=np.float64)
    weights = k ** -exponent
    zeta = weights.sum() + tail_start ** (1.0 - exponent) / (exponent - 1.0)
    pmf = weights / zeta
    capped = np.minimum(k - 1.0, cap)
    within = float(np.sum(capped * pmf))
    return within + cap * (1.0 - float(pmf.sum()))


def generate(cfg: SynthConfig) -> SynthDataset:
    """Generate a synthetic labeled corpus; byte-identical per seed."""
    gen = np.random.default_rng(cfg.seed)

    user_camps = np.arange(cfg.num_users, dtype=np.int64) % 2
    camp_members = [np.flatnonzero(user_camps == c) for c in (0, 1)]

    tweets_per_user = gen.geometric(1.0 / cfg.tweets_per_user_mean,
                                    size=cfg.num_users)
    authors = np.repeat(np.arange(cfg.num_users, dtype=np.int64),
                        tweets_per_user)
    num_tweets = len(authors)
    labels = user_camps[authors]

    direction = gen.standard_normal(cfg.feature_dim)
    direction /= np.linalg.norm(direction)
    means = np.stack([-0.5 * cfg.class_separation * direction,
                      +0.5 * cfg.class_separation * direction])
    low_signal = gen.random(num_tweets) < cfg.low_signal_fraction
    features = gen.standard_normal((num_tweets, cfg.feature_dim)) * cfg.noise_sigma
    features[~low_signal] += means[labels[~low_signal]]

    if cfg.retweet_rate > 0:
        achievable = _capped_zipf_minus_one_mean(cfg.power_exponent,
                                                 cfg.retweet_cap)
        if cfg.retweet_rate > achievable:
            raise ValidationError(
                f"retweet_rate {cfg.retweet_rate} exceeds the capped"
                f" power-law mean {achievable:.3f}; lower the rate or"
                f" raise the cap")
        raw = np.minimum(gen.zipf(cfg.power_exponent, size=num_tweets) - 1,
                         cfg.retweet_cap)
        counts = gen.binomial(raw, cfg.retweet_rate / achievable)
    else:
        counts = np.zeros(num_tweets, dtype=np.int64)

    tweet_ids = [f"t{i:07d}" for i in range(num_tweets)]
    user_ids = [f"u{i:07d}" for i in range(cfg.num_users)]

    edges = [(tweet_ids[i], user_ids[authors[i]], EdgeType.POST)
             for i in range(num_tweets)]
    for i in range(num_tweets):
        n_retweets = int(counts[i])
        if n_retweets == 0:
            continue
        camp = labels[i]
        crossings = gen.random(n_retweets) < cfg.flip_probability
        n_cross = int(crossings.sum())
        n_same = n_retweets - n_cross
        same_pool = camp_members[camp][camp_members[camp] != authors[i]]
        cross_pool = camp_members[1 - camp]
        for pool, want in ((same_pool, n_same), (cross_pool, n_cross)):
            take = min(want, len(pool))
            if take == 0:
                continue
            for user in gen.choice(pool, size=take, replace=False):
                edges.append((tweet_ids[i], user_ids[user], EdgeType.RETWEET))

    return SynthDataset(
        tweet_ids=tweet_ids, user_ids=user_ids, labels=labels,
        features=features, low_signal=low_signal, authors=authors,
        user_camps=user_camps, edges=edges,
    )


@dataclass
class DegreeReport:
    """Distinct first- and second-order neighbor counts per tweet."""

    first_order: np.ndarray
    second_order: np.ndarray

    def first_order_histogram(self) -> np.ndarray:
        return np.bincount(self.first_order)

    def second_order_histogram(self) -> np.ndarray:
        return np.bincount(self.second_order)


def degree_report(graph: BipartiteGraph) -> DegreeReport:
    """Exact neighbor counts by traversal.

    First order: distinct adjacent users. Second order: distinct tweets,
    excluding the tweet itself, reachable through any adjacent user.
    """
    first = np.empty(graph.num_tweets, dtype=np.int64)
    second = np.empty(graph.num_tweets, dtype=np.int64)
    for i in range(graph.num_tweets):
        users = np.unique(graph.tweet_neighbors(i)[0])
        first[i] = len(users)
        if len(users) == 0:
            second[i] = 0
            continue
        reach = np.unique(np.concatenate(
            [graph.user_neighbors(int(u))[0] for u in users]))
        second[i] = len(reach) - int(i in reach)
    return DegreeReport(first_order=first, second_order=second)

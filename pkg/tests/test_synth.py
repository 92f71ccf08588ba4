import numpy as np
import pytest

from sagnn.errors import ValidationError
from sagnn.graph import EdgeType
from sagnn.sampling import WalkConfig, sample_block
from sagnn.synth import DegreeReport, SynthConfig, degree_report, generate


def small_cfg(**kwargs):
    base = dict(num_users=40, tweets_per_user_mean=3.0, flip_probability=0.1,
                retweet_rate=1.0, feature_dim=8, class_separation=2.0,
                noise_sigma=0.5, low_signal_fraction=0.2, seed=0)
    base.update(kwargs)
    return SynthConfig(**base)


class TestGenerate:
    def test_labels_equal_author_camp(self):
        ds = generate(small_cfg())
        assert np.array_equal(ds.labels, ds.user_camps[ds.authors])

    def test_camps_split_evenly(self):
        ds = generate(small_cfg(num_users=41))
        counts = np.bincount(ds.user_camps)
        assert abs(int(counts[0]) - int(counts[1])) <= 1

    def test_zero_flip_keeps_retweets_in_camp(self):
        ds = generate(small_cfg(flip_probability=0.0, retweet_rate=1.5))
        user_index = {u: i for i, u in enumerate(ds.user_ids)}
        tweet_index = {t: i for i, t in enumerate(ds.tweet_ids)}
        checked = 0
        for tid, uid, etype in ds.edges:
            if etype is EdgeType.RETWEET:
                assert ds.user_camps[user_index[uid]] == \
                    ds.labels[tweet_index[tid]]
                checked += 1
        assert checked > 0

    def test_retweeter_never_the_author(self):
        ds = generate(small_cfg(retweet_rate=1.5))
        user_index = {u: i for i, u in enumerate(ds.user_ids)}
        tweet_index = {t: i for i, t in enumerate(ds.tweet_ids)}
        for tid, uid, etype in ds.edges:
            if etype is EdgeType.RETWEET:
                assert user_index[uid] != ds.authors[tweet_index[tid]]

    def test_low_signal_rows_carry_no_class_mean(self):
        ds = generate(small_cfg(class_separation=50.0, noise_sigma=0.1,
                                low_signal_fraction=0.3, num_users=100))
        strong = np.linalg.norm(ds.features[~ds.low_signal], axis=1)
        weak = np.linalg.norm(ds.features[ds.low_signal], axis=1)
        assert weak.max() < strong.min()

    def test_seed_determinism_is_byte_identical(self, tmp_path):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        generate(small_cfg(seed=5)).to_files(a_dir)
        generate(small_cfg(seed=5)).to_files(b_dir)
        for name in ("labels.tsv", "edges.tsv", "features.tsv",
                     "low_signal.tsv"):
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()

    def test_different_seeds_differ(self):
        a = generate(small_cfg(seed=1))
        b = generate(small_cfg(seed=2))
        assert not np.array_equal(a.features, b.features)

    def test_flip_fraction_converges(self):
        # cross-camp retweet share approaches the configured flip probability
        cfg = small_cfg(num_users=5000, tweets_per_user_mean=6.0,
                        flip_probability=0.2, retweet_rate=1.7,
                        feature_dim=4, seed=9)
        ds = generate(cfg)
        user_index = {u: i for i, u in enumerate(ds.user_ids)}
        tweet_index = {t: i for i, t in enumerate(ds.tweet_ids)}
        cross = total = 0
        for tid, uid, etype in ds.edges:
            if etype is EdgeType.RETWEET:
                total += 1
                cross += int(ds.user_camps[user_index[uid]]
                             != ds.labels[tweet_index[tid]])
        assert total >= 50_000
        assert cross / total == pytest.approx(0.2, abs=0.01)

    def test_posts_only_when_rate_zero(self):
        ds = generate(small_cfg(retweet_rate=0.0))
        assert all(e is EdgeType.POST for _, _, e in ds.edges)

    def test_unreachable_rate_rejected(self):
        with pytest.raises(ValidationError, match="capped"):
            generate(small_cfg(retweet_rate=50.0))

    def test_strict_graph_builds(self):
        ds = generate(small_cfg())
        g = ds.build_graph()
        assert g.num_tweets == ds.num_tweets

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            small_cfg(num_users=1)
        with pytest.raises(ValidationError):
            small_cfg(flip_probability=0.5)
        with pytest.raises(ValidationError):
            small_cfg(low_signal_fraction=1.5)


class TestSignalDials:
    def test_separable_corpus_supports_near_perfect_linear_test_accuracy(self):
        from sagnn.experiments import Dataset, ExperimentConfig, run_experiment
        ds = generate(small_cfg(num_users=200, tweets_per_user_mean=5.0,
                                class_separation=8.0, noise_sigma=0.3,
                                low_signal_fraction=0.0, seed=12))
        # separability sanity: class mean distance dwarfs the noise scale
        mean_gap = np.linalg.norm(ds.features[ds.labels == 1].mean(0)
                                  - ds.features[ds.labels == 0].mean(0))
        assert mean_gap > 10 * 0.3
        dataset = Dataset(ids=ds.tweet_ids, features=ds.features,
                          labels=ds.labels, edges=ds.edges)
        cfg = ExperimentConfig(model="content_only", epochs=5, batch_size=128,
                               learning_rate=0.05, seed=0)
        run = run_experiment(cfg, dataset, seed=0)
        assert run.report.accuracy >= 0.99

    def test_pure_noise_corpus_gives_chance_level_accuracy(self):
        from sagnn.experiments import Dataset, ExperimentConfig, run_experiment
        ds = generate(small_cfg(num_users=400, tweets_per_user_mean=5.0,
                                low_signal_fraction=1.0, seed=13))
        dataset = Dataset(ids=ds.tweet_ids, features=ds.features,
                          labels=ds.labels, edges=ds.edges)
        cfg = ExperimentConfig(model="content_only", epochs=5, batch_size=128,
                               learning_rate=0.05, seed=0)
        accs = [run_experiment(cfg, dataset, seed=s).report.accuracy
                for s in range(5)]
        assert float(np.mean(accs)) == pytest.approx(0.5, abs=0.05)


class TestHomophilyTransmission:
    def test_zero_flip_neighbors_share_center_label(self):
        ds = generate(small_cfg(num_users=200, flip_probability=0.0,
                                retweet_rate=1.5, seed=3))
        g = ds.build_graph()
        block = sample_block(g, np.arange(g.num_tweets),
                             WalkConfig(num_walks=20, top_k=10, rng_seed=1))
        for i in range(len(block)):
            nb = block.neighborhood(i)
            for e in nb.entries:
                assert ds.labels[e.neighbor] == ds.labels[nb.center]


class TestDegreeReport:
    def test_posts_only_first_order_is_one(self):
        ds = generate(small_cfg(retweet_rate=0.0))
        report = degree_report(ds.build_graph())
        assert np.array_equal(report.first_order,
                              np.ones(ds.num_tweets, dtype=np.int64))

    def test_toy_graph_counts(self, toy_graph):
        report = degree_report(toy_graph)
        assert report.first_order.tolist() == [2, 1, 1, 1]
        assert report.second_order[0] == 3  # tA reaches tB, tC, tD

    def test_matches_bfs_oracle(self):
        ds = generate(small_cfg(num_users=300, retweet_rate=1.2, seed=7))
        g = ds.build_graph()
        assert g.num_tweets >= 500
        report = degree_report(g)
        for i in range(g.num_tweets):
            users = {int(u) for u in g.tweet_neighbors(i)[0]}
            tweets = set()
            for u in users:
                tweets.update(int(t) for t in g.user_neighbors(u)[0])
            tweets.discard(i)
            assert report.first_order[i] == len(users)
            assert report.second_order[i] == len(tweets)

    def test_histograms(self, toy_graph):
        report = degree_report(toy_graph)
        assert report.first_order_histogram().tolist() == [0, 3, 1]
        assert report.first_order_histogram().sum() == toy_graph.num_tweets

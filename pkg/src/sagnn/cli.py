"""Command-line surface tying the pipeline together.

Subcommands: annotate, build-graph, synth, train, evaluate, trials, export.
Every subcommand accepts ``--config FILE`` with a JSON document mirroring its
flags; explicit flags override the file. All randomness flows from a single
``--seed``. Exit codes: 0 success, 2 validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .autodiff import load_checkpoint, save_checkpoint
from .errors import FormatError, TrialError, ValidationError
from .graph import build_graph, read_edge_tsv, save_graph, stats
from .experiments import (
    DEFAULT_DEGREE_EDGES,
    ExperimentConfig,
    attach_buckets,
    export_embeddings,
    export_misclassified_logits,
    load_dataset,
    run_experiment,
    run_trials,
    write_history_jsonl,
)
from .metrics import Split, evaluate_predictions, stratified_split
from .model import init_params, predict_scores
from .pipeline import (
    Polarity,
    expand_lexicon,
    featurize,
    label_and_clean,
    read_corpus_jsonl,
    read_lexicon_tsv,
    write_features_tsv,
    write_labels_tsv,
    write_lexicon_tsv,
)
from .graph import write_edge_tsv
from .synth import SynthConfig, generate

MODEL_TOKENS = {
    "sagnn": "sagnn",
    "sagnn-noet": "sagnn_no_edge_type",
    "baseline": "baseline",
    "content-only": "content_only",
}
AGG_TOKENS = {"mean": "mean", "max": "max", "sum": "sum",
              "wsum": "weighted_sum"}
BUCKET_TOKENS = {
    "signal": "feature_signal",
    "first-order": "first_order_degree",
    "second-order": "second_order_degree",
}


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad JSON: {exc}") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    return data


def _resolve(args, defaults: dict) -> dict:
    """Flag value if given, else config-file value, else built-in default."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown config key(s): {sorted(unknown)}")
    out = {}
    for key, default in defaults.items():
        flag_value = getattr(args, key, None)
        out[key] = flag_value if flag_value is not None \
            else file_cfg.get(key, default)
    return out


def _parse_fractions(text: str) -> tuple:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ValidationError(f"bad split fractions {text!r}") from None
    if len(parts) != 3:
        raise ValidationError("split fractions must be train,val,test")
    return parts


def _parse_degree_edges(text: str):
    edges = []
    for token in text.split(","):
        token = token.strip()
        if token.endswith("+"):
            edges.append((int(token[:-1]), None))
        else:
            lo, hi = token.split("-")
            edges.append((int(lo), int(hi)))
    return tuple(edges)


def _parse_seeds(text: str, base: int) -> list:
    if "," in text:
        return [int(s) for s in text.split(",")]
    count = int(text)
    if count < 1:
        raise ValidationError("need at least one seed")
    return [base + i for i in range(count)]


_MODEL_DEFAULTS = {
    "model": "sagnn",
    "agg": "max",
    "layers": 3,
    "dim": 64,
    "activation": "relu",
    "head_bias": False,
    "num_walks": 20,
    "top_k": 10,
    "fanout": 10,
    "init": "random",
    "baseline_layers": 2,
    "epochs": 5,
    "batch_size": 512,
    "lr": 1e-3,
    "weight_decay": 0.01,
    "warmup": 0.06,
    "eval_every": None,
    "threshold": 0.5,
    "split": "0.8,0.1,0.1",
    "seed": 0,
}


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--model", choices=sorted(MODEL_TOKENS))
    p.add_argument("--agg", choices=sorted(AGG_TOKENS))
    p.add_argument("--layers", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--activation", choices=["relu", "linear"])
    p.add_argument("--head-bias", dest="head_bias",
                   action=argparse.BooleanOptionalAction)
    p.add_argument("--num-walks", dest="num_walks", type=int)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--fanout", type=int)
    p.add_argument("--init", choices=["random", "centroid", "medoid"])
    p.add_argument("--baseline-layers", dest="baseline_layers", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--warmup", type=float)
    p.add_argument("--eval-every", dest="eval_every", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--split", help="train,val,test fractions")
    p.add_argument("--seed", type=int)


def _experiment_config(options: dict) -> ExperimentConfig:
    return ExperimentConfig(
        model=MODEL_TOKENS[options["model"]],
        aggregator=AGG_TOKENS[options["agg"]],
        num_layers=options["layers"],
        hidden_dim=options["dim"],
        activation=options["activation"],
        head_bias=options["head_bias"],
        num_walks=options["num_walks"],
        top_k=options["top_k"],
        fanout=options["fanout"],
        init_strategy=options["init"],
        baseline_layers=options["baseline_layers"],
        epochs=options["epochs"],
        batch_size=options["batch_size"],
        learning_rate=options["lr"],
        weight_decay=options["weight_decay"],
        warmup_fraction=options["warmup"],
        eval_every=options["eval_every"],
        threshold=options["threshold"],
        split_fractions=_parse_fractions(options["split"]),
        seed=options["seed"],
    )


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


# --- subcommands ---------------------------------------------------------------


def cmd_annotate(args) -> int:
    defaults = {"min_cooccur": 5, "purity": 0.9, "rounds": 1,
                "feature_mode": "hashed", "feature_dim": 256,
                "embeddings_file": None, "positive": "proB", "seed": 0}
    opts = _resolve(args, defaults)
    posts = read_corpus_jsonl(args.corpus)
    lexicon = read_lexicon_tsv(args.lexicon)
    seed_size = len(lexicon)
    if opts["rounds"] > 0:
        lexicon = expand_lexicon(lexicon, posts,
                                 min_cooccur=opts["min_cooccur"],
                                 purity=opts["purity"], rounds=opts["rounds"])
    corpus = label_and_clean(posts, lexicon,
                             positive=Polarity.from_token(opts["positive"]))
    if not corpus.posts:
        raise ValidationError("no posts survived labeling")
    featurize(corpus, mode=opts["feature_mode"], dim=opts["feature_dim"],
              path=opts["embeddings_file"])

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_labels_tsv(out / "labels.tsv", corpus.ids, corpus.labels)
    write_edge_tsv(out / "edges.tsv", corpus.edges)
    write_features_tsv(out / "features.tsv", corpus.ids, corpus.features)
    write_lexicon_tsv(out / "lexicon_full.tsv", lexicon)
    expanded = sorted(t for t, p in lexicon.provenance.items()
                      if p == "expanded")
    _write_json(out / "annotate_report.json", {
        "posts_in": len(posts),
        "posts_labeled": len(corpus.posts),
        "drop_counts": corpus.drop_counts,
        "lexicon_seed_size": seed_size,
        "lexicon_expanded_size": len(lexicon),
        "expanded_tags": expanded,
    })
    print(f"labeled {len(corpus.posts)} of {len(posts)} posts"
          f" -> {out}")
    return 0


def cmd_build_graph(args) -> int:
    edges = read_edge_tsv(args.edges)
    graph = build_graph(edges, strict_author=args.strict_author)
    save_graph(graph, args.out)
    print(json.dumps(stats(graph).to_dict(), sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    defaults = {"users": 200, "tweets_per_user": 5.0, "flip": 0.05,
                "retweet_rate": 1.5, "feature_dim": 64, "separation": 1.0,
                "noise": 1.0, "low_signal": 0.0, "power_exponent": 2.2,
                "retweet_cap": 200, "seed": 0}
    opts = _resolve(args, defaults)
    cfg = SynthConfig(
        num_users=opts["users"],
        tweets_per_user_mean=opts["tweets_per_user"],
        flip_probability=opts["flip"],
        retweet_rate=opts["retweet_rate"],
        feature_dim=opts["feature_dim"],
        class_separation=opts["separation"],
        noise_sigma=opts["noise"],
        low_signal_fraction=opts["low_signal"],
        power_exponent=opts["power_exponent"],
        retweet_cap=opts["retweet_cap"],
        seed=opts["seed"],
    )
    dataset = generate(cfg)
    dataset.to_files(args.out_dir)
    print(f"generated {dataset.num_tweets} tweets, {cfg.num_users} users,"
          f" {len(dataset.edges)} edges -> {args.out_dir}")
    return 0


def cmd_train(args) -> int:
    opts = _resolve(args, _MODEL_DEFAULTS)
    config = _experiment_config(opts)
    dataset = load_dataset(args.data_dir)
    split = stratified_split(dataset.labels, config.split_fractions,
                             seed=config.seed)
    run = run_experiment(config, dataset, seed=config.seed, split=split)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.sagw", run.train_result.params.named())
    write_history_jsonl(out / "history.jsonl", run.history)
    _write_json(out / "split.json", split.to_dict(dataset.ids))
    _write_json(out / "run.json", {
        "config": config.to_dict(),
        "data_dir": str(args.data_dir),
        "input_dim": dataset.features.shape[1],
        "best_step": run.train_result.best_step,
        "best_val_accuracy": run.train_result.best_val_accuracy,
        "test_metrics": run.report.to_dict(),
    })
    print(json.dumps({"part": "test", **run.report.to_dict()}, sort_keys=True))
    return 0


def _load_run(run_dir, data_dir=None):
    run_dir = Path(run_dir)
    with open(run_dir / "run.json", "r", encoding="utf-8") as fh:
        run_info = json.load(fh)
    config = ExperimentConfig.from_dict(run_info["config"])
    dataset = load_dataset(data_dir if data_dir is not None
                           else run_info["data_dir"])
    if config.model != "content_only":
        dataset.graph()  # aligns feature rows with graph indexing
    id_index = {pid: i for i, pid in enumerate(dataset.ids)}
    with open(run_dir / "split.json", "r", encoding="utf-8") as fh:
        split = Split.from_dict(json.load(fh), id_index)
    model_cfg = config.model_cfg(dataset.features.shape[1])
    params = init_params(config.model, model_cfg, config.seed)
    values = load_checkpoint(run_dir / "checkpoint.sagw")
    named = params.named()
    if set(values) != set(named):
        raise FormatError("checkpoint tensors do not match the configured model")
    for name, p in named.items():
        if p.value.shape != values[name].shape:
            raise FormatError(f"checkpoint tensor {name!r} has shape"
                              f" {values[name].shape}, expected {p.value.shape}")
        p.value[...] = values[name]
    return config, dataset, split, model_cfg, params


def _predict_part(config, dataset, split, model_cfg, params, part):
    part_idx = split.part(part)
    graph = dataset.graph() if config.model != "content_only" else None
    z, logits, probs = predict_scores(
        config.model, params, graph, dataset.features, part_idx, model_cfg,
        config.walk_cfg(config.seed), seed=config.seed)
    pred = (probs >= config.threshold).astype(np.int64)
    return part_idx, z, logits, probs, pred


def cmd_evaluate(args) -> int:
    config, dataset, split, model_cfg, params = _load_run(
        args.run_dir, args.data_dir)
    part_idx, z, logits, probs, pred = _predict_part(
        config, dataset, split, model_cfg, params, args.part)
    report = evaluate_predictions(pred, probs, dataset.labels[part_idx])

    if args.buckets:
        from .experiments import RunResult
        run = RunResult(seed=config.seed, report=report, history=[],
                        train_result=None, split=split, predictions=pred,
                        scores=probs, logits=logits, embeddings=z,
                        part_idx=part_idx)
        edges = (_parse_degree_edges(args.degree_edges)
                 if args.degree_edges else DEFAULT_DEGREE_EDGES)
        for token in args.buckets.split(","):
            token = token.strip()
            if token not in BUCKET_TOKENS:
                raise ValidationError(
                    f"unknown bucketing {token!r};"
                    f" expected one of {sorted(BUCKET_TOKENS)}")
            attach_buckets(run, dataset, BUCKET_TOKENS[token],
                           degree_edges=edges)

    payload = {"part": args.part, **report.to_dict()}
    if args.out:
        _write_json(args.out, payload)
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_trials(args) -> int:
    opts = _resolve(args, _MODEL_DEFAULTS)
    config = _experiment_config(opts)
    seeds = _parse_seeds(args.seeds, config.seed)
    dataset = load_dataset(args.data_dir)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def write_summary(summary, name):
        _write_json(out / name, summary.to_dict())
        for i, (seed, report) in enumerate(zip(summary.seeds, summary.reports)):
            _write_json(out / f"trial_{i:03d}.json",
                        {"seed": seed, "metrics": report.to_dict()})

    try:
        summary = run_trials(config, seeds, dataset)
    except TrialError as exc:
        if exc.partial is not None:
            write_summary(exc.partial, "trials_partial.json")
            print(f"partial results saved after failure: {exc}",
                  file=sys.stderr)
        raise
    write_summary(summary, "trials.json")
    print(json.dumps({"seeds": summary.seeds, "mean": summary.mean,
                      "std": summary.std}, sort_keys=True))
    return 0


def cmd_export(args) -> int:
    if not args.embeddings and not args.logits:
        raise ValidationError("nothing to export: pass --embeddings or --logits")
    config, dataset, split, model_cfg, params = _load_run(
        args.run_dir, args.data_dir)
    part_idx, z, logits, probs, pred = _predict_part(
        config, dataset, split, model_cfg, params, args.part)
    ids = [dataset.ids[i] for i in part_idx]
    truth = dataset.labels[part_idx]
    if args.logits:
        export_misclassified_logits(args.logits, ids, logits, pred, truth)
        print(f"misclassified logits -> {args.logits}")
    if args.embeddings:
        if z is None:
            raise ValidationError(
                f"model kind {config.model!r} has no embeddings to export")
        count = export_embeddings(args.embeddings, ids, truth, z,
                                  fraction=args.fraction, seed=config.seed)
        print(f"{count} embedding rows -> {args.embeddings}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sagnn",
        description="Stance classification on user-post bipartite graphs"
                    " via skip-aggregation graph convolution.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate",
                       help="weak-label a raw corpus with a hashtag lexicon")
    p.add_argument("--corpus", required=True, help="posts as JSON lines")
    p.add_argument("--lexicon", required=True, help="seed lexicon TSV")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--min-cooccur", dest="min_cooccur", type=int)
    p.add_argument("--purity", type=float)
    p.add_argument("--rounds", type=int,
                   help="lexicon expansion rounds (0 disables)")
    p.add_argument("--feature-mode", dest="feature_mode",
                   choices=["hashed", "external"])
    p.add_argument("--feature-dim", dest="feature_dim", type=int)
    p.add_argument("--embeddings-file", dest="embeddings_file")
    p.add_argument("--positive", choices=["proA", "proB"],
                   help="polarity mapped to label 1")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("build-graph", help="build and save a bipartite graph")
    p.add_argument("--edges", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strict-author", dest="strict_author", default=True,
                   action=argparse.BooleanOptionalAction,
                   help="require exactly one post edge per tweet")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("synth", help="generate a synthetic polarized corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--users", type=int)
    p.add_argument("--tweets-per-user", dest="tweets_per_user", type=float)
    p.add_argument("--flip", type=float,
                   help="probability a retweet crosses camps")
    p.add_argument("--retweet-rate", dest="retweet_rate", type=float)
    p.add_argument("--feature-dim", dest="feature_dim", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--low-signal", dest="low_signal", type=float)
    p.add_argument("--power-exponent", dest="power_exponent", type=float)
    p.add_argument("--retweet-cap", dest="retweet_cap", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a trained run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--data-dir", help="defaults to the training data dir")
    p.add_argument("--part", default="test", choices=["train", "val", "test"])
    p.add_argument("--buckets",
                   help="comma list of: signal, first-order, second-order")
    p.add_argument("--degree-edges", dest="degree_edges",
                   help="degree buckets, e.g. 0-5,6-20,21+")
    p.add_argument("--out", help="write metrics JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("trials", help="multi-seed trials with mean/std")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seeds", required=True,
                   help="count (e.g. 5) or explicit comma list (e.g. 1,2,3)")
    _add_model_flags(p)
    p.set_defaults(func=cmd_trials)

    p = sub.add_parser("export", help="export embeddings or error logits")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--data-dir")
    p.add_argument("--part", default="test", choices=["train", "val", "test"])
    p.add_argument("--embeddings", help="write stratified embedding rows here")
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--logits", help="write misclassified logits here")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

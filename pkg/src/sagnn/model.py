"""Skip-aggregation layers, model stacking, baselines, and the training loop.

The skip-aggregation layer transforms (center, second-order neighbor) pairs
with edge-type-specific weight matrices, aggregates pair representations per
center, and combines through a shared projection:

    pair(v, u) = act([h_v @ W_cen[type(v-edge)] || h_u @ W_nei[type(u-edge)]])
    h_v'       = act(AGGREGATE({pair(v, u)}) @ W_c)

followed by row L2 normalization after every layer. Vectors are rows, so a
layer's W_cen/W_nei are (d_in x d) and W_c is (2d x d).

Also here: the edge-type-agnostic variant (both type slots share one
matrix), a first-order mean-aggregation bipartite GNN with three user-node
initialization strategies, a content-only linear classifier, and a seeded
AdamW training loop with best-on-validation checkpoint selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .autodiff import (
    Parameter,
    Tape,
    Tensor,
    add_bias,
    bce_loss,
    concat_cols,
    gather_rows,
    matmul,
    relu,
    row_l2_normalize,
    segment_aggregate,
    select_rows,
    sigmoid,
    AGGREGATOR_KINDS,
)
from .errors import TrainingDivergedError, ValidationError
from .graph import BipartiteGraph, EdgeType
from .optim import OptimConfig, adamw_step, lr_scale
from .sampling import (
    BatchBlocks,
    LayerFrontier,
    WalkConfig,
    expand_batch,
    first_order_block,
)

MODEL_KINDS = ("sagnn", "sagnn_no_edge_type", "baseline", "content_only")
ACTIVATIONS = ("relu", "linear")
INIT_STRATEGIES = ("random", "centroid", "medoid")


# --- configs ------------------------------------------------------------------


@dataclass
class SAGNNConfig:
    input_dim: int
    num_layers: int = 3
    hidden_dim: int = 64
    aggregator: str = "max"
    edge_type_aware: bool = True
    activation: str = "relu"
    head_bias: bool = False

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValidationError("num_layers must be >= 1")
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValidationError("dimensions must be >= 1")
        if self.aggregator not in AGGREGATOR_KINDS:
            raise ValidationError(f"unknown aggregator {self.aggregator!r}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")


@dataclass
class BaselineConfig:
    input_dim: int
    num_layers: int = 2
    hidden_dim: int = 64
    fanout: int = 10
    init_strategy: str = "random"
    activation: str = "relu"
    head_bias: bool = False

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValidationError("num_layers must be >= 1")
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValidationError("dimensions must be >= 1")
        if self.fanout < 1:
            raise ValidationError("fanout must be >= 1")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValidationError(f"unknown init strategy {self.init_strategy!r}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")


@dataclass
class ContentConfig:
    input_dim: int
    head_bias: bool = False


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 512
    seed: int = 0
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    eval_every: int | None = None  # steps; None evaluates at epoch ends

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.eval_every is not None and self.eval_every < 1:
            raise ValidationError("eval_every must be >= 1")


# --- parameters ---------------------------------------------------------------


@dataclass
class SALayerParams:
    """Edge-type-specific transforms for one layer.

    In the edge-type-agnostic variant the post/retweet slots hold the same
    Parameter object, so the transforms stay tied during training.
    """

    w_cen_post: Parameter
    w_cen_retweet: Parameter
    w_nei_post: Parameter
    w_nei_retweet: Parameter
    w_c: Parameter

    @property
    def edge_type_aware(self) -> bool:
        return self.w_cen_post is not self.w_cen_retweet


@dataclass
class SAGNNParams:
    layers: list
    w_o: Parameter
    b_o: Parameter | None = None

    def named(self) -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for i, layer in enumerate(self.layers):
            if layer.edge_type_aware:
                out[f"layers.{i}.w_cen_post"] = layer.w_cen_post
                out[f"layers.{i}.w_cen_retweet"] = layer.w_cen_retweet
                out[f"layers.{i}.w_nei_post"] = layer.w_nei_post
                out[f"layers.{i}.w_nei_retweet"] = layer.w_nei_retweet
            else:
                out[f"layers.{i}.w_cen"] = layer.w_cen_post
                out[f"layers.{i}.w_nei"] = layer.w_nei_post
            out[f"layers.{i}.w_c"] = layer.w_c
        out["w_o"] = self.w_o
        if self.b_o is not None:
            out["b_o"] = self.b_o
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named().values())


@dataclass
class BaselineLayerParams:
    w_tweet: Parameter
    w_user: Parameter


@dataclass
class BaselineParams:
    layers: list
    w_o: Parameter
    b_o: Parameter | None = None

    def named(self) -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for i, layer in enumerate(self.layers):
            out[f"layers.{i}.w_tweet"] = layer.w_tweet
            out[f"layers.{i}.w_user"] = layer.w_user
        out["w_o"] = self.w_o
        if self.b_o is not None:
            out["b_o"] = self.b_o
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named().values())


@dataclass
class ContentParams:
    w: Parameter
    b: Parameter | None = None

    def named(self) -> dict[str, Parameter]:
        out = {"w": self.w}
        if self.b is not None:
            out["b"] = self.b
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named().values())


def _glorot(gen: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return gen.uniform(-limit, limit, size=(fan_in, fan_out))


def init_sagnn_params(cfg: SAGNNConfig, seed: int) -> SAGNNParams:
    gen = np.random.default_rng(rng.derive_seed(seed, rng.INIT, 0))
    layers = []
    for i in range(cfg.num_layers):
        d_in = cfg.input_dim if i == 0 else cfg.hidden_dim
        d = cfg.hidden_dim
        if cfg.edge_type_aware:
            w_cen_p = Parameter(_glorot(gen, d_in, d), f"layers.{i}.w_cen_post")
            w_cen_r = Parameter(_glorot(gen, d_in, d), f"layers.{i}.w_cen_retweet")
            w_nei_p = Parameter(_glorot(gen, d_in, d), f"layers.{i}.w_nei_post")
            w_nei_r = Parameter(_glorot(gen, d_in, d), f"layers.{i}.w_nei_retweet")
        else:
            w_cen_p = w_cen_r = Parameter(_glorot(gen, d_in, d), f"layers.{i}.w_cen")
            w_nei_p = w_nei_r = Parameter(_glorot(gen, d_in, d), f"layers.{i}.w_nei")
        w_c = Parameter(_glorot(gen, 2 * d, d), f"layers.{i}.w_c")
        layers.append(SALayerParams(w_cen_p, w_cen_r, w_nei_p, w_nei_r, w_c))
    w_o = Parameter(_glorot(gen, cfg.hidden_dim, 1), "w_o")
    b_o = Parameter(np.zeros((1, 1)), "b_o") if cfg.head_bias else None
    return SAGNNParams(layers=layers, w_o=w_o, b_o=b_o)


def init_baseline_params(cfg: BaselineConfig, seed: int) -> BaselineParams:
    gen = np.random.default_rng(rng.derive_seed(seed, rng.INIT, 1))
    layers = []
    for i in range(cfg.num_layers):
        d_in = cfg.input_dim if i == 0 else cfg.hidden_dim
        d = cfg.hidden_dim
        layers.append(BaselineLayerParams(
            w_tweet=Parameter(_glorot(gen, 2 * d_in, d), f"layers.{i}.w_tweet"),
            w_user=Parameter(_glorot(gen, 2 * d_in, d), f"layers.{i}.w_user"),
        ))
    w_o = Parameter(_glorot(gen, cfg.hidden_dim, 1), "w_o")
    b_o = Parameter(np.zeros((1, 1)), "b_o") if cfg.head_bias else None
    return BaselineParams(layers=layers, w_o=w_o, b_o=b_o)


def init_content_params(cfg: ContentConfig, seed: int) -> ContentParams:
    gen = np.random.default_rng(rng.derive_seed(seed, rng.INIT, 2))
    w = Parameter(_glorot(gen, cfg.input_dim, 1), "w")
    b = Parameter(np.zeros((1, 1)), "b") if cfg.head_bias else None
    return ContentParams(w=w, b=b)


# --- forward passes -----------------------------------------------------------


def _activate(t: Tensor, activation: str) -> Tensor:
    if activation == "relu":
        return relu(t)
    return t


def _typed_transform(x: Tensor, types: np.ndarray, w_post: Parameter,
                     w_retweet: Parameter) -> Tensor:
    if w_post is w_retweet:
        return matmul(x, w_post)
    return select_rows(matmul(x, w_post), matmul(x, w_retweet),
                       types == EdgeType.POST)


def _flatten_frontier(frontier: LayerFrontier):
    """Pair arrays from a sampled block; empty centers get a self-pair."""
    block = frontier.block
    counts = np.diff(block.indptr)
    seg = np.repeat(np.arange(len(block.centers), dtype=np.int64), counts)
    nbr_rows = frontier.pair_neighbor_rows
    ce = block.center_edge
    ne = block.neighbor_edge
    w = block.weight
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        post = np.full(empty.size, EdgeType.POST, dtype=np.uint8)
        seg = np.concatenate([seg, empty])
        nbr_rows = np.concatenate([nbr_rows, frontier.center_rows[empty]])
        ce = np.concatenate([ce, post])
        ne = np.concatenate([ne, post])
        w = np.concatenate([w, np.ones(empty.size)])
        order = np.argsort(seg, kind="stable")
        seg, nbr_rows, ce, ne, w = (a[order] for a in (seg, nbr_rows, ce, ne, w))
    return seg, nbr_rows, ce, ne, w


def _flatten_neighborhood_list(neighborhoods, num_neighbor_rows: int):
    """Pair arrays from per-center records; neighbor ids index the feature rows."""
    seg_l, nbr_l, ce_l, ne_l, w_l = [], [], [], [], []
    for i, nb in enumerate(neighborhoods):
        entries = nb.entries
        if not entries:
            seg_l.append(i)
            nbr_l.append(nb.center)
            ce_l.append(int(EdgeType.POST))
            ne_l.append(int(EdgeType.POST))
            w_l.append(1.0)
            continue
        for e in entries:
            seg_l.append(i)
            nbr_l.append(e.neighbor)
            ce_l.append(int(e.center_edge))
            ne_l.append(int(e.neighbor_edge))
            w_l.append(e.weight)
    nbr = np.asarray(nbr_l, dtype=np.int64)
    if nbr.size and (nbr.min() < 0 or nbr.max() >= num_neighbor_rows):
        raise ValidationError("neighborhood entry does not resolve to a"
                              " neighbor feature row")
    return (np.asarray(seg_l, dtype=np.int64), nbr,
            np.asarray(ce_l, dtype=np.uint8), np.asarray(ne_l, dtype=np.uint8),
            np.asarray(w_l, dtype=np.float64))


def sa_layer_forward(center_feats, neighborhoods, neighbor_feats,
                     params: SALayerParams, aggregator: str = "max",
                     activation: str = "relu") -> Tensor:
    """One skip-aggregation layer over a batch of centers.

    ``center_feats`` row i belongs to center i of ``neighborhoods``, which is
    either a :class:`LayerFrontier` (batched sampling, neighbor rows resolved
    positionally) or a sequence of :class:`SampledNeighborhood` whose
    neighbor indices address ``neighbor_feats`` rows directly. Centers with
    no entries fall back to a self-pair with POST edge types.
    """
    center_feats = center_feats if isinstance(center_feats, Tensor) \
        else Tensor(center_feats)
    neighbor_feats = neighbor_feats if isinstance(neighbor_feats, Tensor) \
        else Tensor(neighbor_feats)
    if isinstance(neighborhoods, LayerFrontier):
        num_centers = len(neighborhoods.block.centers)
        seg, nbr_rows, ce, ne, w = _flatten_frontier(neighborhoods)
    else:
        neighborhoods = list(neighborhoods)
        num_centers = len(neighborhoods)
        seg, nbr_rows, ce, ne, w = _flatten_neighborhood_list(
            neighborhoods, neighbor_feats.value.shape[0])
    if num_centers == 0:
        raise ValidationError("no centers to aggregate")
    if center_feats.value.shape[0] != num_centers:
        raise ValidationError(
            f"center_feats has {center_feats.value.shape[0]} rows for"
            f" {num_centers} centers")
    if center_feats.value.shape[1] != neighbor_feats.value.shape[1]:
        raise ValidationError("center and neighbor feature widths differ")

    center_path = _typed_transform(gather_rows(center_feats, seg), ce,
                                   params.w_cen_post, params.w_cen_retweet)
    neighbor_path = _typed_transform(gather_rows(neighbor_feats, nbr_rows), ne,
                                     params.w_nei_post, params.w_nei_retweet)
    pair = _activate(concat_cols(center_path, neighbor_path), activation)
    agg = segment_aggregate(
        pair, seg, num_centers, kind=aggregator,
        weights=w if aggregator == "weighted_sum" else None)
    return _activate(matmul(agg, params.w_c), activation)


def sagnn_forward(features: np.ndarray, blocks: BatchBlocks,
                  params: SAGNNParams, cfg: SAGNNConfig):
    """Stacked skip-aggregation forward pass over pre-sampled blocks.

    Applies ``cfg.num_layers`` layers with row L2 normalization after each,
    then the classifier head. Returns (embeddings, logits, probabilities)
    for the top layer's centers; use ``blocks.batch_rows`` to reorder to the
    original batch.
    """
    if len(blocks.layers) != len(params.layers):
        raise ValidationError(
            f"{len(blocks.layers)} sampled layers for"
            f" {len(params.layers)} parameterized layers")
    if features.shape[1] != cfg.input_dim:
        raise ValidationError(
            f"feature width {features.shape[1]} != input_dim {cfg.input_dim}")
    h = Tensor(features[blocks.base_nodes])
    for frontier, layer_params in zip(blocks.layers, params.layers):
        centers = gather_rows(h, frontier.center_rows)
        h = row_l2_normalize(sa_layer_forward(
            centers, frontier, h, layer_params,
            aggregator=cfg.aggregator, activation=cfg.activation))
    z = h
    logits = matmul(z, params.w_o)
    if params.b_o is not None:
        logits = add_bias(logits, params.b_o)
    return z, logits, sigmoid(logits)


def _empty_hidden(dim: int) -> Tensor:
    return Tensor(np.zeros((0, dim)))


def baseline_forward(graph: BipartiteGraph, batch, tweet_features: np.ndarray,
                     user_features: np.ndarray, params: BaselineParams,
                     cfg: BaselineConfig, seed: int):
    """First-order aggregate-then-combine GNN over the bipartite graph.

    Every layer updates both sides from sampled first-order neighborhoods
    (mean aggregation), so reaching another tweet's content takes two layers.
    Returns (embeddings, logits, probabilities) in batch order.
    """
    if user_features is None:
        raise ValidationError("user features are uninitialized; call"
                              " init_user_features first")
    if user_features.shape[1] != tweet_features.shape[1]:
        raise ValidationError("user and tweet feature widths differ")
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValidationError("batch is empty")

    # Frontier expansion, top level first: each level needs its own nodes
    # plus the sampled cross-side neighbors of the level above.
    t_need = np.unique(batch)
    u_need = np.array([], dtype=np.int64)
    levels = [(t_need, u_need)]
    samples = []
    for layer in range(cfg.num_layers, 0, -1):
        t_samp = first_order_block(graph, "tweet", t_need, cfg.fanout,
                                   seed=seed, layer=layer)
        u_samp = first_order_block(graph, "user", u_need, cfg.fanout,
                                   seed=seed, layer=layer)
        samples.append((t_samp, u_samp))
        t_need = np.union1d(t_need, u_samp[1])
        u_need = np.union1d(u_need, t_samp[1])
        levels.append((t_need, u_need))

    levels.reverse()
    samples.reverse()

    t_prev, u_prev = levels[0]
    ht = Tensor(tweet_features[t_prev]) if t_prev.size else _empty_hidden(cfg.input_dim)
    hu = Tensor(user_features[u_prev]) if u_prev.size else _empty_hidden(cfg.input_dim)

    for i, layer_params in enumerate(params.layers):
        t_nodes, u_nodes = levels[i + 1]
        t_samp, u_samp = samples[i]

        def side_update(nodes, own_prev_nodes, own_h, other_prev_nodes, other_h,
                        samp, weight):
            if nodes.size == 0:
                return _empty_hidden(cfg.hidden_dim)
            indptr, nbr, _ = samp
            counts = np.diff(indptr)
            if np.any(counts == 0):
                raise ValidationError("node with no neighbors in baseline"
                                      " forward; build the graph with"
                                      " strict_author")
            seg = np.repeat(np.arange(len(nodes), dtype=np.int64), counts)
            agg = segment_aggregate(
                gather_rows(other_h, np.searchsorted(other_prev_nodes, nbr)),
                seg, len(nodes), kind="mean")
            own = gather_rows(own_h, np.searchsorted(own_prev_nodes, nodes))
            combined = _activate(matmul(concat_cols(own, agg), weight),
                                 cfg.activation)
            return row_l2_normalize(combined)

        ht_new = side_update(t_nodes, t_prev, ht, u_prev, hu, t_samp,
                             layer_params.w_tweet)
        hu_new = side_update(u_nodes, u_prev, hu, t_prev, ht, u_samp,
                             layer_params.w_user)
        ht, hu = ht_new, hu_new
        t_prev, u_prev = t_nodes, u_nodes

    rows = np.searchsorted(t_prev, batch)
    z = gather_rows(ht, rows)
    logits = matmul(z, params.w_o)
    if params.b_o is not None:
        logits = add_bias(logits, params.b_o)
    return z, logits, sigmoid(logits)


def content_forward(features_batch: np.ndarray, params: ContentParams):
    """Linear classifier on tweet features alone."""
    x = Tensor(features_batch)
    logits = matmul(x, params.w)
    if params.b is not None:
        logits = add_bias(logits, params.b)
    return logits, sigmoid(logits)


def init_user_features(graph: BipartiteGraph, tweet_features: np.ndarray,
                       strategy: str, seed: int = 0) -> np.ndarray:
    """Initial user-node features for the first-order baseline.

    random: standard normal rows scaled by 1/sqrt(dim). centroid: mean of the
    user's adjacent tweet feature rows. medoid: the adjacent tweet row with
    the smallest sum of squared distances to the others (ties pick the lowest
    tweet index).
    """
    if strategy not in INIT_STRATEGIES:
        raise ValidationError(f"unknown init strategy {strategy!r}")
    X = np.asarray(tweet_features, dtype=np.float64)
    dim = X.shape[1]
    if strategy == "random":
        gen = np.random.default_rng(rng.derive_seed(seed, rng.USER_INIT))
        return gen.standard_normal((graph.num_users, dim)) / math.sqrt(dim)
    out = np.empty((graph.num_users, dim), dtype=np.float64)
    for u in range(graph.num_users):
        tweets = np.unique(graph.user_neighbors(u)[0])
        if tweets.size == 0:
            raise ValidationError(f"user {u} has no adjacent tweets")
        rows = X[tweets]
        if strategy == "centroid":
            out[u] = rows.mean(axis=0)
        else:
            diffs = rows[:, None, :] - rows[None, :, :]
            ssd = np.einsum("ijk,ijk->i", diffs, diffs)
            out[u] = rows[int(np.argmin(ssd))]
    return out


# --- training -----------------------------------------------------------------


@dataclass
class TrainResult:
    kind: str
    params: object               # best-on-validation parameters
    history: list                # one record per evaluation point
    best_step: int
    best_val_accuracy: float | None
    model_cfg: object
    walk_cfg: WalkConfig | None


def init_params(kind: str, model_cfg, seed: int):
    """Freshly initialized parameters for any model kind."""
    if kind not in MODEL_KINDS:
        raise ValidationError(f"unknown model kind {kind!r}")
    if kind in ("sagnn", "sagnn_no_edge_type"):
        return init_sagnn_params(model_cfg, seed)
    if kind == "baseline":
        return init_baseline_params(model_cfg, seed)
    return init_content_params(model_cfg, seed)


def forward_scores(kind: str, params, graph, features, nodes, model_cfg,
                   walk_cfg: WalkConfig | None, sample_seed: int,
                   user_features=None):
    """(embeddings, logits, probabilities) tensors for ``nodes``, in order."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if kind in ("sagnn", "sagnn_no_edge_type"):
        blocks = expand_batch(graph, nodes, walk_cfg, model_cfg.num_layers,
                              seed=sample_seed)
        z, logits, probs = sagnn_forward(features, blocks, params, model_cfg)
        rows = blocks.batch_rows
        return (gather_rows(z, rows), gather_rows(logits, rows),
                gather_rows(probs, rows))
    if kind == "baseline":
        return baseline_forward(graph, nodes, features, user_features, params,
                                model_cfg, seed=sample_seed)
    logits, probs = content_forward(features[nodes], params)
    return None, logits, probs


def predict_scores(kind: str, params, graph, features, nodes, model_cfg,
                   walk_cfg: WalkConfig | None, seed: int,
                   batch_size: int = 1024, user_features=None):
    """Batched inference without a tape. Returns numpy (z or None, logits, probs).

    Neighborhood sampling uses one evaluation stream derived from ``seed``,
    so repeated calls are identical.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    eval_seed = rng.derive_seed(seed, rng.EVAL)
    if kind == "baseline" and user_features is None:
        user_features = init_user_features(graph, features,
                                           model_cfg.init_strategy, seed=seed)
    zs, ls, ps = [], [], []
    for start in range(0, len(nodes), batch_size):
        chunk = nodes[start:start + batch_size]
        z, logits, probs = forward_scores(kind, params, graph, features, chunk,
                                          model_cfg, walk_cfg, eval_seed,
                                          user_features=user_features)
        zs.append(None if z is None else z.value.copy())
        ls.append(logits.value[:, 0].copy())
        ps.append(probs.value[:, 0].copy())
    z_all = None if zs[0] is None else np.vstack(zs)
    return z_all, np.concatenate(ls), np.concatenate(ps)


def train_model(kind: str, graph, features, labels, train_idx, val_idx,
                model_cfg, train_cfg: TrainConfig,
                walk_cfg: WalkConfig | None = None,
                threshold: float = 0.5) -> TrainResult:
    """Mini-batch training with AdamW and the warm-up linear schedule.

    Batches are reshuffled every epoch from the training seed; neighborhoods
    are resampled every step. The returned parameters are the checkpoint with
    the best validation accuracy (final parameters when ``val_idx`` is None).
    """
    from .metrics import accuracy as _accuracy, f1_score as _f1, roc_auc as _auc

    if kind not in MODEL_KINDS:
        raise ValidationError(f"unknown model kind {kind!r};"
                              f" expected one of {MODEL_KINDS}")
    if kind == "sagnn_no_edge_type" and model_cfg.edge_type_aware:
        model_cfg = replace(model_cfg, edge_type_aware=False)
    if kind in ("sagnn", "sagnn_no_edge_type") and walk_cfg is None:
        walk_cfg = WalkConfig()
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if train_idx.size == 0:
        raise ValidationError("training split is empty")
    labels = np.asarray(labels)
    y = labels.astype(np.float64)

    seed = train_cfg.seed
    num_train = len(train_idx)
    steps_per_epoch = math.ceil(num_train / train_cfg.batch_size)
    total_steps = train_cfg.epochs * steps_per_epoch
    opt = train_cfg.optimizer
    if opt.total_steps is None:
        opt = replace(opt, total_steps=total_steps)

    params = init_params(kind, model_cfg, seed)
    all_params = params.parameters()
    user_features = None
    if kind == "baseline":
        user_features = init_user_features(graph, features,
                                           model_cfg.init_strategy, seed=seed)

    val_idx = None if val_idx is None else np.asarray(val_idx, dtype=np.int64)

    def validate():
        if val_idx is None or val_idx.size == 0:
            return None, None, None
        _, logits, probs = predict_scores(
            kind, params, graph, features, val_idx, model_cfg, walk_cfg,
            seed=seed, batch_size=max(train_cfg.batch_size, 1024),
            user_features=user_features)
        pred = (probs >= threshold).astype(np.int64)
        truth = labels[val_idx]
        return (_accuracy(pred, truth), _f1(pred, truth), _auc(probs, truth))

    history: list[dict] = []
    best_snapshot = None
    best_acc = -np.inf
    best_step = -1
    global_step = 0
    recent_losses: list[float] = []

    for epoch in range(train_cfg.epochs):
        perm = np.random.default_rng(
            rng.derive_seed(seed, rng.SHUFFLE, epoch)).permutation(train_idx)
        for start in range(0, num_train, train_cfg.batch_size):
            batch = perm[start:start + train_cfg.batch_size]
            step_seed = rng.derive_seed(seed, rng.STEP, global_step)
            with Tape() as tape:
                _, _, probs = forward_scores(
                    kind, params, graph, features, batch, model_cfg, walk_cfg,
                    step_seed, user_features=user_features)
                loss = bce_loss(probs, y[batch])
                loss_value = float(loss.value[0, 0])
                if not np.isfinite(loss_value):
                    raise TrainingDivergedError(
                        global_step,
                        f"non-finite loss {loss_value} (kind={kind},"
                        f" epoch={epoch}, lr={opt.learning_rate})")
                tape.backward(loss)
            adamw_step(all_params, opt, global_step)
            recent_losses.append(loss_value)
            global_step += 1

            end_of_epoch = start + train_cfg.batch_size >= num_train
            due = (train_cfg.eval_every is not None
                   and global_step % train_cfg.eval_every == 0)
            if due or end_of_epoch:
                val_acc, val_f1, val_auc = validate()
                history.append({
                    "step": global_step,
                    "lr": opt.learning_rate * lr_scale(
                        global_step - 1, opt.total_steps, opt.warmup_fraction),
                    "train_loss": float(np.mean(recent_losses)),
                    "val_accuracy": val_acc,
                    "val_f1": val_f1,
                    "val_auc": val_auc,
                })
                recent_losses = []
                if val_acc is not None and val_acc > best_acc:
                    best_acc = val_acc
                    best_step = global_step
                    best_snapshot = {n: p.value.copy()
                                     for n, p in params.named().items()}

    if best_snapshot is not None:
        for name, p in params.named().items():
            p.value[...] = best_snapshot[name]
    else:
        best_step = global_step
        best_acc = None

    return TrainResult(
        kind=kind, params=params, history=history, best_step=best_step,
        best_val_accuracy=None if best_acc is None else float(best_acc),
        model_cfg=model_cfg, walk_cfg=walk_cfg,
    )

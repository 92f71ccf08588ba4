"""Scikit-learn style estimators over the graph classifiers.

The task is transductive node classification: features cover every tweet in
the graph, labels are known on a training subset, and predictions address
nodes by index. ``fit`` therefore takes the full feature matrix plus the
graph and optional train/validation index sets; ``predict``/``predict_proba``
take node indices (default: all nodes). ``get_params``/``set_params``/
``clone`` behave as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .model import (
    BaselineConfig,
    ContentConfig,
    SAGNNConfig,
    TrainConfig,
    predict_scores,
    train_model,
)
from .optim import OptimConfig
from .sampling import WalkConfig
from .validation import (
    check_binary_labels,
    check_feature_matrix,
    check_graph,
    check_indices,
)


class _NodeClassifierBase(BaseEstimator, ClassifierMixin):
    """Shared fit/predict plumbing for the transductive classifiers."""

    def _kind(self) -> str:
        raise NotImplementedError

    def _model_cfg(self, input_dim: int):
        raise NotImplementedError

    def _walk_cfg(self):
        return None

    def _needs_graph(self) -> bool:
        return True

    def _train_cfg(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.random_state,
            optimizer=OptimConfig(
                learning_rate=self.learning_rate,
                weight_decay=self.weight_decay,
                warmup_fraction=self.warmup_fraction,
            ),
            eval_every=self.eval_every,
        )

    def fit(self, X, y, graph=None, train_idx=None, val_idx=None):
        X = check_feature_matrix(X)
        y = check_binary_labels(y, X.shape[0])
        if self._needs_graph():
            graph = check_graph(graph, X.shape[0])
        if train_idx is None:
            train_idx = np.arange(X.shape[0])
        train_idx = check_indices(train_idx, X.shape[0], "train_idx")
        if val_idx is not None:
            val_idx = check_indices(val_idx, X.shape[0], "val_idx")

        result = train_model(
            self._kind(), graph, X, y, train_idx, val_idx,
            self._model_cfg(X.shape[1]), self._train_cfg(),
            walk_cfg=self._walk_cfg(), threshold=self.threshold)

        self.result_ = result
        self.params_ = result.params
        self.history_ = result.history
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        self._X = X
        self._graph = graph
        return self

    def _scores(self, idx=None):
        if not hasattr(self, "params_"):
            raise RuntimeError("estimator is not fitted")
        if idx is None:
            idx = np.arange(self._X.shape[0])
        idx = check_indices(idx, self._X.shape[0], "idx")
        return predict_scores(
            self._kind(), self.params_, self._graph, self._X, idx,
            self.result_.model_cfg, self.result_.walk_cfg,
            seed=self.random_state)

    def decision_function(self, idx=None):
        return self._scores(idx)[1]

    def predict_proba(self, idx=None):
        probs = self._scores(idx)[2]
        return np.column_stack([1.0 - probs, probs])

    def predict(self, idx=None):
        return (self._scores(idx)[2] >= self.threshold).astype(np.int64)

    def transform(self, idx=None):
        """Embeddings for the requested nodes (unit L2 rows)."""
        z = self._scores(idx)[0]
        if z is None:
            raise RuntimeError(f"{type(self).__name__} has no embeddings")
        return z


class SAGNNClassifier(_NodeClassifierBase):
    """Skip-aggregation graph classifier over second-order neighborhoods.

    Aggregates each tweet's representation from the tweets its author and
    retweeters interacted with, transforming both sides of every
    center-neighbor pair with edge-type-specific weights when
    ``edge_type_aware`` is on.
    """

    def __init__(self, num_layers=3, hidden_dim=64, aggregator="max",
                 edge_type_aware=True, activation="relu", head_bias=False,
                 num_walks=20, top_k=10, exclude_self=True,
                 epochs=5, batch_size=512, learning_rate=1e-3,
                 weight_decay=0.01, warmup_fraction=0.06, eval_every=None,
                 threshold=0.5, random_state=0):
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.aggregator = aggregator
        self.edge_type_aware = edge_type_aware
        self.activation = activation
        self.head_bias = head_bias
        self.num_walks = num_walks
        self.top_k = top_k
        self.exclude_self = exclude_self
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.warmup_fraction = warmup_fraction
        self.eval_every = eval_every
        self.threshold = threshold
        self.random_state = random_state

    def _kind(self) -> str:
        return "sagnn" if self.edge_type_aware else "sagnn_no_edge_type"

    def _model_cfg(self, input_dim: int) -> SAGNNConfig:
        return SAGNNConfig(
            input_dim=input_dim, num_layers=self.num_layers,
            hidden_dim=self.hidden_dim, aggregator=self.aggregator,
            edge_type_aware=self.edge_type_aware, activation=self.activation,
            head_bias=self.head_bias)

    def _walk_cfg(self) -> WalkConfig:
        return WalkConfig(num_walks=self.num_walks, top_k=self.top_k,
                          rng_seed=self.random_state,
                          exclude_self=self.exclude_self)


class FirstOrderGNNClassifier(_NodeClassifierBase):
    """First-order mean-aggregation baseline over the bipartite graph.

    User nodes need initial features; ``init_strategy`` picks random rows,
    the centroid of each user's tweets, or their medoid.
    """

    def __init__(self, num_layers=2, hidden_dim=64, fanout=10,
                 init_strategy="random", activation="relu", head_bias=False,
                 epochs=5, batch_size=512, learning_rate=1e-3,
                 weight_decay=0.01, warmup_fraction=0.06, eval_every=None,
                 threshold=0.5, random_state=0):
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.fanout = fanout
        self.init_strategy = init_strategy
        self.activation = activation
        self.head_bias = head_bias
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.warmup_fraction = warmup_fraction
        self.eval_every = eval_every
        self.threshold = threshold
        self.random_state = random_state

    def _kind(self) -> str:
        return "baseline"

    def _model_cfg(self, input_dim: int) -> BaselineConfig:
        return BaselineConfig(
            input_dim=input_dim, num_layers=self.num_layers,
            hidden_dim=self.hidden_dim, fanout=self.fanout,
            init_strategy=self.init_strategy, activation=self.activation,
            head_bias=self.head_bias)


class ContentOnlyClassifier(_NodeClassifierBase):
    """Linear classifier on tweet features alone; ignores the graph."""

    def __init__(self, head_bias=False, epochs=5, batch_size=512,
                 learning_rate=1e-3, weight_decay=0.01, warmup_fraction=0.06,
                 eval_every=None, threshold=0.5, random_state=0):
        self.head_bias = head_bias
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.warmup_fraction = warmup_fraction
        self.eval_every = eval_every
        self.threshold = threshold
        self.random_state = random_state

    def _kind(self) -> str:
        return "content_only"

    def _needs_graph(self) -> bool:
        return False

    def _model_cfg(self, input_dim: int) -> ContentConfig:
        return ContentConfig(input_dim=input_dim, head_bias=self.head_bias)

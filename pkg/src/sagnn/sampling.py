"""Second-order neighborhood sampling by length-2 random walks.

For a center tweet, a walk steps to a uniformly random adjacent user and
then to a uniformly random tweet adjacent to that user. The neighborhood is
the top-k most visited tweets, each annotated with the edge-type pair of its
most-traversed bridge. Walk length is fixed at 2: in a bipartite graph that
is exactly what lands a tweet back on the tweet side.

Draws come from counter-based streams (see ``rng``), so a (seed, layer,
center) triple yields bit-identical samples whether centers are sampled one
at a time or as a vectorized block, and regardless of scheduling order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ValidationError
from .graph import BipartiteGraph, EdgeType


@dataclass(frozen=True)
class WalkConfig:
    """Sampling knobs. Walk length is fixed at 2 and not configurable."""

    num_walks: int = 20
    top_k: int = 10
    rng_seed: int = 0
    exclude_self: bool = True

    def __post_init__(self):
        if self.num_walks < 1:
            raise ValidationError("num_walks must be >= 1")
        if self.top_k < 1:
            raise ValidationError("top_k must be >= 1")


@dataclass(frozen=True)
class NeighborEntry:
    neighbor: int
    center_edge: EdgeType
    neighbor_edge: EdgeType
    visit_count: int
    weight: float


@dataclass
class SampledNeighborhood:
    """A center tweet's sampled second-order neighbors.

    Entries are sorted by descending visit count, ties by ascending neighbor
    index, and their weights sum to 1 when any entry exists. ``isolated``
    flags a center with no adjacent users at all (possible only on graphs
    built without the one-author guarantee).
    """

    center: int
    entries: list = field(default_factory=list)
    isolated: bool = False


@dataclass
class NeighborhoodBlock:
    """Sampled neighborhoods for many centers, as flat CSR-style arrays."""

    centers: np.ndarray       # int64 [C]
    indptr: np.ndarray        # int64 [C+1], entry offsets per center
    neighbor: np.ndarray      # int64 [P]
    center_edge: np.ndarray   # uint8 [P]
    neighbor_edge: np.ndarray # uint8 [P]
    visit_count: np.ndarray   # int64 [P]
    weight: np.ndarray        # float64 [P]
    isolated: np.ndarray      # bool [C]

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def num_pairs(self) -> int:
        return len(self.neighbor)

    def neighborhood(self, i: int) -> SampledNeighborhood:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        entries = [
            NeighborEntry(
                neighbor=int(self.neighbor[j]),
                center_edge=EdgeType(int(self.center_edge[j])),
                neighbor_edge=EdgeType(int(self.neighbor_edge[j])),
                visit_count=int(self.visit_count[j]),
                weight=float(self.weight[j]),
            )
            for j in range(lo, hi)
        ]
        return SampledNeighborhood(
            center=int(self.centers[i]),
            entries=entries,
            isolated=bool(self.isolated[i]),
        )


def _changes(*columns) -> np.ndarray:
    """Boolean mask marking the first row of each distinct key group."""
    n = len(columns[0])
    new = np.zeros(n, dtype=bool)
    if n:
        new[0] = True
        for col in columns:
            new[1:] |= col[1:] != col[:-1]
    return new


def _tally(pos, bridge, cedge, nbr, nedge, top_k):
    """Reduce raw walk records to per-center top-k (neighbor, edge pair, count).

    A (center, neighbor) pair reachable through several bridges is attributed
    to the bridge traversed most often; ties prefer a POST center edge, then
    the smaller bridge-user index, then a POST neighbor edge.
    """
    empty = np.array([], dtype=np.int64)
    if len(pos) == 0:
        return empty, empty, empty.astype(np.uint8), empty.astype(np.uint8), empty
    ce = cedge.astype(np.int64)
    ne = nedge.astype(np.int64)

    order = np.lexsort((ne, bridge, ce, nbr, pos))
    g_pos, g_bridge, g_ce = pos[order], bridge[order], ce[order]
    g_nbr, g_ne = nbr[order], ne[order]
    new = _changes(g_pos, g_nbr, g_ce, g_bridge, g_ne)
    starts = np.flatnonzero(new)
    sub_cnt = np.diff(np.append(starts, len(order)))
    g_pos, g_bridge, g_ce = g_pos[starts], g_bridge[starts], g_ce[starts]
    g_nbr, g_ne = g_nbr[starts], g_ne[starts]

    pair_new = _changes(g_pos, g_nbr)
    pair_starts = np.flatnonzero(pair_new)
    pair_pos = g_pos[pair_starts]
    pair_nbr = g_nbr[pair_starts]
    pair_cnt = np.add.reduceat(sub_cnt, pair_starts)

    # Modal bridge per pair: best (count, tie rule) subgroup comes first.
    order2 = np.lexsort((g_ne, g_bridge, g_ce, -sub_cnt, g_nbr, g_pos))
    firsts = order2[np.flatnonzero(_changes(g_pos[order2], g_nbr[order2]))]
    pair_ce = g_ce[firsts]
    pair_ne = g_ne[firsts]

    # Top-k per center by descending count, ties by ascending neighbor index.
    order3 = np.lexsort((pair_nbr, -pair_cnt, pair_pos))
    sp = pair_pos[order3]
    group_starts = np.flatnonzero(_changes(sp))
    group_sizes = np.diff(np.append(group_starts, len(sp)))
    rank = np.arange(len(sp)) - np.repeat(group_starts, group_sizes)
    sel = order3[rank < top_k]
    return (pair_pos[sel], pair_nbr[sel],
            pair_ce[sel].astype(np.uint8), pair_ne[sel].astype(np.uint8),
            pair_cnt[sel])


def sample_block(graph: BipartiteGraph, centers, cfg: WalkConfig,
                 layer: int = 0, seed: int | None = None) -> NeighborhoodBlock:
    """Sample neighborhoods for many centers at once.

    Equivalent, entry for entry, to calling :func:`sample_neighborhood` on
    each center with the same (seed, layer).
    """
    centers = np.asarray(centers, dtype=np.int64)
    if centers.size and (centers.min() < 0 or centers.max() >= graph.num_tweets):
        raise ValidationError("center index out of range")
    if seed is None:
        seed = cfg.rng_seed
    num_centers = len(centers)
    deg = graph.tweet_indptr[centers + 1] - graph.tweet_indptr[centers]
    isolated = deg == 0

    active = np.flatnonzero(~isolated)
    pos = np.repeat(active, cfg.num_walks)
    cen = centers[pos]
    walk = np.tile(np.arange(cfg.num_walks, dtype=np.int64), len(active))

    r1 = rng.randint(deg[pos], seed, rng.WALK, layer, cen, walk, 1)
    e1 = graph.tweet_indptr[cen] + r1
    bridge = graph.tweet_nbr[e1]
    cedge = graph.tweet_etype[e1]
    udeg = graph.user_indptr[bridge + 1] - graph.user_indptr[bridge]
    r2 = rng.randint(udeg, seed, rng.WALK, layer, cen, walk, 2)
    e2 = graph.user_indptr[bridge] + r2
    nbr = graph.user_nbr[e2]
    nedge = graph.user_etype[e2]

    if cfg.exclude_self:
        keep = nbr != cen
        pos, cen, bridge, cedge, nbr, nedge = (
            a[keep] for a in (pos, cen, bridge, cedge, nbr, nedge))

    out_pos, out_nbr, out_ce, out_ne, out_cnt = _tally(
        pos, bridge, cedge, nbr, nedge, cfg.top_k)

    # A reachable center whose every walk returned to itself gets a self-pair
    # so downstream shapes stay uniform.
    covered = np.zeros(num_centers, dtype=bool)
    covered[out_pos] = True
    fallback = np.flatnonzero(~covered & ~isolated)
    if fallback.size:
        out_pos = np.concatenate([out_pos, fallback])
        out_nbr = np.concatenate([out_nbr, centers[fallback]])
        post = np.full(fallback.size, EdgeType.POST, dtype=np.uint8)
        out_ce = np.concatenate([out_ce, post])
        out_ne = np.concatenate([out_ne, post])
        out_cnt = np.concatenate([out_cnt, np.ones(fallback.size, dtype=np.int64)])
        order = np.argsort(out_pos, kind="stable")
        out_pos, out_nbr, out_ce, out_ne, out_cnt = (
            a[order] for a in (out_pos, out_nbr, out_ce, out_ne, out_cnt))

    per_center = np.bincount(out_pos, minlength=num_centers)
    indptr = np.zeros(num_centers + 1, dtype=np.int64)
    np.cumsum(per_center, out=indptr[1:])
    weight = np.zeros(len(out_nbr), dtype=np.float64)
    if len(out_nbr):
        nonempty = per_center > 0
        row_starts = indptr[:-1][nonempty]
        sums = np.add.reduceat(out_cnt, row_starts)
        weight = out_cnt / np.repeat(sums, per_center[nonempty])

    return NeighborhoodBlock(
        centers=centers, indptr=indptr, neighbor=out_nbr,
        center_edge=out_ce, neighbor_edge=out_ne,
        visit_count=out_cnt, weight=weight, isolated=isolated,
    )


def sample_neighborhood(graph: BipartiteGraph, center: int, cfg: WalkConfig,
                        layer: int = 0, seed: int | None = None) -> SampledNeighborhood:
    """Sample one center's second-order neighborhood.

    Deterministic given (graph, seed, layer, center). A center with no
    adjacent users comes back empty with ``isolated`` set.
    """
    if not 0 <= center < graph.num_tweets:
        raise ValidationError(
            f"center {center} out of range for {graph.num_tweets} tweets")
    block = sample_block(graph, np.array([center]), cfg, layer=layer, seed=seed)
    return block.neighborhood(0)


def exact_two_step_distribution(graph: BipartiteGraph, center: int,
                                exclude_self: bool = True) -> dict[int, float]:
    """Exact visit distribution of one walk step pair from ``center``.

    P(u) sums (1/deg(center)) * (1/deg(w)) over adjacent users w with an edge
    to u. Probabilities sum to 1 before self-exclusion; excluding the center
    renormalizes over what remains (empty if the center is all it can reach).
    Brute force by construction; kept as the sampler's test oracle.
    """
    if not 0 <= center < graph.num_tweets:
        raise ValidationError(
            f"center {center} out of range for {graph.num_tweets} tweets")
    users, _ = graph.tweet_neighbors(center)
    if len(users) == 0:
        return {}
    dist: dict[int, float] = {}
    p_step1 = 1.0 / len(users)
    for u in users:
        tweets, _ = graph.user_neighbors(int(u))
        p_step2 = 1.0 / len(tweets)
        for t in tweets:
            dist[int(t)] = dist.get(int(t), 0.0) + p_step1 * p_step2
    if exclude_self:
        dist.pop(center, None)
        total = sum(dist.values())
        if total > 0:
            dist = {t: p / total for t, p in dist.items()}
    return dist


_SIDE_CODES = {"tweet": 0, "user": 1}


def sample_first_order(graph: BipartiteGraph, side: str, node: int, k: int,
                       seed: int = 0, layer: int = 0) -> list[tuple[int, EdgeType]]:
    """Uniform-with-replacement first-order sample, then deduplicated.

    ``side`` selects which partition ``node`` lives on. Order of the result
    follows the first draw of each distinct (neighbor, type) entry.
    """
    if side not in _SIDE_CODES:
        raise ValidationError(f"side must be 'tweet' or 'user', got {side!r}")
    if k < 1:
        raise ValidationError("k must be >= 1")
    indptr, nbr, et = (
        (graph.tweet_indptr, graph.tweet_nbr, graph.tweet_etype)
        if side == "tweet"
        else (graph.user_indptr, graph.user_nbr, graph.user_etype))
    if not 0 <= node < len(indptr) - 1:
        raise ValidationError(f"{side} index {node} out of range")
    deg = int(indptr[node + 1] - indptr[node])
    if deg == 0:
        warnings.warn(f"{side} {node} has no neighbors; empty sample")
        return []
    draws = rng.randint(deg, seed, rng.FIRST_ORDER, layer,
                        _SIDE_CODES[side], node, np.arange(k, dtype=np.int64))
    picks = indptr[node] + draws
    out: list[tuple[int, EdgeType]] = []
    seen = set()
    for p in picks:
        entry = (int(nbr[p]), EdgeType(int(et[p])))
        if entry not in seen:
            seen.add(entry)
            out.append(entry)
    return out


def first_order_block(graph: BipartiteGraph, side: str, nodes, k: int,
                      seed: int = 0, layer: int = 0):
    """Vectorized :func:`sample_first_order` over many nodes.

    Returns (indptr, neighbor, edge_type) flat arrays; per node identical to
    the scalar call. Nodes with no neighbors contribute empty rows.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    indptr_g, nbr_g, et_g = (
        (graph.tweet_indptr, graph.tweet_nbr, graph.tweet_etype)
        if side == "tweet"
        else (graph.user_indptr, graph.user_nbr, graph.user_etype))
    deg = indptr_g[nodes + 1] - indptr_g[nodes]
    active = np.flatnonzero(deg > 0)
    pos = np.repeat(active, k)
    node_rep = nodes[pos]
    j = np.tile(np.arange(k, dtype=np.int64), len(active))
    draws = rng.randint(deg[pos], seed, rng.FIRST_ORDER, layer,
                        _SIDE_CODES[side], node_rep, j)
    picks = indptr_g[node_rep] + draws
    nbrs = nbr_g[picks]
    ets = et_g[picks].astype(np.int64)

    order = np.lexsort((j, ets, nbrs, pos))
    new = _changes(pos[order], nbrs[order], ets[order])
    sel = order[np.flatnonzero(new)]
    sel = sel[np.lexsort((j[sel], pos[sel]))]  # restore first-draw order

    counts = np.bincount(pos[sel], minlength=len(nodes))
    out_indptr = np.zeros(len(nodes) + 1, dtype=np.int64)
    np.cumsum(counts, out=out_indptr[1:])
    return out_indptr, nbrs[sel], ets[sel].astype(np.uint8)


@dataclass
class LayerFrontier:
    """One layer's sampled neighborhoods plus row maps into the level below."""

    block: NeighborhoodBlock
    center_rows: np.ndarray        # row of each center in the previous level
    pair_neighbor_rows: np.ndarray # row of each pair's neighbor in the previous level


@dataclass
class BatchBlocks:
    """Layer-wise frontier expansion for a mini-batch of tweet centers."""

    base_nodes: np.ndarray     # level-0 nodes whose input features are needed
    layers: list              # LayerFrontier, index 0 = first layer applied
    batch: np.ndarray          # the requested batch, original order
    batch_rows: np.ndarray     # rows of the batch in the top layer's centers


def expand_batch(graph: BipartiteGraph, batch, cfg: WalkConfig,
                 num_layers: int, seed: int | None = None) -> BatchBlocks:
    """Expand a batch into per-layer neighborhood blocks.

    Each layer's required centers are the union of the layer above's centers
    and their sampled neighbors; sampling is independent per layer through a
    fresh (layer, center) stream.
    """
    if num_layers < 1:
        raise ValidationError("num_layers must be >= 1")
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValidationError("batch is empty")
    if batch.min() < 0 or batch.max() >= graph.num_tweets:
        raise ValidationError("batch index out of range")
    if seed is None:
        seed = cfg.rng_seed

    need = np.unique(batch)
    top_down = []
    for layer in range(num_layers, 0, -1):
        block = sample_block(graph, need, cfg, layer=layer, seed=seed)
        prev = np.union1d(need, block.neighbor)
        top_down.append((block, prev))
        need = prev

    base_nodes = need
    layers = []
    for block, prev in reversed(top_down):
        layers.append(LayerFrontier(
            block=block,
            center_rows=np.searchsorted(prev, block.centers),
            pair_neighbor_rows=np.searchsorted(prev, block.neighbor),
        ))
    batch_rows = np.searchsorted(layers[-1].block.centers, batch)
    return BatchBlocks(base_nodes=base_nodes, layers=layers,
                       batch=batch, batch_rows=batch_rows)


_FIXED_MODE_MAX_TWEETS = 10_000


def fixed_blocks(graph: BipartiteGraph, cfg: WalkConfig,
                 num_layers: int, seed: int | None = None) -> BatchBlocks:
    """Full-graph mode with one fixed neighborhood reused by every layer.

    Evaluates the forward pass over all tweets at once, which is only
    feasible on small graphs; mini-batch training uses :func:`expand_batch`.
    """
    if num_layers < 1:
        raise ValidationError("num_layers must be >= 1")
    if graph.num_tweets > _FIXED_MODE_MAX_TWEETS:
        raise ValidationError(
            f"fixed-neighborhood mode supports at most "
            f"{_FIXED_MODE_MAX_TWEETS} tweets; use expand_batch")
    all_tweets = np.arange(graph.num_tweets, dtype=np.int64)
    block = sample_block(graph, all_tweets, cfg, layer=0, seed=seed)
    layers = [
        LayerFrontier(block=block, center_rows=all_tweets,
                      pair_neighbor_rows=block.neighbor)
        for _ in range(num_layers)
    ]
    return BatchBlocks(base_nodes=all_tweets, layers=layers,
                       batch=all_tweets, batch_rows=all_tweets)


def dump_neighborhoods_tsv(path, neighborhoods) -> None:
    """Debug dump: center, neighbor, both edge tokens, count, weight."""
    with open(path, "w", encoding="utf-8") as fh:
        for nb in neighborhoods:
            for e in nb.entries:
                fh.write(f"{nb.center}\t{e.neighbor}\t{e.center_edge.token}"
                         f"\t{e.neighbor_edge.token}\t{e.visit_count}"
                         f"\t{e.weight!r}\n")

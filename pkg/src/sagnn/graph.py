"""User-tweet bipartite interaction graphs with typed edges.

Two behaviors (posting, retweeting) are stored as typed edges between user
nodes and tweet nodes. Adjacency is kept in CSR form from both directions so
traversal is O(degree) either way. Graphs are immutable after construction
and safe to read concurrently from many workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, ValidationError

_MAGIC = b"SAGG"
_VERSION = 1


class EdgeType(IntEnum):
    """A user's behavior toward a tweet. Integer codes are stable on disk."""

    POST = 0
    RETWEET = 1

    @classmethod
    def from_token(cls, token: str) -> "EdgeType":
        if token == "post":
            return cls.POST
        if token == "retweet":
            return cls.RETWEET
        raise ValidationError(
            f"unknown edge type {token!r}; expected 'post' or 'retweet'"
        )

    @property
    def token(self) -> str:
        return "post" if self is EdgeType.POST else "retweet"


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Immutable CSR adjacency in both directions with per-edge type.

    ``tweet_indptr``/``tweet_nbr``/``tweet_etype`` give, per tweet row, the
    adjacent user indices and edge types; the ``user_*`` triple is the exact
    transpose. Rows are sorted by (neighbor index, type) and never contain a
    duplicate (neighbor, type) pair. The arrays must not be mutated.
    """

    num_tweets: int
    num_users: int
    tweet_indptr: np.ndarray
    tweet_nbr: np.ndarray
    tweet_etype: np.ndarray
    user_indptr: np.ndarray
    user_nbr: np.ndarray
    user_etype: np.ndarray
    tweet_ids: tuple
    user_ids: tuple

    @property
    def num_edges(self) -> int:
        return int(self.tweet_nbr.shape[0])

    def tweet_degree(self, i: int) -> int:
        return int(self.tweet_indptr[i + 1] - self.tweet_indptr[i])

    def user_degree(self, j: int) -> int:
        return int(self.user_indptr[j + 1] - self.user_indptr[j])

    def tweet_neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(user indices, edge types) adjacent to tweet ``i``; views, not copies."""
        lo, hi = self.tweet_indptr[i], self.tweet_indptr[i + 1]
        return self.tweet_nbr[lo:hi], self.tweet_etype[lo:hi]

    def user_neighbors(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.user_indptr[j], self.user_indptr[j + 1]
        return self.user_nbr[lo:hi], self.user_etype[lo:hi]

    def triples(self) -> np.ndarray:
        """All edges as an (E, 3) array of (tweet, user, type), tweet-side order."""
        t = np.repeat(np.arange(self.num_tweets, dtype=np.int64),
                      np.diff(self.tweet_indptr))
        return np.column_stack([t, self.tweet_nbr, self.tweet_etype.astype(np.int64)])

    def equals(self, other: "BipartiteGraph") -> bool:
        return (
            self.num_tweets == other.num_tweets
            and self.num_users == other.num_users
            and self.tweet_ids == other.tweet_ids
            and self.user_ids == other.user_ids
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("tweet_indptr", "tweet_nbr", "tweet_etype",
                          "user_indptr", "user_nbr", "user_etype")
            )
        )


@dataclass
class GraphStats:
    num_tweets: int
    num_users: int
    num_post_edges: int
    num_retweet_edges: int
    tweet_degree_hist: np.ndarray  # index = degree, value = node count
    user_degree_hist: np.ndarray

    def to_dict(self) -> dict:
        return {
            "num_tweets": self.num_tweets,
            "num_users": self.num_users,
            "num_post_edges": self.num_post_edges,
            "num_retweet_edges": self.num_retweet_edges,
            "tweet_degree_hist": self.tweet_degree_hist.tolist(),
            "user_degree_hist": self.user_degree_hist.tolist(),
        }


def _coerce_edge(record, position: int) -> tuple[str, str, int]:
    try:
        tweet_id, user_id, etype = record
    except (TypeError, ValueError):
        raise ValidationError(
            f"edge record {position}: expected (tweet_id, user_id, edge_type)"
        ) from None
    if not isinstance(tweet_id, str) or not isinstance(user_id, str):
        raise ValidationError(f"edge record {position}: ids must be strings")
    if isinstance(etype, str):
        etype = EdgeType.from_token(etype)
    try:
        etype = EdgeType(etype)
    except ValueError:
        raise ValidationError(
            f"edge record {position}: bad edge type {etype!r}"
        ) from None
    return tweet_id, user_id, int(etype)


def build_graph(edges: Iterable, strict_author: bool = False) -> BipartiteGraph:
    """Build a bipartite graph from (tweet id, user id, edge type) records.

    Dense 0-based indices are assigned in first-appearance order and duplicate
    (tweet, user, type) triples collapse to one edge. With ``strict_author``
    every tweet must carry exactly one POST edge (its author), which pipeline
    outputs guarantee; leave it off for ad-hoc graphs.
    """
    tweet_index: dict[str, int] = {}
    user_index: dict[str, int] = {}
    t_list, u_list, e_list = [], [], []
    for position, record in enumerate(edges, start=1):
        tweet_id, user_id, code = _coerce_edge(record, position)
        t_list.append(tweet_index.setdefault(tweet_id, len(tweet_index)))
        u_list.append(user_index.setdefault(user_id, len(user_index)))
        e_list.append(code)
    if not t_list:
        raise ValidationError("edge list is empty")

    t = np.asarray(t_list, dtype=np.int64)
    u = np.asarray(u_list, dtype=np.int64)
    e = np.asarray(e_list, dtype=np.uint8)
    num_tweets = len(tweet_index)
    num_users = len(user_index)

    # Tweet-side CSR: sort by (tweet, user, type), drop duplicate triples.
    order = np.lexsort((e, u, t))
    ts, us, es = t[order], u[order], e[order]
    keep = np.empty(len(ts), dtype=bool)
    keep[0] = True
    keep[1:] = (ts[1:] != ts[:-1]) | (us[1:] != us[:-1]) | (es[1:] != es[:-1])
    ts, us, es = ts[keep], us[keep], es[keep]
    tweet_indptr = np.zeros(num_tweets + 1, dtype=np.int64)
    np.cumsum(np.bincount(ts, minlength=num_tweets), out=tweet_indptr[1:])

    # User-side CSR from the deduplicated triples.
    order2 = np.lexsort((es, ts, us))
    user_indptr = np.zeros(num_users + 1, dtype=np.int64)
    np.cumsum(np.bincount(us, minlength=num_users), out=user_indptr[1:])

    if strict_author:
        post_counts = np.bincount(ts[es == EdgeType.POST], minlength=num_tweets)
        bad = np.flatnonzero(post_counts != 1)
        if bad.size:
            ids = sorted(tweet_index, key=tweet_index.get)
            offender = ids[bad[0]]
            raise ValidationError(
                f"strict_author: tweet {offender!r} has {post_counts[bad[0]]}"
                f" post edges (expected exactly 1); {bad.size} tweet(s) affected"
            )

    return BipartiteGraph(
        num_tweets=num_tweets,
        num_users=num_users,
        tweet_indptr=tweet_indptr,
        tweet_nbr=us,
        tweet_etype=es,
        user_indptr=user_indptr,
        user_nbr=ts[order2],
        user_etype=es[order2],
        tweet_ids=tuple(sorted(tweet_index, key=tweet_index.get)),
        user_ids=tuple(sorted(user_index, key=user_index.get)),
    )


def stats(graph: BipartiteGraph) -> GraphStats:
    """Exact node/edge counts and degree histograms for a graph."""
    num_post = int(np.count_nonzero(graph.tweet_etype == EdgeType.POST))
    tweet_deg = np.diff(graph.tweet_indptr)
    user_deg = np.diff(graph.user_indptr)
    return GraphStats(
        num_tweets=graph.num_tweets,
        num_users=graph.num_users,
        num_post_edges=num_post,
        num_retweet_edges=graph.num_edges - num_post,
        tweet_degree_hist=np.bincount(tweet_deg),
        user_degree_hist=np.bincount(user_deg),
    )


# --- binary serialization ---------------------------------------------------
#
# Layout (little-endian): magic "SAGG", u32 version, u64 num_tweets,
# u64 num_users, u64 num_edges, tweet CSR (indptr i64, neighbors i64,
# types u8), user CSR likewise, then the id tables (u32 byte length +
# UTF-8 bytes per id, tweets first).


def save_graph(graph: BipartiteGraph, path) -> None:
    if graph.num_tweets == 0:
        raise ValidationError("refusing to save an empty graph")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<QQQ", graph.num_tweets, graph.num_users,
                             graph.num_edges))
        for arr, dt in (
            (graph.tweet_indptr, "<i8"), (graph.tweet_nbr, "<i8"),
            (graph.tweet_etype, "<u1"), (graph.user_indptr, "<i8"),
            (graph.user_nbr, "<i8"), (graph.user_etype, "<u1"),
        ):
            fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())
        for table in (graph.tweet_ids, graph.user_ids):
            for ident in table:
                raw = ident.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated graph file while reading {what}")
    return data


def load_graph(path) -> BipartiteGraph:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != _MAGIC:
            raise FormatError(f"{path}: not a graph file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != _VERSION:
            raise FormatError(
                f"{path}: unsupported graph format version {version}"
            )
        num_tweets, num_users, num_edges = struct.unpack(
            "<QQQ", _read_exact(fh, 24, "counts")
        )

        def read_array(count, dt, what):
            raw = _read_exact(fh, count * np.dtype(dt).itemsize, what)
            return np.frombuffer(raw, dtype=dt).astype(dt[1:], copy=True)

        tweet_indptr = read_array(num_tweets + 1, "<i8", "tweet indptr")
        tweet_nbr = read_array(num_edges, "<i8", "tweet neighbors")
        tweet_etype = read_array(num_edges, "<u1", "tweet edge types")
        user_indptr = read_array(num_users + 1, "<i8", "user indptr")
        user_nbr = read_array(num_edges, "<i8", "user neighbors")
        user_etype = read_array(num_edges, "<u1", "user edge types")

        def read_ids(count, what):
            out = []
            for _ in range(count):
                (ln,) = struct.unpack("<I", _read_exact(fh, 4, what))
                out.append(_read_exact(fh, ln, what).decode("utf-8"))
            return tuple(out)

        tweet_ids = read_ids(num_tweets, "tweet ids")
        user_ids = read_ids(num_users, "user ids")

    for name, indptr, size in (("tweet", tweet_indptr, num_tweets),
                               ("user", user_indptr, num_users)):
        if indptr[0] != 0 or indptr[-1] != num_edges or np.any(np.diff(indptr) < 0):
            raise FormatError(f"{path}: corrupt {name} index pointer")
    return BipartiteGraph(
        num_tweets=int(num_tweets), num_users=int(num_users),
        tweet_indptr=tweet_indptr, tweet_nbr=tweet_nbr, tweet_etype=tweet_etype,
        user_indptr=user_indptr, user_nbr=user_nbr, user_etype=user_etype,
        tweet_ids=tweet_ids, user_ids=user_ids,
    )


# --- edge list TSV ----------------------------------------------------------


def read_edge_tsv(path) -> list[tuple[str, str, EdgeType]]:
    """Read edges from a UTF-8 TSV: ``tweet_id<TAB>user_id<TAB>{post|retweet}``."""
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise FormatError(
                    f"{path}:{lineno}: expected 3 tab-separated fields,"
                    f" got {len(fields)}"
                )
            tweet_id, user_id, token = fields
            if not tweet_id or not user_id:
                raise FormatError(f"{path}:{lineno}: empty id field")
            try:
                etype = EdgeType.from_token(token)
            except ValidationError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            edges.append((tweet_id, user_id, etype))
    return edges


def write_edge_tsv(path, edges: Sequence[tuple[str, str, EdgeType]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tweet_id, user_id, etype in edges:
            fh.write(f"{tweet_id}\t{user_id}\t{EdgeType(etype).token}\n")


def graph_edge_list(graph: BipartiteGraph) -> list[tuple[str, str, EdgeType]]:
    """Edges as external-id records, in tweet-side CSR order."""
    out = []
    for i in range(graph.num_tweets):
        users, types = graph.tweet_neighbors(i)
        for u, et in zip(users, types):
            out.append((graph.tweet_ids[i], graph.user_ids[u], EdgeType(et)))
    return out

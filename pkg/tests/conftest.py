import pytest

from sagnn.graph import EdgeType, build_graph

TOY_EDGES = [
    ("tA", "uA", EdgeType.POST),
    ("tA", "uB", EdgeType.RETWEET),
    ("tB", "uA", EdgeType.POST),
    ("tC", "uB", EdgeType.POST),
    ("tD", "uB", EdgeType.RETWEET),
]


@pytest.fixture
def toy_graph():
    """Five-edge toy graph: tweets {A..D}, users {A,B}.

    Tweet A reaches {B, C, D} in two steps: B via user A, C and D via user B.
    """
    return build_graph(TOY_EDGES)


@pytest.fixture
def star_graph():
    """One user posted tweets t0..t3."""
    return build_graph([(f"t{i}", "u0", EdgeType.POST) for i in range(4)])


def random_bipartite_graph(gen, num_tweets=None, num_users=None,
                           extra_edges=None, strict=True):
    """Small random graph: one author per tweet plus random retweet edges."""
    num_tweets = num_tweets if num_tweets is not None else int(gen.integers(3, 26))
    num_users = num_users if num_users is not None else int(gen.integers(2, 12))
    extra_edges = extra_edges if extra_edges is not None \
        else int(gen.integers(0, 3 * num_tweets))
    edges = [(f"t{i}", f"u{gen.integers(num_users)}", EdgeType.POST)
             for i in range(num_tweets)]
    for _ in range(extra_edges):
        edges.append((f"t{gen.integers(num_tweets)}",
                      f"u{gen.integers(num_users)}", EdgeType.RETWEET))
    return build_graph(edges, strict_author=strict)

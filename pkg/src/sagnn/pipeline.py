"""Weak labeling: hashtag lexicons, co-occurrence expansion, cleanup, features.

Turns a raw post corpus into a labeled corpus: posts are labeled by the
unanimous polarity of their lexicon hashtags, annotation hashtags are
stripped from the text so no label information survives in model inputs,
retweet stubs are folded into their originals as retweeter metadata, and
texts become feature vectors (signed hashed token counts, or dense rows
loaded from an external embedding file).
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import FormatError, ValidationError
from .graph import EdgeType

_HASHTAG_RE = re.compile(r"#(\w+)")
_RETWEET_PREFIX = "RT @"


class Polarity(Enum):
    PRO_A = "proA"
    PRO_B = "proB"

    @classmethod
    def from_token(cls, token: str) -> "Polarity":
        for member in cls:
            if member.value == token:
                return member
        raise ValidationError(f"unknown polarity {token!r};"
                              " expected 'proA' or 'proB'")


@dataclass
class RawPost:
    id: str
    text: str
    author: str
    retweeters: list = field(default_factory=list)
    timestamp: float | None = None
    retweet_of: str | None = None


@dataclass
class HashtagLexicon:
    """Lowercase hashtag -> polarity, with seed/expanded provenance."""

    entries: dict = field(default_factory=dict)      # tag -> Polarity
    provenance: dict = field(default_factory=dict)   # tag -> "seed"|"expanded"

    def add(self, tag: str, polarity: Polarity, provenance: str = "seed"):
        if tag != tag.lower():
            raise ValidationError(f"lexicon tags must be lowercase: {tag!r}")
        if provenance not in ("seed", "expanded"):
            raise ValidationError(f"bad provenance {provenance!r}")
        existing = self.entries.get(tag)
        if existing is not None and existing is not polarity:
            raise ValidationError(
                f"tag {tag!r} cannot carry both polarities")
        self.entries[tag] = polarity
        self.provenance[tag] = provenance

    def __contains__(self, tag: str) -> bool:
        return tag in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def copy(self) -> "HashtagLexicon":
        return HashtagLexicon(entries=dict(self.entries),
                              provenance=dict(self.provenance))


@dataclass
class LabeledPost:
    id: str
    text: str        # cleaned: no lexicon hashtag survives
    label: int       # 1 = configured positive polarity
    author: str
    retweeters: list


@dataclass
class LabeledCorpus:
    posts: list
    edges: list                      # (post id, user id, EdgeType)
    drop_counts: dict
    features: np.ndarray | None = None

    @property
    def ids(self) -> list:
        return [p.id for p in self.posts]

    @property
    def labels(self) -> np.ndarray:
        return np.asarray([p.label for p in self.posts], dtype=np.int64)


def extract_hashtags(text: str) -> list:
    """Lowercased hashtags in order of appearance, duplicates preserved.

    A tag is '#' followed by a maximal run of letters, digits, or underscore.
    """
    return [m.lower() for m in _HASHTAG_RE.findall(text)]


def expand_lexicon(seed_lexicon: HashtagLexicon, posts, min_cooccur: int = 5,
                   purity: float = 0.9, rounds: int = 1) -> HashtagLexicon:
    """Admit hashtags that co-occur consistently with one polarity.

    A candidate tag joins polarity p when it appears in at least
    ``min_cooccur`` posts alongside p-polarity lexicon tags and that count is
    at least ``purity`` of its total polarized co-occurrences. One round by
    default; more rounds chain through previously admitted tags.
    """
    if not 0.5 < purity <= 1.0:
        raise ValidationError("purity must be in (0.5, 1]")
    if min_cooccur < 1:
        raise ValidationError("min_cooccur must be >= 1")
    if not len(seed_lexicon):
        raise ValidationError("seed lexicon is empty")
    lexicon = seed_lexicon.copy()
    tag_lists = [extract_hashtags(p.text) for p in posts]
    for _ in range(rounds):
        cooccur_a: Counter = Counter()
        cooccur_b: Counter = Counter()
        for tags in tag_lists:
            unique = set(tags)
            polarities = {lexicon.entries[t] for t in unique if t in lexicon}
            if not polarities:
                continue
            candidates = unique - set(lexicon.entries)
            if Polarity.PRO_A in polarities:
                cooccur_a.update(candidates)
            if Polarity.PRO_B in polarities:
                cooccur_b.update(candidates)
        admitted = 0
        for tag in sorted(set(cooccur_a) | set(cooccur_b)):
            a, b = cooccur_a[tag], cooccur_b[tag]
            total = a + b
            qual_a = a >= min_cooccur and a / total >= purity
            qual_b = b >= min_cooccur and b / total >= purity
            if qual_a == qual_b:  # neither qualifies, or conflicting
                continue
            lexicon.add(tag, Polarity.PRO_A if qual_a else Polarity.PRO_B,
                        provenance="expanded")
            admitted += 1
        if not admitted:
            break
    return lexicon


def label_and_clean(posts, lexicon: HashtagLexicon,
                    positive: Polarity = Polarity.PRO_B) -> LabeledCorpus:
    """Label posts by unanimous lexicon polarity; strip annotation hashtags.

    Retweet stubs (text starting with 'RT @') are removed first: when their
    ``retweet_of`` points at a post in the corpus, the stub's author joins
    that post's retweeter list, otherwise the stub is discarded. Posts whose
    lexicon tags span both polarities, or that carry none, are dropped.
    Non-lexicon hashtags stay in the text.
    """
    drops: Counter = Counter()
    originals: dict[str, RawPost] = {}
    seen_ids = set()
    stubs = []
    for post in posts:
        if post.id in seen_ids:
            raise ValidationError(f"duplicate post id {post.id!r}")
        seen_ids.add(post.id)
        if post.text.startswith(_RETWEET_PREFIX):
            stubs.append(post)
        else:
            originals[post.id] = post

    extra_retweeters: dict[str, list] = {}
    for stub in stubs:
        if stub.retweet_of is not None and stub.retweet_of in originals:
            extra_retweeters.setdefault(stub.retweet_of, []).append(stub.author)
            drops["retweet_folded"] += 1
        else:
            drops["retweet_unresolved"] += 1

    labeled = []
    edges = []
    for post in originals.values():
        tags = extract_hashtags(post.text)
        lexicon_tags = [t for t in tags if t in lexicon]
        if not lexicon_tags:
            drops["no_lexicon_hashtag"] += 1
            continue
        polarities = {lexicon.entries[t] for t in lexicon_tags}
        if len(polarities) > 1:
            drops["mixed_polarity"] += 1
            continue
        polarity = polarities.pop()
        cleaned = _HASHTAG_RE.sub(
            lambda m: "" if m.group(1).lower() in lexicon else m.group(0),
            post.text)
        retweeters = list(dict.fromkeys(
            list(post.retweeters) + extra_retweeters.get(post.id, [])))
        labeled.append(LabeledPost(
            id=post.id, text=cleaned,
            label=1 if polarity is positive else 0,
            author=post.author, retweeters=retweeters))
        edges.append((post.id, post.author, EdgeType.POST))
        edges.extend((post.id, r, EdgeType.RETWEET) for r in retweeters)

    return LabeledCorpus(posts=labeled, edges=edges, drop_counts=dict(drops))


# --- feature extraction -------------------------------------------------------


def _stable_hash(feature: str) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _tokens(text: str) -> list:
    return re.findall(r"\w+", text.lower())


def featurize(corpus: LabeledCorpus, mode: str = "hashed", dim: int = 256,
              path=None) -> np.ndarray:
    """Feature matrix with one row per post, in corpus order.

    hashed: unigram + bigram signed feature hashing into ``dim`` columns
    followed by row L2 normalization (all-zero rows stay zero). external:
    dense rows keyed by post id from an embedding file (see
    :func:`read_features_tsv`); every post id must be present.
    """
    if mode == "hashed":
        if dim < 1:
            raise ValidationError("feature dim must be >= 1")
        X = np.zeros((len(corpus.posts), dim), dtype=np.float64)
        for row, post in enumerate(corpus.posts):
            toks = _tokens(post.text)
            feats = ["u:" + t for t in toks]
            feats += ["b:" + a + " " + b for a, b in zip(toks, toks[1:])]
            for f in feats:
                h = _stable_hash(f)
                sign = 1.0 if (h >> 63) & 1 else -1.0
                X[row, h % dim] += sign
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        np.divide(X, norms, out=X, where=norms > 0)
    elif mode == "external":
        if path is None:
            raise ValidationError("external feature mode requires a path")
        ids, matrix = read_features_tsv(path)
        index = {pid: i for i, pid in enumerate(ids)}
        missing = [p.id for p in corpus.posts if p.id not in index]
        if missing:
            raise ValidationError(
                f"{len(missing)} post id(s) missing from {path}"
                f" (first: {missing[0]!r})")
        X = matrix[[index[p.id] for p in corpus.posts]]
    else:
        raise ValidationError(f"unknown feature mode {mode!r}")
    corpus.features = X
    return X


# --- file formats -------------------------------------------------------------


def read_corpus_jsonl(path) -> list:
    """One JSON object per line: {"id", "text", "author", "retweeters": [...]}.

    Optional keys: "timestamp", "retweet_of".
    """
    posts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: bad JSON: {exc}") from None
            try:
                posts.append(RawPost(
                    id=str(obj["id"]), text=str(obj["text"]),
                    author=str(obj["author"]),
                    retweeters=[str(r) for r in obj.get("retweeters", [])],
                    timestamp=obj.get("timestamp"),
                    retweet_of=(None if obj.get("retweet_of") is None
                                else str(obj["retweet_of"])),
                ))
            except KeyError as exc:
                raise FormatError(
                    f"{path}:{lineno}: missing field {exc}") from None
    return posts


def read_lexicon_tsv(path) -> HashtagLexicon:
    """TSV rows: ``tag<TAB>{proA|proB}<TAB>{seed|expanded}``."""
    lexicon = HashtagLexicon()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise FormatError(
                    f"{path}:{lineno}: expected 3 tab-separated fields")
            tag, polarity, provenance = fields
            try:
                lexicon.add(tag, Polarity.from_token(polarity), provenance)
            except ValidationError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return lexicon


def write_lexicon_tsv(path, lexicon: HashtagLexicon) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tag in sorted(lexicon.entries):
            fh.write(f"{tag}\t{lexicon.entries[tag].value}"
                     f"\t{lexicon.provenance[tag]}\n")


def read_labels_tsv(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2 or fields[1] not in ("0", "1"):
                raise FormatError(f"{path}:{lineno}: expected 'id<TAB>0|1'")
            out[fields[0]] = int(fields[1])
    return out


def write_labels_tsv(path, ids, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pid, label in zip(ids, labels):
            fh.write(f"{pid}\t{int(label)}\n")


def read_features_tsv(path):
    """Embedding file: header ``dim <d>``, then ``id<TAB>f1<TAB>...<TAB>fd``."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(" ")
        if len(header) != 2 or header[0] != "dim":
            raise FormatError(f"{path}:1: expected header 'dim <d>'")
        try:
            dim = int(header[1])
        except ValueError:
            raise FormatError(f"{path}:1: bad dimension {header[1]!r}") from None
        ids, rows = [], []
        seen = set()
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != dim + 1:
                raise FormatError(
                    f"{path}:{lineno}: expected {dim + 1} fields,"
                    f" got {len(fields)}")
            if fields[0] in seen:
                raise FormatError(f"{path}:{lineno}: duplicate id {fields[0]!r}")
            seen.add(fields[0])
            ids.append(fields[0])
            try:
                rows.append([float(v) for v in fields[1:]])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad float value") from None
    matrix = (np.asarray(rows, dtype=np.float64)
              if rows else np.zeros((0, dim), dtype=np.float64))
    return ids, matrix


def write_features_tsv(path, ids, matrix) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if len(ids) != matrix.shape[0]:
        raise ValidationError("ids and feature rows differ in length")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim {matrix.shape[1]}\n")
        for pid, row in zip(ids, matrix):
            fh.write(pid + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")


def read_flag_tsv(path) -> dict:
    """Generic ``id<TAB>{0|1}`` flag file (same shape as labels)."""
    return read_labels_tsv(path)


def write_flag_tsv(path, ids, flags) -> None:
    write_labels_tsv(path, ids, flags)

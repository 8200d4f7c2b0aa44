"""User-level feature vectors over token vocabularies.

Two vocabulary modes exist: RT keeps only the ``RT_@<account>`` retweet
markers, which yields the retweeted-accounts representation, while TEXT
keeps every token.  A user's vector counts in-vocabulary token occurrences
over their selected tweets, stored sparsely as index -> count.
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .corpus import UserCorpus, UserRecord
from .preprocess import tokenize

RT_MODE = "RT"
TEXT_MODE = "TEXT"
RT_MARKER_PREFIX = "RT_@"

# index -> count; absent index means count zero
SparseVector = dict[int, int]


@dataclass(frozen=True)
class Vocabulary:
    mode: str
    term_to_index: dict[str, int]
    user_frequency: dict[str, int]

    def __len__(self) -> int:
        return len(self.term_to_index)

    def terms_in_index_order(self) -> list[str]:
        return sorted(self.term_to_index, key=self.term_to_index.__getitem__)


def _default_min_users(mode: str, min_users: int | None) -> int:
    if min_users is not None:
        if min_users < 1:
            raise ValueError(f"min_users must be >= 1, got {min_users}")
        return min_users
    return 2 if mode == TEXT_MODE else 1


def _check_mode(mode: str) -> None:
    if mode not in (RT_MODE, TEXT_MODE):
        raise ValueError(f"unknown vocabulary mode {mode!r}")


def tokens_for_user(record: UserRecord, use_timeline: bool = False) -> list[str]:
    """All tokens from the user's selected tweets, in tweet order."""
    out: list[str] = []
    for tweet in record.tweets(use_timeline):
        out.extend(tokenize(tweet.text, tweet.retweeted_user))
    return out


def vocab_from_token_lists(token_lists, mode: str, min_users: int | None = None) -> Vocabulary:
    """Build a vocabulary from per-user token lists.

    user_frequency counts distinct users mentioning the term.  Terms below
    min_users are dropped.  Indices are assigned by descending
    user_frequency, ties broken by ascending token string.
    """
    _check_mode(mode)
    threshold = _default_min_users(mode, min_users)
    freq: dict[str, int] = {}
    for tokens in token_lists:
        if mode == RT_MODE:
            seen = {t for t in tokens if t.startswith(RT_MARKER_PREFIX)}
        else:
            seen = set(tokens)
        for term in seen:
            freq[term] = freq.get(term, 0) + 1
    kept = [(term, count) for term, count in freq.items() if count >= threshold]
    kept.sort(key=lambda item: (-item[1], item[0]))
    term_to_index = {term: i for i, (term, _) in enumerate(kept)}
    return Vocabulary(mode=mode, term_to_index=term_to_index,
                      user_frequency={term: count for term, count in kept})


def build_vocab(corpus: UserCorpus, mode: str, min_users: int | None = None,
                use_timeline: bool = False) -> Vocabulary:
    """Vocabulary over every user in the corpus; see vocab_from_token_lists."""
    lists = (tokens_for_user(corpus.users[uid], use_timeline) for uid in corpus.sorted_user_ids())
    return vocab_from_token_lists(lists, mode, min_users)


def vector_from_tokens(tokens, vocab: Vocabulary) -> SparseVector:
    vec: SparseVector = {}
    lookup = vocab.term_to_index
    for token in tokens:
        idx = lookup.get(token)
        if idx is not None:
            vec[idx] = vec.get(idx, 0) + 1
    return vec


def user_vector(record: UserRecord, vocab: Vocabulary, use_timeline: bool = False) -> SparseVector:
    """Count vector of the user's in-vocabulary tokens.  May be empty."""
    return vector_from_tokens(tokens_for_user(record, use_timeline), vocab)


def norm(vec: SparseVector) -> float:
    return math.sqrt(sum(c * c for c in vec.values()))


def cosine_similarity(a: SparseVector, b: SparseVector) -> float:
    """Cosine of two count vectors, 0.0 when either is empty."""
    if not a or not b:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    dot = sum(count * b[idx] for idx, count in a.items() if idx in b)
    if dot == 0:
        return 0.0
    return min(1.0, dot / (norm(a) * norm(b)))


def pack_csr(vectors, n_features: int):
    """Pack sparse vectors into CSR arrays (indptr, indices, data).

    Indices are sorted within each row; data is float64 counts.
    """
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, vec in enumerate(vectors):
        indptr[i + 1] = indptr[i] + len(vec)
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.empty(indptr[-1], dtype=np.float64)
    for i, vec in enumerate(vectors):
        start = indptr[i]
        for j, idx in enumerate(sorted(vec)):
            if idx < 0 or idx >= n_features:
                raise ValueError(f"vector {i}: index {idx} outside [0, {n_features})")
            indices[start + j] = idx
            data[start + j] = vec[idx]
    return indptr, indices, data


def save_vocab_tsv(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for term in vocab.terms_in_index_order():
            handle.write(f"{term}\t{vocab.term_to_index[term]}\t{vocab.user_frequency[term]}\n")


def load_vocab_tsv(path, mode: str) -> Vocabulary:
    _check_mode(mode)
    term_to_index: dict[str, int] = {}
    user_frequency: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected token<TAB>index<TAB>user_frequency")
            term, idx, freq = parts
            term_to_index[term] = int(idx)
            user_frequency[term] = int(freq)
    indices = sorted(term_to_index.values())
    if indices != list(range(len(indices))):
        raise ValueError("vocabulary indices are not dense from 0")
    ordered = sorted(term_to_index, key=term_to_index.__getitem__)
    return Vocabulary(mode=mode,
                      term_to_index={t: term_to_index[t] for t in ordered},
                      user_frequency={t: user_frequency[t] for t in ordered})


def vocab_hash(vocab: Vocabulary) -> str:
    """Stable hash of the vocabulary contents, used to guard model reuse."""
    digest = hashlib.sha256()
    digest.update(vocab.mode.encode())
    for term in vocab.terms_in_index_order():
        digest.update(f"{term}\t{vocab.term_to_index[term]}\t{vocab.user_frequency[term]}\n".encode())
    return digest.hexdigest()

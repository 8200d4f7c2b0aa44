"""End-to-end stance pipelines and the experiment grid.

The unsupervised route has two stages.  bootstrap_training_set embeds the
most active users' retweet vectors, clusters the embedding, takes the two
largest clusters as the stances (larger = stance 0) and samples a labeled
training set from them.  classify_user_unsupervised then embeds one test
user jointly with the training users and reads the label off the cluster
the test point falls in; there is no error path, Unassigned is the
failure signal.  run_experiment wires any of the five methods, with
optional timeline expansion on either side, into a single report row.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import classify
from .cluster import (UNASSIGNED, ClusteringError, estimate_bandwidth, majority_label,
                      mean_shift)
from .corpus import UserCorpus, UserRecord
from .embedding import UmapParams, pairwise_cosine_distances, umap_from_distances
from .evalkit import ReportRow, confusion, metrics
from .features import (RT_MARKER_PREFIX, RT_MODE, TEXT_MODE, tokens_for_user,
                       user_vector, vector_from_tokens, vocab_from_token_lists)
from .preprocess import tokenize

log = logging.getLogger(__name__)

METHOD_SVM_RT = "SVM_RT"
METHOD_SVM_TEXT = "SVM_TEXT"
METHOD_TEXTCLF = "TEXTCLF"
METHOD_EXTERNAL = "EXTERNAL"
METHOD_UNSUPERVISED = "UNSUPERVISED"
METHODS = (METHOD_SVM_RT, METHOD_SVM_TEXT, METHOD_TEXTCLF, METHOD_EXTERNAL,
           METHOD_UNSUPERVISED)


@dataclass(frozen=True)
class UnsupervisedParams:
    umap: UmapParams = UmapParams()
    quantile: float = 0.3
    min_members: int = 3
    min_users: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    topic: str
    method: str
    expand_train: bool = False
    expand_test: bool = False
    seed: int = 0
    hyperparameters: dict = field(default_factory=dict)

    @property
    def condition(self) -> str:
        return {(False, False): "none", (True, False): "train",
                (False, True): "test", (True, True): "both"}[
                    (self.expand_train, self.expand_test)]


def bootstrap_training_set(corpus: UserCorpus, n_active: int = 5000,
                           min_tweets: int = 10, per_cluster: int = 500,
                           seed: int = 0,
                           params: UnsupervisedParams | None = None):
    """Derive a pseudo-labeled training set from unlabeled users.

    Embeds the retweet vectors of the n_active most active users, mean
    shifts the embedding, and samples per_cluster users uniformly from each
    of the two largest clusters (stance 0 is the larger one).  Returns
    (user, stance) pairs.  Raises ClusteringError when fewer than two
    clusters emerge; that needs manual inspection, not silent output.
    """
    if params is None:
        params = UnsupervisedParams()
    from .corpus import select_active_users

    active = select_active_users(corpus, n_active, min_tweets)
    user_ids = active.sorted_user_ids()
    if len(user_ids) < 2:
        raise ValueError(f"only {len(user_ids)} users qualify (need at least 2); "
                         f"lower min_tweets or supply more data")
    token_lists = [tokens_for_user(active.users[uid]) for uid in user_ids]
    vocab = vocab_from_token_lists(token_lists, RT_MODE, params.min_users)
    vectors = [vector_from_tokens(tokens, vocab) for tokens in token_lists]
    embedded = umap_from_distances(
        pairwise_cosine_distances(vectors, n_features=len(vocab)), params.umap, seed)
    coords = embedded.coordinates
    try:
        bandwidth = estimate_bandwidth(coords, params.quantile)
    except ClusteringError as exc:
        raise ClusteringError(f"bootstrap failed: {exc}") from None
    assignment = mean_shift(coords, bandwidth, params.min_members)
    if assignment.n_clusters < 2:
        raise ClusteringError(
            f"bootstrap found {assignment.n_clusters} cluster(s); inspect the embedding "
            f"and choose the bandwidth manually")
    rng = np.random.default_rng(seed)
    sampled: list[tuple[UserRecord, int]] = []
    for stance in (0, 1):
        members = [user_ids[i] for i in np.nonzero(assignment.labels == stance)[0]]
        if len(members) < per_cluster:
            log.warning("cluster %d has only %d members (< per_cluster=%d); taking all",
                        stance, len(members), per_cluster)
            chosen = members
        else:
            chosen = [members[i] for i in
                      rng.choice(len(members), size=per_cluster, replace=False)]
        sampled.extend((active.users[uid], stance) for uid in sorted(chosen))
    return sampled


def align_to_gold(labeled, gold: dict[str, int]):
    """Map pseudo-stances onto gold classes by per-cluster majority.

    Unsupervised output has no inherent polarity; this resolves it the way
    a manual inspection of a few users per cluster would.  Errors if both
    pseudo-stances map to the same gold class or a vote ties.
    """
    votes = {0: [0, 0], 1: [0, 0]}
    for record, stance in labeled:
        gold_label = gold.get(record.user_id)
        if gold_label is not None:
            votes[stance][gold_label] += 1
    mapping = {}
    for stance in (0, 1):
        zero, one = votes[stance]
        if zero == one:
            raise ValueError(f"pseudo-stance {stance} vote is tied ({zero}:{one})")
        mapping[stance] = 0 if zero > one else 1
    if mapping[0] == mapping[1]:
        raise ValueError("both pseudo-stances map to the same gold class")
    return [(record, mapping[stance]) for record, stance in labeled]


def corpus_from_labeled(labeled, topic: str) -> UserCorpus:
    """Corpus whose gold labels are the given (user, stance) pairs."""
    from dataclasses import replace

    users = {record.user_id: replace(record, gold_label=stance)
             for record, stance in labeled}
    return UserCorpus(topic=topic, users=users)


def _rt_counts(tokens) -> dict[str, int]:
    counts: dict[str, int] = {}
    for token in tokens:
        if token.startswith(RT_MARKER_PREFIX):
            counts[token] = counts.get(token, 0) + 1
    return counts


def _count_norm(counts: dict[str, int]) -> float:
    return math.sqrt(sum(c * c for c in counts.values()))


class _TrainGeometry:
    """Train-side retweet vectors with their pairwise distances precomputed.

    Valid only for min_users == 1, where adding one test user to the
    vocabulary union cannot change any train-train dot product or norm.
    """

    def __init__(self, train_token_lists):
        self.term_counts = [_rt_counts(tokens) for tokens in train_token_lists]
        self.norms = [_count_norm(c) for c in self.term_counts]
        vocab = vocab_from_token_lists(train_token_lists, RT_MODE, 1)
        vectors = [vector_from_tokens(tokens, vocab) for tokens in train_token_lists]
        self.train_distances = pairwise_cosine_distances(vectors, n_features=len(vocab))

    def joint_distances(self, test_counts: dict[str, int]) -> np.ndarray:
        n = len(self.term_counts)
        full = np.empty((n + 1, n + 1), dtype=np.float64)
        full[:n, :n] = self.train_distances
        test_norm = _count_norm(test_counts)
        row = np.ones(n, dtype=np.float64)
        if test_norm > 0.0:
            for i, counts in enumerate(self.term_counts):
                if not counts:
                    continue
                dot = sum(cnt * counts.get(term, 0) for term, cnt in test_counts.items())
                if dot > 0.0:
                    row[i] = 1.0 - min(1.0, dot / (test_norm * self.norms[i]))
        full[n, :n] = row
        full[:n, n] = row
        full[n, n] = 0.0
        return full


def _label_from_cluster(assignment, cluster_map, point: int):
    cluster = int(assignment.labels[point])
    if cluster == UNASSIGNED:
        return UNASSIGNED, {"reason": "outside every cluster"}
    label, purity = cluster_map[cluster]
    diag = {"cluster": cluster, "cluster_size": int(assignment.sizes[cluster]),
            "purity": purity, "n_clusters": assignment.n_clusters}
    if label == UNASSIGNED:
        diag["reason"] = "cluster has no labeled members or a tied vote"
    return label, diag


def _classify_joint(dist: np.ndarray, train_labels, params: UnsupervisedParams,
                    seed: int, test_points):
    """Embed a joint distance matrix, cluster, and label the test points."""
    embedded = umap_from_distances(dist, params.umap, seed)
    coords = embedded.coordinates
    try:
        bandwidth = estimate_bandwidth(coords, params.quantile)
    except ClusteringError as exc:
        return {p: (UNASSIGNED, {"reason": str(exc)}) for p in test_points}
    assignment = mean_shift(coords, bandwidth, params.min_members)
    known = {i: label for i, label in enumerate(train_labels)}
    cluster_map = majority_label(assignment, known)
    out = {}
    for point in test_points:
        label, diag = _label_from_cluster(assignment, cluster_map, point)
        diag.setdefault("bandwidth", bandwidth)
        out[point] = (label, diag)
    return out


def classify_user_unsupervised(test_user: UserRecord, train,
                               params: UnsupervisedParams | None = None,
                               seed: int = 0, use_train_timeline: bool = False,
                               use_test_timeline: bool = False):
    """Label one test user by joint embedding with the labeled train users.

    The test user's retweet vector is built over the union vocabulary with
    the train users, all n+1 points are embedded and mean shifted, and the
    majority stance of the test point's cluster is returned with
    diagnostics.  Unassigned (never an exception) signals failure: an empty
    retweet vector, a point outside every cluster, or a cluster whose vote
    is missing or tied.
    """
    if params is None:
        params = UnsupervisedParams()
    train_token_lists = [tokens_for_user(rec, use_train_timeline) for rec, _ in train]
    labels = [stance for _, stance in train]
    results = _classify_prepared(train_token_lists, labels,
                                 [tokens_for_user(test_user, use_test_timeline)],
                                 params, seed)
    return results[0]


def _classify_prepared(train_token_lists, train_labels, test_token_lists,
                       params: UnsupervisedParams, seed: int):
    """Per-test-user joint embedding over prepared token lists."""
    n = len(train_token_lists)
    results = {}
    if params.min_users == 1:
        geometry = _TrainGeometry(train_token_lists)
        for t, test_tokens in enumerate(test_token_lists):
            test_counts = _rt_counts(test_tokens)
            if not test_counts:
                results[t] = (UNASSIGNED, {"reason": "empty retweet vector"})
                continue
            joint = geometry.joint_distances(test_counts)
            results[t] = _classify_joint(joint, train_labels, params, seed, [n])[n]
        return results
    for t, test_tokens in enumerate(test_token_lists):
        if not _rt_counts(test_tokens):
            results[t] = (UNASSIGNED, {"reason": "empty retweet vector"})
            continue
        lists = train_token_lists + [test_tokens]
        vocab = vocab_from_token_lists(lists, RT_MODE, params.min_users)
        vectors = [vector_from_tokens(tokens, vocab) for tokens in lists]
        joint = pairwise_cosine_distances(vectors, n_features=len(vocab))
        results[t] = _classify_joint(joint, train_labels, params, seed, [n])[n]
    return results


def _classify_batched(train_token_lists, train_labels, test_token_lists,
                      params: UnsupervisedParams, seed: int):
    """One joint embedding of all test users at once.

    Cheaper than the per-user route but deviates from it: test points see
    each other during layout, so assignments can differ.
    """
    n = len(train_token_lists)
    results = {}
    included = [t for t, tokens in enumerate(test_token_lists) if _rt_counts(tokens)]
    for t in range(len(test_token_lists)):
        if t not in included:
            results[t] = (UNASSIGNED, {"reason": "empty retweet vector"})
    if not included:
        return results
    lists = train_token_lists + [test_token_lists[t] for t in included]
    vocab = vocab_from_token_lists(lists, RT_MODE, params.min_users)
    vectors = [vector_from_tokens(tokens, vocab) for tokens in lists]
    joint = pairwise_cosine_distances(vectors, n_features=len(vocab))
    points = list(range(n, n + len(included)))
    labeled = _classify_joint(joint, train_labels, params, seed, points)
    for offset, t in enumerate(included):
        results[t] = labeled[n + offset]
    return results


def _require_timeline(corpus: UserCorpus, side: str) -> None:
    if not any(rec.timeline_tweets for rec in corpus.users.values()):
        raise ValueError(f"expand_{side} is set but the {side} corpus has no timeline tweets")


def _labeled_train(train_corpus: UserCorpus):
    train = [(train_corpus.users[uid], train_corpus.users[uid].gold_label)
             for uid in train_corpus.sorted_user_ids()
             if train_corpus.users[uid].gold_label is not None]
    if not train:
        raise ValueError("train corpus carries no labels")
    if {label for _, label in train} != {0, 1}:
        raise ValueError("training labels must include both stances")
    return train


def compute_predictions(config: ExperimentConfig, train_corpus: UserCorpus,
                        test_corpus: UserCorpus) -> dict[str, int]:
    """Predicted stance (0, 1 or UNASSIGNED) for every test user."""
    if config.method not in METHODS:
        raise ValueError(f"unknown method {config.method!r}; expected one of {METHODS}")
    if config.expand_train:
        _require_timeline(train_corpus, "train")
    if config.expand_test:
        _require_timeline(test_corpus, "test")
    train = _labeled_train(train_corpus)
    test_ids = test_corpus.sorted_user_ids()
    test_records = [test_corpus.users[uid] for uid in test_ids]
    hp = config.hyperparameters

    if config.method in (METHOD_SVM_RT, METHOD_SVM_TEXT):
        mode = RT_MODE if config.method == METHOD_SVM_RT else TEXT_MODE
        train_tokens = [tokens_for_user(rec, config.expand_train) for rec, _ in train]
        vocab = vocab_from_token_lists(train_tokens, mode, hp.get("min_users"))
        examples = [(vector_from_tokens(tokens, vocab), -1 if label == 0 else 1)
                    for tokens, (_, label) in zip(train_tokens, train)]
        model = classify.svm_train(examples, C=hp.get("C", 1.0), n_features=len(vocab))
        return {uid: (0 if classify.svm_predict(
                    model, user_vector(rec, vocab, config.expand_test)) == -1 else 1)
                for uid, rec in zip(test_ids, test_records)}

    if config.method == METHOD_TEXTCLF:
        examples = [(tokenize(t.text, t.retweeted_user), label)
                    for rec, label in train for t in rec.tweets(config.expand_train)]
        model = classify.ft_train(examples, dim=hp.get("dim", 100), lr=hp.get("lr", 0.1),
                                  epochs=hp.get("epochs", 5), seed=config.seed)
        out = {}
        for uid, rec in zip(test_ids, test_records):
            dists = [classify.ft_predict(model, tokenize(t.text, t.retweeted_user))
                     for t in rec.tweets(config.expand_test)]
            out[uid] = classify.aggregate_user(dists)[0] if dists else UNASSIGNED
        return out

    if config.method == METHOD_EXTERNAL:
        path = hp.get("scores_path")
        if not path:
            raise ValueError("EXTERNAL needs hyperparameters['scores_path']")
        scores = classify.load_external_scores(path)
        out = {}
        missing = 0
        for uid, rec in zip(test_ids, test_records):
            dists = []
            for tweet in rec.tweets(config.expand_test):
                if tweet.id in scores:
                    dists.append(scores[tweet.id])
                else:
                    missing += 1
            out[uid] = classify.aggregate_user(dists)[0] if dists else UNASSIGNED
        if missing:
            log.warning("EXTERNAL: %d test tweets had no score", missing)
        return out

    params = hp.get("unsupervised_params") or UnsupervisedParams()
    train_token_lists = [tokens_for_user(rec, config.expand_train) for rec, _ in train]
    test_token_lists = [tokens_for_user(rec, config.expand_test) for rec in test_records]
    labels = [label for _, label in train]
    route = _classify_batched if hp.get("batched") else _classify_prepared
    results = route(train_token_lists, labels, test_token_lists, params, config.seed)
    return {uid: results[t][0] for t, uid in enumerate(test_ids)}


def run_experiment(config: ExperimentConfig, train_corpus: UserCorpus,
                   test_corpus: UserCorpus, gold: dict[str, int]) -> ReportRow:
    """Run one method/condition cell and evaluate it against gold labels.

    Every test user needs a gold label.  When nothing at all is assigned
    (coverage 0) the quality measures are reported as 0 rather than
    erroring, so sparse-data failure modes still produce a row.
    """
    missing = [uid for uid in test_corpus.users if uid not in gold]
    if missing:
        raise ValueError(f"test users without gold labels: {sorted(missing)[:5]}")
    predictions = compute_predictions(config, train_corpus, test_corpus)
    gold_eval = {uid: gold[uid] for uid in test_corpus.users}
    cm = confusion(predictions, gold_eval)
    if cm.total_assigned == 0:
        return ReportRow(topic=config.topic, method=config.method,
                         condition=config.condition, accuracy=0.0, precision=0.0,
                         recall=0.0, f1=0.0, coverage=0.0,
                         n_test=len(gold_eval), n_unassigned=cm.unassigned)
    report = metrics(cm)
    return ReportRow(topic=config.topic, method=config.method,
                     condition=config.condition, accuracy=report.accuracy,
                     precision=report.precision, recall=report.recall, f1=report.f1,
                     coverage=report.coverage, n_test=len(gold_eval),
                     n_unassigned=cm.unassigned)

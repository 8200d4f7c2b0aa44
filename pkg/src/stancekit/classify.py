"""Supervised stance models and score aggregation.

Two trainable models live here: a linear SVM solved in the dual by
coordinate descent (hinge loss, L2 regularization, bias as an implicit
constant-1 feature), and a shallow text classifier that averages learned
token embeddings and applies a softmax layer, trained by per-example SGD.
Tweet-level class distributions, whether from the text classifier or an
external score file, aggregate to user level by averaging.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ._accel import maybe_jit
from .features import SparseVector, pack_csr

log = logging.getLogger(__name__)

SVM_TOLERANCE = 1e-4
SVM_MAX_PASSES = 1000


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray  # (n_features,)
    bias: float
    C: float
    alpha: np.ndarray    # dual variables, one per training example
    dual_objective: float
    n_passes: int
    converged: bool


@dataclass(frozen=True)
class TextModel:
    vocab: dict[str, int]
    embeddings: np.ndarray      # (n_tokens, dim)
    output_weights: np.ndarray  # (dim, 2)
    bias: np.ndarray            # (2,)
    epoch_losses: np.ndarray    # mean training loss per epoch


def _svm_cd_impl(indptr, indices, data, y, C, q_diag, max_passes, tol, w, alpha):
    n = y.shape[0]
    b = 0.0
    passes = 0
    violation = np.inf
    for _ in range(max_passes):
        violation = 0.0
        for i in range(n):
            start, end = indptr[i], indptr[i + 1]
            score = b
            for t in range(start, end):
                score += w[indices[t]] * data[t]
            grad = y[i] * score - 1.0
            a_i = alpha[i]
            if a_i <= 0.0:
                projected = min(grad, 0.0)
            elif a_i >= C:
                projected = max(grad, 0.0)
            else:
                projected = grad
            magnitude = abs(projected)
            if magnitude > violation:
                violation = magnitude
            if magnitude > 1e-12:
                updated = a_i - grad / q_diag[i]
                if updated < 0.0:
                    updated = 0.0
                elif updated > C:
                    updated = C
                delta = (updated - a_i) * y[i]
                if delta != 0.0:
                    alpha[i] = updated
                    for t in range(start, end):
                        w[indices[t]] += delta * data[t]
                    b += delta
        passes += 1
        if violation < tol:
            break
    return b, passes, violation


_svm_cd = maybe_jit(_svm_cd_impl)


def svm_train(examples, C: float = 1.0, n_features: int | None = None,
              tol: float = SVM_TOLERANCE, max_passes: int = SVM_MAX_PASSES) -> LinearModel:
    """Train a linear SVM by dual coordinate descent.

    examples are (SparseVector, label) pairs with labels in {-1, +1}; both
    classes must be present.  Examples are visited in their given order
    each pass; the solver stops when the largest projected-gradient
    violation in a pass drops below tol or after max_passes passes.
    """
    if C <= 0.0:
        raise ValueError(f"C must be positive, got {C}")
    if not examples:
        raise ValueError("no training examples")
    labels = {label for _, label in examples}
    if not labels <= {-1, 1}:
        raise ValueError(f"labels must be -1 or +1, got {sorted(labels - {-1, 1})}")
    if labels != {-1, 1}:
        raise ValueError("training data must contain both classes")
    vectors = [vec for vec, _ in examples]
    if n_features is None:
        n_features = 0
        for vec in vectors:
            if vec:
                n_features = max(n_features, max(vec) + 1)
    indptr, indices, data = pack_csr(vectors, n_features)
    y = np.array([float(label) for _, label in examples])
    # +1.0 is the implicit constant bias feature
    q_diag = np.array([float(sum(c * c for c in vec.values())) + 1.0 for vec in vectors])
    w = np.zeros(n_features, dtype=np.float64)
    alpha = np.zeros(len(examples), dtype=np.float64)
    b, passes, violation = _svm_cd(indptr, indices, data, y, C, q_diag,
                                   max_passes, tol, w, alpha)
    converged = violation < tol
    if not converged:
        log.warning("svm_train stopped after %d passes with violation %.3g", passes, violation)
    dual = 0.5 * (float(w @ w) + b * b) - float(alpha.sum())
    return LinearModel(weights=w, bias=float(b), C=C, alpha=alpha,
                       dual_objective=dual, n_passes=passes, converged=converged)


def svm_decision(model: LinearModel, x: SparseVector) -> float:
    limit = model.weights.shape[0]
    score = model.bias
    for idx, count in x.items():
        if idx < limit:
            score += model.weights[idx] * count
    return float(score)


def svm_predict(model: LinearModel, x: SparseVector) -> int:
    """Predicted label in {-1, +1}; a score of exactly 0 maps to +1."""
    return 1 if svm_decision(model, x) >= 0.0 else -1


def svm_kkt_residual(model: LinearModel, examples) -> float:
    """Largest projected-gradient violation of the trained model."""
    worst = 0.0
    for (vec, label), a_i in zip(examples, model.alpha):
        grad = label * svm_decision(model, vec) - 1.0
        if a_i <= 0.0:
            projected = min(grad, 0.0)
        elif a_i >= model.C:
            projected = max(grad, 0.0)
        else:
            projected = grad
        worst = max(worst, abs(projected))
    return worst


def _ft_epoch_impl(emb, out_w, bias, offsets, tokens, labels, lr0, step0, total_steps):
    n = offsets.shape[0] - 1
    dim = emb.shape[1]
    loss_sum = 0.0
    step = step0
    for i in range(n):
        lr = lr0 * (1.0 - step / total_steps)
        start, end = offsets[i], offsets[i + 1]
        m = end - start
        rep = np.zeros(dim, dtype=np.float64)
        for p in range(start, end):
            row = tokens[p]
            for c in range(dim):
                rep[c] += emb[row, c]
        for c in range(dim):
            rep[c] /= m
        z0 = bias[0]
        z1 = bias[1]
        for c in range(dim):
            z0 += rep[c] * out_w[c, 0]
            z1 += rep[c] * out_w[c, 1]
        top = max(z0, z1)
        e0 = np.exp(z0 - top)
        e1 = np.exp(z1 - top)
        p0 = e0 / (e0 + e1)
        p1 = e1 / (e0 + e1)
        if labels[i] == 0:
            loss_sum -= np.log(p0)
            err0 = p0 - 1.0
            err1 = p1
        else:
            loss_sum -= np.log(p1)
            err0 = p0
            err1 = p1 - 1.0
        for c in range(dim):
            rep_grad = out_w[c, 0] * err0 + out_w[c, 1] * err1
            out_w[c, 0] -= lr * rep[c] * err0
            out_w[c, 1] -= lr * rep[c] * err1
            token_step = lr * rep_grad / m
            for p in range(start, end):
                emb[tokens[p], c] -= token_step
        bias[0] -= lr * err0
        bias[1] -= lr * err1
        step += 1
    return loss_sum


_ft_epoch = maybe_jit(_ft_epoch_impl)


def ft_train(examples, dim: int = 100, lr: float = 0.1, epochs: int = 5,
             seed: int = 0) -> TextModel:
    """Train the averaged-embedding softmax classifier.

    examples are (token_list, label) pairs with labels in {0, 1}.  Empty
    token lists are skipped with a counted warning.  Token embeddings and
    output weights start uniform in [-1/dim, 1/dim] from the seed; the
    learning rate decays linearly to 0 over epochs * n_examples updates.
    Examples are visited in their given order, so training is
    deterministic.
    """
    if dim < 1 or epochs < 1 or lr <= 0.0:
        raise ValueError("dim and epochs must be >= 1 and lr positive")
    kept = [(tokens, label) for tokens, label in examples if tokens]
    skipped = len(examples) - len(kept)
    if skipped:
        log.warning("ft_train: skipped %d examples with no tokens", skipped)
    if not kept:
        raise ValueError("no non-empty training examples")
    classes = {label for _, label in kept}
    if not classes <= {0, 1}:
        raise ValueError(f"labels must be 0 or 1, got {sorted(classes - {0, 1})}")
    if classes != {0, 1}:
        raise ValueError("training data must contain both classes")
    vocab = {token: i for i, token in enumerate(sorted({t for tokens, _ in kept for t in tokens}))}
    offsets = np.zeros(len(kept) + 1, dtype=np.int64)
    for i, (tokens, _) in enumerate(kept):
        offsets[i + 1] = offsets[i] + len(tokens)
    flat = np.empty(offsets[-1], dtype=np.int64)
    for i, (tokens, _) in enumerate(kept):
        flat[offsets[i]:offsets[i + 1]] = [vocab[t] for t in tokens]
    labels = np.array([label for _, label in kept], dtype=np.int64)

    rng = np.random.default_rng(seed)
    scale = 1.0 / dim
    emb = rng.uniform(-scale, scale, size=(len(vocab), dim))
    out_w = rng.uniform(-scale, scale, size=(dim, 2))
    bias = np.zeros(2, dtype=np.float64)
    total_steps = epochs * len(kept)
    losses = np.empty(epochs, dtype=np.float64)
    for epoch in range(epochs):
        loss_sum = _ft_epoch(emb, out_w, bias, offsets, flat, labels,
                             lr, epoch * len(kept), total_steps)
        losses[epoch] = loss_sum / len(kept)
    return TextModel(vocab=vocab, embeddings=emb, output_weights=out_w,
                     bias=bias, epoch_losses=losses)


def _softmax2(z: np.ndarray) -> np.ndarray:
    shifted = np.exp(z - z.max())
    return shifted / shifted.sum()


def ft_predict(model: TextModel, tokens) -> np.ndarray:
    """Class distribution for one tweet; unknown tokens are dropped.

    A tweet with no in-vocabulary tokens gets the uniform distribution.
    """
    rows = [model.vocab[t] for t in tokens if t in model.vocab]
    if not rows:
        return np.array([0.5, 0.5])
    rep = model.embeddings[rows].mean(axis=0)
    return _softmax2(rep @ model.output_weights + model.bias)


def ft_loss_and_grads(model: TextModel, tokens, label: int):
    """Cross-entropy loss and analytic gradients for one example.

    Returns (loss, grads) with grads keyed by parameter group:
    embeddings, output_weights, bias.  Gradients have the parameter shapes;
    only rows of tokens present in the example are nonzero.
    """
    rows = [model.vocab[t] for t in tokens if t in model.vocab]
    if not rows:
        raise ValueError("example has no in-vocabulary tokens")
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    rep = model.embeddings[rows].mean(axis=0)
    probs = _softmax2(rep @ model.output_weights + model.bias)
    loss = -float(np.log(probs[label]))
    err = probs.copy()
    err[label] -= 1.0
    grads = {
        "embeddings": np.zeros_like(model.embeddings),
        "output_weights": np.outer(rep, err),
        "bias": err,
    }
    rep_grad = model.output_weights @ err
    for row in rows:
        grads["embeddings"][row] += rep_grad / len(rows)
    return loss, grads


def aggregate_user(distributions) -> tuple[int, np.ndarray]:
    """Average tweet-level class distributions and pick the argmax.

    Ties go to the lower class index.  Raises on an empty list.
    """
    if len(distributions) == 0:
        raise ValueError("no distributions to aggregate")
    stacked = np.asarray(distributions, dtype=np.float64)
    mean = stacked.mean(axis=0)
    return int(np.argmax(mean)), mean


def load_external_scores(path) -> dict[str, np.ndarray]:
    """Read per-tweet class scores: tweet_id<TAB>p0<TAB>p1.

    Scores must be non-negative.  Rows whose sum is within 1e-3 of 1 are
    accepted as-is; anything else is renormalized with a counted warning.
    Conflicting duplicate tweet ids are an error.
    """
    scores: dict[str, np.ndarray] = {}
    renormalized = 0
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected tweet_id<TAB>p0<TAB>p1")
            tweet_id = parts[0]
            try:
                p0, p1 = float(parts[1]), float(parts[2])
            except ValueError:
                raise ValueError(f"line {lineno}: scores must be numbers") from None
            if not (np.isfinite(p0) and np.isfinite(p1)) or p0 < 0.0 or p1 < 0.0:
                raise ValueError(f"line {lineno}: scores must be finite and non-negative")
            total = p0 + p1
            if abs(total - 1.0) > 1e-3:
                if total == 0.0:
                    raise ValueError(f"line {lineno}: scores sum to 0, cannot renormalize")
                p0, p1 = p0 / total, p1 / total
                renormalized += 1
            dist = np.array([p0, p1])
            if tweet_id in scores:
                if not np.allclose(scores[tweet_id], dist):
                    raise ValueError(f"line {lineno}: conflicting duplicate for tweet {tweet_id!r}")
                continue
            scores[tweet_id] = dist
    if renormalized:
        log.warning("load_external_scores: renormalized %d rows", renormalized)
    return scores


MODEL_FORMAT_VERSION = 1


def save_linear_model(model: LinearModel, path, vocab_hash: str = "") -> None:
    np.savez(path, format_version=MODEL_FORMAT_VERSION, kind="svm",
             weights=model.weights, bias=model.bias, C=model.C, alpha=model.alpha,
             dual_objective=model.dual_objective, n_passes=model.n_passes,
             converged=model.converged, vocab_hash=vocab_hash)


def load_linear_model(path) -> tuple[LinearModel, str]:
    with np.load(path, allow_pickle=False) as blob:
        version = int(blob["format_version"])
        if version != MODEL_FORMAT_VERSION or str(blob["kind"]) != "svm":
            raise ValueError(f"unsupported model file (version {version}, kind {blob['kind']})")
        model = LinearModel(weights=blob["weights"], bias=float(blob["bias"]),
                            C=float(blob["C"]), alpha=blob["alpha"],
                            dual_objective=float(blob["dual_objective"]),
                            n_passes=int(blob["n_passes"]), converged=bool(blob["converged"]))
        return model, str(blob["vocab_hash"])


def save_text_model(model: TextModel, path, vocab_hash: str = "") -> None:
    tokens = model.vocab.keys()
    ordered = sorted(tokens, key=model.vocab.__getitem__)
    np.savez(path, format_version=MODEL_FORMAT_VERSION, kind="text",
             tokens=np.array(ordered, dtype=np.str_), embeddings=model.embeddings,
             output_weights=model.output_weights, bias=model.bias,
             epoch_losses=model.epoch_losses, vocab_hash=vocab_hash)


def load_text_model(path) -> tuple[TextModel, str]:
    with np.load(path, allow_pickle=False) as blob:
        version = int(blob["format_version"])
        if version != MODEL_FORMAT_VERSION or str(blob["kind"]) != "text":
            raise ValueError(f"unsupported model file (version {version}, kind {blob['kind']})")
        vocab = {token: i for i, token in enumerate(blob["tokens"].tolist())}
        model = TextModel(vocab=vocab, embeddings=blob["embeddings"],
                          output_weights=blob["output_weights"], bias=blob["bias"],
                          epoch_losses=blob["epoch_losses"])
        return model, str(blob["vocab_hash"])

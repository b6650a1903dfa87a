"""Question/answer pair embeddings and similarity scoring.

The local backend hashes word unigrams and character n-grams of the pair
text into a signed fixed-width feature vector, then applies a linear
projection head trained with a cosine-margin contrastive loss. A question
paired with its reference answer and the same question paired with the
student's answer should land nearby when the answer is right and far apart
when it is wrong; the similarity s is the cosine between the two projected
vectors.

A remote backend can replace the local hasher: it receives raw pairs over
HTTP and returns vectors, which are re-normalized locally. Failures are
loud and typed; there is no silent fallback between backends.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
import requests
from scipy import sparse

from .calibration import ScoredDataset, ScoredRecord
from .corpus import Corpus, Grade

__all__ = [
    "EmbedderKind",
    "RemoteBackendConfig",
    "EmbedderConfig",
    "ProjectionHead",
    "TrainConfig",
    "EmbeddingBackendError",
    "TransportError",
    "MalformedResponseError",
    "DimensionMismatchError",
    "text_features",
    "pair_features",
    "embed_pair",
    "cosine",
    "similarity",
    "pair_loss",
    "batch_loss_and_grad",
    "train_projection",
    "embed_batch_remote",
    "score_corpus",
    "save_head",
    "load_head",
]

SEPARATOR = "\x1f"
_NORM_EPS = 1e-12


class EmbedderKind(str, Enum):
    HASHED_NGRAM = "hashed_ngram"
    REMOTE = "remote"


class EmbeddingBackendError(Exception):
    """Base for remote embedding failures."""


class TransportError(EmbeddingBackendError):
    """Connection failure, timeout, or non-200 status."""


class MalformedResponseError(EmbeddingBackendError):
    """Response body missing keys or inconsistent with the request."""


class DimensionMismatchError(EmbeddingBackendError):
    """Backend vector width disagrees with the configured dimension."""


@dataclass(frozen=True)
class RemoteBackendConfig:
    url: str
    timeout_ms: int = 10_000
    batch_cap: int = 32
    dim: int | None = None
    bearer_token_env: str | None = None

    def __post_init__(self) -> None:
        if self.batch_cap < 1:
            raise ValueError("batch_cap must be positive")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")


@dataclass(frozen=True)
class EmbedderConfig:
    kind: EmbedderKind = EmbedderKind.HASHED_NGRAM
    ngram_sizes: tuple[int, ...] = (3, 4)
    hash_dim: int = 2**15
    projection_dim: int = 128
    hash_seed: int = 0
    remote: RemoteBackendConfig | None = None

    def __post_init__(self) -> None:
        if self.hash_dim < 1 or (self.hash_dim & (self.hash_dim - 1)) != 0:
            raise ValueError(f"hash_dim must be a power of two, got {self.hash_dim}")
        if not 1 <= self.projection_dim <= self.hash_dim:
            raise ValueError("projection_dim must lie in [1, hash_dim]")
        if any(n < 1 for n in self.ngram_sizes):
            raise ValueError("ngram sizes must be positive")
        if self.kind is EmbedderKind.REMOTE and self.remote is None:
            raise ValueError("remote kind requires a RemoteBackendConfig")


@dataclass
class ProjectionHead:
    weights: np.ndarray  # (hash_dim, projection_dim)
    epochs_trained: int = 0
    final_loss: float | None = None
    epoch_losses: tuple[float, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    margin: float = 0.2
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.margin < 1.0:
            raise ValueError("margin must lie in [0, 1)")
        if not math.isfinite(self.learning_rate) or self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive and finite")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


def text_features(text: str, ngram_sizes: Sequence[int] = (3, 4)) -> list[str]:
    """Word unigrams plus character n-grams of one string.

    The reserved separator counts as whitespace for word tokens but stays
    inside character grams, so grams spanning a question/answer boundary
    are distinct from grams inside either side.
    """
    words = text.replace(SEPARATOR, " ").split()
    features = [f"w:{w}" for w in words]
    for n in ngram_sizes:
        features.extend(f"c{n}:{text[i : i + n]}" for i in range(len(text) - n + 1))
    return features


def pair_features(question: str, answer: str, ngram_sizes: Sequence[int] = (3, 4)) -> list[str]:
    q = question.replace(SEPARATOR, " ")
    a = answer.replace(SEPARATOR, " ")
    return text_features(q + SEPARATOR + a, ngram_sizes)


def _hash_feature(feature: str, hash_seed: int, hash_dim: int) -> tuple[int, int]:
    digest = hashlib.blake2b(
        f"{hash_seed}|{feature}".encode("utf-8"), digest_size=8
    ).digest()
    value = int.from_bytes(digest, "big")
    sign = 1 if value & 1 else -1
    return (value >> 1) % hash_dim, sign


def _bucket_counts(features: Iterable[str], config: EmbedderConfig) -> dict[int, float]:
    counts: dict[int, float] = {}
    for feature, n in Counter(features).items():
        bucket, sign = _hash_feature(feature, config.hash_seed, config.hash_dim)
        counts[bucket] = counts.get(bucket, 0.0) + sign * n
    return {k: v for k, v in counts.items() if v != 0.0}


def _unit_basis(dim: int) -> np.ndarray:
    e0 = np.zeros(dim)
    e0[0] = 1.0
    return e0


def embed_pair(
    question: str,
    answer: str,
    config: EmbedderConfig,
    head: ProjectionHead | None = None,
) -> np.ndarray:
    """Unit-norm pair vector of width projection_dim.

    Zero-feature input (both sides empty after normalization) maps to the
    fixed basis vector e_0, so empty answers are maximally similar only to
    other empty answers and nothing divides by zero. Without a head the
    raw hashed vector is truncated to projection_dim (identity truncation).
    """
    if config.kind is EmbedderKind.REMOTE:
        return embed_batch_remote([(question, answer)], config.remote)[0]
    counts = _bucket_counts(pair_features(question, answer, config.ngram_sizes), config)
    if not counts:
        return _unit_basis(config.projection_dim)
    raw = np.zeros(config.hash_dim)
    for bucket, value in counts.items():
        raw[bucket] = value
    raw /= np.linalg.norm(raw)
    projected = raw @ head.weights if head is not None else raw[: config.projection_dim]
    norm = np.linalg.norm(projected)
    if norm < _NORM_EPS:
        return _unit_basis(config.projection_dim)
    return projected / norm


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, clamped to [-1, 1]. Identical vectors give 1.0 exactly."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < _NORM_EPS or nv < _NORM_EPS:
        raise ValueError("cosine undefined for zero vectors")
    if np.array_equal(u, v):
        return 1.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def similarity(
    question: str,
    correct_answer: str,
    given_answer: str,
    config: EmbedderConfig,
    head: ProjectionHead | None = None,
) -> float:
    """s = cos(embed(Q, A_correct), embed(Q, A_given)). Symmetric in the answers."""
    return cosine(
        embed_pair(question, correct_answer, config, head),
        embed_pair(question, given_answer, config, head),
    )


def pair_loss(cos_value: float, label: int, margin: float = 0.2) -> float:
    """Contrastive loss on the cosine.

    label +1 (correct pair): 1 - cos. label -1 (incorrect pair):
    max(0, cos - margin). The hinge subgradient at cos == margin is 0.
    """
    if label not in (1, -1):
        raise ValueError(f"label must be +1 or -1, got {label}")
    if label == 1:
        return 1.0 - cos_value
    return max(0.0, cos_value - margin)


def _pair_matrix(
    pairs: list[tuple[str, str]], config: EmbedderConfig
) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Row-normalized hashed features; mask marks rows with any feature."""
    data, indices, indptr = [], [], [0]
    mask = np.zeros(len(pairs), dtype=bool)
    for i, (q, a) in enumerate(pairs):
        counts = _bucket_counts(pair_features(q, a, config.ngram_sizes), config)
        if counts:
            mask[i] = True
            norm = math.sqrt(sum(v * v for v in counts.values()))
            for bucket in sorted(counts):
                indices.append(bucket)
                data.append(counts[bucket] / norm)
        indptr.append(len(indices))
    matrix = sparse.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(pairs), config.hash_dim),
    )
    return matrix, mask


def _project_rows(
    x: sparse.csr_matrix,
    mask: np.ndarray,
    config: EmbedderConfig,
    head: ProjectionHead | None,
) -> np.ndarray:
    """Dense unit-norm projected rows, with e_0 for empty or collapsed rows."""
    if head is not None:
        projected = x @ head.weights
    else:
        projected = x[:, : config.projection_dim].toarray()
    norms = np.linalg.norm(projected, axis=1)
    ok = mask & (norms > _NORM_EPS)
    out = np.where(ok[:, None], projected / np.maximum(norms, _NORM_EPS)[:, None], 0.0)
    out[~ok, 0] = 1.0
    return out


def batch_loss_and_grad(
    weights: np.ndarray,
    x_correct: sparse.csr_matrix,
    x_given: sparse.csr_matrix,
    labels: np.ndarray,
    margin: float,
    mask_correct: np.ndarray | None = None,
    mask_given: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Mean contrastive loss over the batch and its gradient in the weights.

    Rows whose features are empty or whose projection collapses to zero are
    embedded as the constant e_0 and contribute no gradient.
    """
    n = x_correct.shape[0]
    if mask_correct is None:
        mask_correct = np.ones(n, dtype=bool)
    if mask_given is None:
        mask_given = np.ones(n, dtype=bool)

    u = x_correct @ weights
    v = x_given @ weights
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    ok_u = mask_correct & (nu > _NORM_EPS)
    ok_v = mask_given & (nv > _NORM_EPS)

    u_hat = np.where(ok_u[:, None], u / np.maximum(nu, _NORM_EPS)[:, None], 0.0)
    u_hat[~ok_u, 0] = 1.0
    v_hat = np.where(ok_v[:, None], v / np.maximum(nv, _NORM_EPS)[:, None], 0.0)
    v_hat[~ok_v, 0] = 1.0
    cos = np.sum(u_hat * v_hat, axis=1)

    positive = labels == 1
    losses = np.where(positive, 1.0 - cos, np.maximum(0.0, cos - margin))
    # dLoss/dcos: -1 for positives, 1 on the active hinge, 0 at and below it
    dcos = np.where(positive, -1.0, (cos > margin).astype(float)) / n

    grad_u = np.where(
        ok_u[:, None],
        dcos[:, None] * (v_hat - cos[:, None] * u_hat) / np.maximum(nu, _NORM_EPS)[:, None],
        0.0,
    )
    grad_v = np.where(
        ok_v[:, None],
        dcos[:, None] * (u_hat - cos[:, None] * v_hat) / np.maximum(nv, _NORM_EPS)[:, None],
        0.0,
    )
    grad = (x_correct.T @ grad_u) + (x_given.T @ grad_v)
    return float(np.mean(losses)), np.asarray(grad)


def _training_matrices(
    corpus: Corpus, config: EmbedderConfig
) -> tuple[sparse.csr_matrix, np.ndarray, sparse.csr_matrix, np.ndarray, np.ndarray]:
    correct_pairs = [(r.question, r.correct_answer) for r in corpus.records]
    given_pairs = [(r.question, r.given_answer) for r in corpus.records]
    x_c, mask_c = _pair_matrix(correct_pairs, config)
    x_g, mask_g = _pair_matrix(given_pairs, config)
    labels = np.array(
        [1 if r.grade is Grade.CORRECT else -1 for r in corpus.records], dtype=int
    )
    return x_c, mask_c, x_g, mask_g, labels


def init_head(config: EmbedderConfig, seed: int) -> ProjectionHead:
    """Random projection init: unit-variance rows scaled so projected norms
    stay near 1, which keeps untrained cosines close to the raw hashed ones."""
    rng = np.random.default_rng(seed)
    weights = rng.normal(
        0.0, 1.0 / math.sqrt(config.projection_dim), size=(config.hash_dim, config.projection_dim)
    )
    return ProjectionHead(weights=weights)


def train_projection(
    corpus: Corpus, config: EmbedderConfig, train_config: TrainConfig
) -> ProjectionHead:
    """Mini-batch gradient descent on the pair loss.

    Deterministic for a fixed (corpus, config, seed). Zero epochs returns
    the initialization untouched. Non-finite loss aborts with the epoch
    named in the error.
    """
    if len(corpus) == 0:
        raise ValueError("cannot train on an empty corpus")
    head = init_head(config, train_config.seed)
    if train_config.epochs == 0:
        return head
    x_c, mask_c, x_g, mask_g, labels = _training_matrices(corpus, config)
    rng = np.random.default_rng(train_config.seed + 1)
    n = len(corpus)
    weights = head.weights
    epoch_losses: list[float] = []
    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        seen = 0
        loss_sum = 0.0
        for start in range(0, n, train_config.batch_size):
            batch = order[start : start + train_config.batch_size]
            loss, grad = batch_loss_and_grad(
                weights,
                x_c[batch],
                x_g[batch],
                labels[batch],
                train_config.margin,
                mask_c[batch],
                mask_g[batch],
            )
            if not math.isfinite(loss):
                raise ValueError(f"training diverged at epoch {epoch}: loss {loss}")
            weights = weights - train_config.learning_rate * grad
            loss_sum += loss * len(batch)
            seen += len(batch)
        if not np.all(np.isfinite(weights)):
            raise ValueError(f"training diverged at epoch {epoch}: non-finite weights")
        epoch_losses.append(loss_sum / seen)
    return ProjectionHead(
        weights=weights,
        epochs_trained=train_config.epochs,
        final_loss=epoch_losses[-1],
        epoch_losses=tuple(epoch_losses),
    )


def embed_batch_remote(
    pairs: Sequence[tuple[str, str]], remote: RemoteBackendConfig
) -> np.ndarray:
    """Fetch vectors for (question, answer) pairs from the remote backend.

    Requests go out in order, batch_cap pairs at a time; the concatenated
    result preserves input order. Vectors are re-normalized locally (zero
    vectors become e_0). Empty input makes no request at all.
    """
    if remote is None:
        raise ValueError("no remote backend configured")
    if len(pairs) == 0:
        return np.zeros((0, remote.dim or 0))
    headers = {}
    if remote.bearer_token_env:
        import os

        token = os.environ.get(remote.bearer_token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"

    chunks: list[np.ndarray] = []
    expected_dim = remote.dim
    for start in range(0, len(pairs), remote.batch_cap):
        batch = [[q, a] for q, a in pairs[start : start + remote.batch_cap]]
        try:
            response = requests.post(
                remote.url,
                json={"pairs": batch},
                timeout=remote.timeout_ms / 1000.0,
                headers=headers,
            )
        except requests.RequestException as exc:
            raise TransportError(f"embedding backend unreachable: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(
                f"embedding backend returned status {response.status_code}"
            )
        try:
            body = response.json()
            dim = int(body["dim"])
            vectors = body["vectors"]
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedResponseError(f"unparseable backend response: {exc}") from exc
        if expected_dim is not None and dim != expected_dim:
            raise DimensionMismatchError(
                f"backend dim {dim} != expected {expected_dim}"
            )
        expected_dim = dim
        if len(vectors) != len(batch):
            raise MalformedResponseError(
                f"requested {len(batch)} vectors, got {len(vectors)}"
            )
        arr = np.asarray(vectors, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != dim:
            raise MalformedResponseError("vector widths disagree with declared dim")
        chunks.append(arr)
    out = np.vstack(chunks)
    norms = np.linalg.norm(out, axis=1)
    collapsed = norms < _NORM_EPS
    out = out / np.maximum(norms, _NORM_EPS)[:, None]
    if collapsed.any():
        out[collapsed] = 0.0
        out[collapsed, 0] = 1.0
    return out


def score_corpus(
    corpus: Corpus,
    config: EmbedderConfig,
    head: ProjectionHead | None = None,
    role: str = "D",
) -> ScoredDataset:
    """Similarity-score every record: s = cos(pair(Q, A_correct), pair(Q, A_given))."""
    records = corpus.records
    if config.kind is EmbedderKind.REMOTE:
        pairs = [(r.question, r.correct_answer) for r in records]
        pairs += [(r.question, r.given_answer) for r in records]
        vectors = embed_batch_remote(pairs, config.remote)
        u, v = vectors[: len(records)], vectors[len(records) :]
    else:
        x_c, mask_c = _pair_matrix([(r.question, r.correct_answer) for r in records], config)
        x_g, mask_g = _pair_matrix([(r.question, r.given_answer) for r in records], config)
        u = _project_rows(x_c, mask_c, config, head)
        v = _project_rows(x_g, mask_g, config, head)
    cos = np.clip(np.sum(u * v, axis=1), -1.0, 1.0)
    items = tuple(
        ScoredRecord(record=r, s=float(c)) for r, c in zip(records, cos)
    )
    return ScoredDataset(items=items, role=role)


def save_head(head: ProjectionHead, path: str) -> None:
    meta = {
        "epochs_trained": head.epochs_trained,
        "final_loss": head.final_loss,
        "epoch_losses": list(head.epoch_losses),
    }
    np.savez(path, weights=head.weights, meta=json.dumps(meta))


def load_head(path: str) -> ProjectionHead:
    with np.load(path, allow_pickle=False) as bundle:
        weights = bundle["weights"]
        meta = json.loads(str(bundle["meta"]))
    return ProjectionHead(
        weights=weights,
        epochs_trained=meta["epochs_trained"],
        final_loss=meta["final_loss"],
        epoch_losses=tuple(meta["epoch_losses"]),
    )

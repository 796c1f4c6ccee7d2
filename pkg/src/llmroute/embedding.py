"""Routing-space embeddings: linear projection plus domain-cluster losses.

Base embeddings come from an external encoder and are frozen. We train a
linear projection (plus one learnable center per domain) so that projected,
L2-normalized embeddings cluster by domain:

  attraction loss  = -mean_i log softmax(e_i . centers)[label_i]
  separation loss  = mean_j log sum_{k != j} exp(center_j . center_k)
  total            = attraction + separation

Both terms use dot products of unit-norm vectors, evaluated with
log-sum-exp so nothing overflows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatch, EmptyBatch, TooFewDomains, ZeroVector

_NORM_EPS = 1e-12


@dataclass
class EmbedTrainConfig:
    epochs: int = 200
    learning_rate: float = 0.05
    batch_size: int = 1024
    seed: int = 42

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class ProjectionModel:
    """Linear map into routing space plus per-domain centers.

    weight is (d_route, d_base); centers is (n_domains, d_route).
    Projected embeddings are always L2-normalized.
    """

    weight: np.ndarray
    centers: np.ndarray
    d_route: int

    @property
    def d_base(self) -> int:
        return self.weight.shape[1]

    @property
    def n_domains(self) -> int:
        return self.centers.shape[0]

    def save(self, path) -> None:
        payload = {
            "d_base": int(self.d_base),
            "d_route": int(self.d_route),
            "weight": self.weight.tolist(),
            "centers": self.centers.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "ProjectionModel":
        with open(path) as fh:
            payload = json.load(fh)
        weight = np.asarray(payload["weight"], dtype=float)
        centers = np.asarray(payload["centers"], dtype=float)
        return cls(weight=weight, centers=centers, d_route=int(payload["d_route"]))


def normalize(v: np.ndarray) -> np.ndarray:
    """L2-normalize a vector; raises ZeroVector on (near-)zero input."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < _NORM_EPS:
        raise ZeroVector("cannot normalize a zero vector")
    return v / n


def project(model: ProjectionModel, base: np.ndarray) -> np.ndarray:
    """Map a base embedding into routing space (unit norm). Deterministic."""
    base = np.asarray(base, dtype=float)
    if base.shape != (model.d_base,):
        raise DimensionMismatch(
            f"base embedding has dim {base.shape}, model expects {model.d_base}"
        )
    return normalize(model.weight @ base)


def intra_loss(embeddings: np.ndarray, labels, centers: np.ndarray) -> float:
    """Cross-entropy of each embedding against its own domain center."""
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=float))
    if embeddings.size == 0:
        raise EmptyBatch("no embeddings")
    labels = np.asarray(labels, dtype=int)
    centers = np.asarray(centers, dtype=float)
    n_domains = centers.shape[0]
    if labels.min() < 0 or labels.max() >= n_domains:
        raise ValueError("domain label outside [0, n_domains)")
    logits = embeddings @ centers.T
    lse = logsumexp(logits, axis=1)
    picked = logits[np.arange(len(labels)), labels]
    return float(np.mean(lse - picked))


def inter_loss(centers: np.ndarray) -> float:
    """Mean over centers of log-sum-exp similarity to the other centers."""
    centers = np.asarray(centers, dtype=float)
    n = centers.shape[0]
    if n < 2:
        raise TooFewDomains("separation needs at least two domain centers")
    sims = centers @ centers.T
    off = ~np.eye(n, dtype=bool)
    rows = np.array([logsumexp(sims[j][off[j]]) for j in range(n)])
    return float(np.mean(rows))


def total_loss(embeddings: np.ndarray, labels, centers: np.ndarray) -> float:
    return intra_loss(embeddings, labels, centers) + inter_loss(centers)


def loss_and_grads(
    weight: np.ndarray, centers: np.ndarray, bases: np.ndarray, labels
) -> tuple[float, np.ndarray, np.ndarray]:
    """Total loss and its analytic gradients w.r.t. weight and centers.

    Backpropagates through projection and L2 normalization; the center
    gradient carries both the attraction and separation terms.
    """
    bases = np.atleast_2d(np.asarray(bases, dtype=float))
    labels = np.asarray(labels, dtype=int)
    n = bases.shape[0]
    if n == 0:
        raise EmptyBatch("no training rows")
    n_domains = centers.shape[0]
    if n_domains < 2:
        raise TooFewDomains("training needs at least two domains")

    pre = bases @ weight.T  # (n, d_route), pre-normalization
    norms = np.linalg.norm(pre, axis=1, keepdims=True)
    norms = np.maximum(norms, _NORM_EPS)
    emb = pre / norms

    # attraction term
    logits = emb @ centers.T
    lse = logsumexp(logits, axis=1)
    picked = logits[np.arange(n), labels]
    loss_intra = float(np.mean(lse - picked))
    soft = np.exp(logits - lse[:, None])
    dlogits = soft.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    demb = dlogits @ centers
    dcenters = dlogits.T @ emb

    # separation term
    sims = centers @ centers.T
    off = ~np.eye(n_domains, dtype=bool)
    row_lse = np.array([logsumexp(sims[j][off[j]]) for j in range(n_domains)])
    loss_inter = float(np.mean(row_lse))
    pair_soft = np.exp(sims - row_lse[:, None]) * off
    dcenters += ((pair_soft + pair_soft.T) @ centers) / n_domains

    # normalization chain rule, then back to the weight matrix
    dpre = (demb - np.sum(demb * emb, axis=1, keepdims=True) * emb) / norms
    dweight = dpre.T @ bases

    return loss_intra + loss_inter, dweight, dcenters


def _init_weight(d_route: int, d_base: int, rng: np.random.Generator) -> np.ndarray:
    if d_route == d_base:
        return np.eye(d_route)
    w = rng.normal(size=(d_route, d_base)) / np.sqrt(d_base)
    return w


def _init_centers(
    bases: np.ndarray, labels: np.ndarray, weight: np.ndarray, n_domains: int,
    rng: np.random.Generator,
) -> np.ndarray:
    d_route = weight.shape[0]
    pre = bases @ weight.T
    norms = np.maximum(np.linalg.norm(pre, axis=1, keepdims=True), _NORM_EPS)
    emb = pre / norms
    centers = np.empty((n_domains, d_route))
    for j in range(n_domains):
        mask = labels == j
        if mask.any():
            centers[j] = emb[mask].mean(axis=0)
        else:
            # domain absent from the training set; seed a small random center
            centers[j] = rng.normal(size=d_route) * 0.01
    return centers


def train_projection(
    dataset, cfg: EmbedTrainConfig, d_route: int | None = None
) -> ProjectionModel:
    """Fit the projection and centers by gradient descent.

    `dataset` is a sequence of (base_vector, domain_label) pairs. Centers
    start at the per-domain mean of the projected embeddings. The returned
    model is the best (lowest total loss) iterate seen, so the final loss
    never exceeds the initial one. Deterministic given cfg.seed.
    """
    if len(dataset) == 0:
        raise EmptyBatch("empty training dataset")
    bases = np.asarray([np.asarray(b, dtype=float) for b, _ in dataset])
    labels = np.asarray([int(lbl) for _, lbl in dataset])
    if len(np.unique(labels)) < 2:
        raise TooFewDomains("training needs at least two distinct domain labels")
    n_domains = int(labels.max()) + 1
    d_base = bases.shape[1]
    if d_route is None:
        d_route = d_base

    rng = np.random.default_rng(cfg.seed)
    weight = _init_weight(d_route, d_base, rng)
    centers = _init_centers(bases, labels, weight, n_domains, rng)

    best_loss, _, _ = loss_and_grads(weight, centers, bases, labels)
    best = (weight.copy(), centers.copy())

    full_batch = len(bases) <= 10_000
    for _ in range(cfg.epochs):
        if full_batch:
            loss, dw, dc = loss_and_grads(weight, centers, bases, labels)
            weight = weight - cfg.learning_rate * dw
            centers = centers - cfg.learning_rate * dc
        else:
            order = rng.permutation(len(bases))
            for start in range(0, len(bases), cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                _, dw, dc = loss_and_grads(weight, centers, bases[idx], labels[idx])
                weight = weight - cfg.learning_rate * dw
                centers = centers - cfg.learning_rate * dc
        loss, _, _ = loss_and_grads(weight, centers, bases, labels)
        if loss < best_loss:
            best_loss = loss
            best = (weight.copy(), centers.copy())

    return ProjectionModel(weight=best[0], centers=best[1], d_route=d_route)

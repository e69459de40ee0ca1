"""Triplet loss with multi-similarity pair mining on cosine distance."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import Tensor, ops

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.2
    epsilon: float = 0.1

    def __post_init__(self):
        if self.margin < 0 or self.epsilon < 0:
            raise ConfigError("margin and epsilon must be >= 0")


@dataclass
class MinerOutput:
    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    degenerate: bool = False

    def __len__(self) -> int:
        return int(self.anchors.size)

    def as_set(self, order=None) -> set:
        """Triplets as a set of tuples; ``order`` maps batch positions to item ids."""
        a, p, n = self.anchors, self.positives, self.negatives
        if order is not None:
            order = np.asarray(order)
            a, p, n = order[a], order[p], order[n]
        return set(zip(a.tolist(), p.tolist(), n.tolist()))


def cosine_distance_matrix(emb: np.ndarray) -> np.ndarray:
    """``1 - a . b`` for unit-norm rows."""
    return 1.0 - emb @ emb.T


def mine(embeddings, labels, cfg: LossConfig = LossConfig()) -> MinerOutput:
    """Multi-similarity mining, expanded to (anchor, positive, negative) triplets.

    For anchor a, positive p is kept when ``d(a,p) + eps > min_n d(a,n)``
    and negative n is kept when ``d(a,n) - eps < max_p d(a,p)``. Every kept
    positive is paired with every kept negative of the same anchor.
    """
    emb = embeddings.data if isinstance(embeddings, Tensor) else np.asarray(embeddings)
    labels = np.asarray(labels)
    empty = np.zeros(0, dtype=np.intp)
    B = len(labels)
    same = labels[:, None] == labels[None, :]
    pos_mask = same & ~np.eye(B, dtype=bool)
    neg_mask = ~same
    if not pos_mask.any() or not neg_mask.any():
        log.debug("degenerate batch for mining (%d subjects)", len(set(labels.tolist())))
        return MinerOutput(empty, empty, empty, degenerate=True)

    dist = cosine_distance_matrix(emb)
    hardest_neg = np.where(neg_mask, dist, np.inf).min(axis=1, keepdims=True)
    hardest_pos = np.where(pos_mask, dist, -np.inf).max(axis=1, keepdims=True)
    keep_pos = pos_mask & (dist + cfg.epsilon > hardest_neg)
    keep_neg = neg_mask & (dist - cfg.epsilon < hardest_pos)

    triplet_mask = keep_pos[:, :, None] & keep_neg[:, None, :]
    a, p, n = np.nonzero(triplet_mask)
    return MinerOutput(a.astype(np.intp), p.astype(np.intp), n.astype(np.intp))


def triplet_loss(embeddings: Tensor, triplets: MinerOutput, cfg: LossConfig = LossConfig()) -> Tensor:
    """Mean of ``max(0, d(a,p) - d(a,n) + margin)`` over the mined triplets.

    With no triplets the loss is an exact zero that still depends on the
    embeddings, so backward runs and yields zero gradients.
    """
    embeddings = ops.as_tensor(embeddings)
    if len(triplets) == 0:
        return ops.scale(ops.sum(embeddings), 0.0)
    a = ops.take(embeddings, triplets.anchors)
    p = ops.take(embeddings, triplets.positives)
    n = ops.take(embeddings, triplets.negatives)
    # d(a,p) - d(a,n) = a.n - a.p on unit vectors
    gap = ops.sum(ops.mul(a, ops.sub(n, p)), axis=-1)
    return ops.mean(ops.relu(ops.add(gap, cfg.margin)))

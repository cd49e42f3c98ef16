"""
Per-token classification losses with analytic gradients.

All three losses share the form -w(p_t) * log(p_t):

- cross entropy: w = 1
- focal:         w = (1 - p_t) ** gamma   (hard tokens weigh more)
- reweighted:    w = (1 + p_t) ** gamma   (hard tokens weigh less, so
                 labels the model strongly disagrees with, which in
                 projected data are often wrong, pull less)
"""

from dataclasses import dataclass
from typing import Any, Dict, Sequence, Union

import numpy as np

from .errors import AllMasked, IndexOutOfRange

EPSILON = 1e-12

CROSS_ENTROPY = "ce"
FOCAL = "focal"
REWEIGHTED = "rw"
LOSS_NAMES = (CROSS_ENTROPY, FOCAL, REWEIGHTED)

ArrayLike = Union[Sequence[float], np.ndarray]


@dataclass(frozen=True)
class LossKind:
    """Loss variant; gamma is ignored for cross entropy."""

    name: str = CROSS_ENTROPY
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.name not in LOSS_NAMES:
            raise ValueError(f"unknown loss kind {self.name!r}")
        if not self.gamma >= 0:
            raise ValueError("gamma must be non-negative")

    @classmethod
    def cross_entropy(cls) -> "LossKind":
        return cls(CROSS_ENTROPY, 0.0)

    @classmethod
    def focal(cls, gamma: float = 2.0) -> "LossKind":
        return cls(FOCAL, float(gamma))

    @classmethod
    def reweighted(cls, gamma: float = 4.0) -> "LossKind":
        return cls(REWEIGHTED, float(gamma))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LossKind":
        """Build from the config form {"kind": "ce"|"focal"|"rw", "gamma": x}."""
        name = str(data.get("kind", CROSS_ENTROPY))
        return cls(name, float(data.get("gamma", 0.0)))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.name, "gamma": self.gamma}


def loss_weight(p_t: Union[float, np.ndarray], kind: LossKind) -> Any:
    """Weight multiplying -log(p_t)."""
    p = np.asarray(p_t, dtype=float)
    if kind.name == FOCAL:
        return (1.0 - p) ** kind.gamma
    if kind.name == REWEIGHTED:
        return (1.0 + p) ** kind.gamma
    return np.ones_like(p)


def _weight_derivative(p: np.ndarray, kind: LossKind) -> np.ndarray:
    if kind.name == CROSS_ENTROPY or kind.gamma == 0:
        return np.zeros_like(p)
    if kind.name == FOCAL:
        with np.errstate(divide="ignore", invalid="ignore"):
            return -kind.gamma * (1.0 - p) ** (kind.gamma - 1.0)
    return kind.gamma * (1.0 + p) ** (kind.gamma - 1.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return np.asarray(exp / exp.sum(axis=-1, keepdims=True))


def token_losses(probs: np.ndarray, labels: np.ndarray, kind: LossKind) -> np.ndarray:
    """
    Vectorised token_loss.

    Args:
        probs: (N, K) distributions
        labels: (N,) true label indices
        kind: Loss variant

    Returns:
        (N,) non-negative losses
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.asarray(labels, dtype=int)
    bad = (labels < 0) | (labels >= probs.shape[1])
    if bad.any():
        raise IndexOutOfRange(int(labels[bad][0]), probs.shape[1])
    p_t = np.clip(probs[np.arange(len(labels)), labels], EPSILON, 1.0)
    return np.asarray(-loss_weight(p_t, kind) * np.log(p_t))


def token_loss(dist: ArrayLike, true_label: int, kind: LossKind) -> float:
    """
    Loss of one token.

    Args:
        dist: Probabilities over the label set
        true_label: Index of the gold label
        kind: Loss variant

    Returns:
        -w(p_t) * log(p_t) with p_t clamped to [1e-12, 1]

    Raises:
        IndexOutOfRange: If true_label is not a valid index
    """
    probs = np.asarray(dist, dtype=float)
    if not 0 <= true_label < probs.shape[-1]:
        raise IndexOutOfRange(true_label, probs.shape[-1])
    return float(token_losses(probs[None, :], np.array([true_label]), kind)[0])


def batch_loss(
    dists: Sequence[ArrayLike],
    labels: Sequence[int],
    mask: Sequence[bool],
    kind: LossKind,
) -> float:
    """
    Mean token loss over unmasked tokens (mask True means the token counts).

    Raises:
        AllMasked: If no token is unmasked
        ValueError: If the sequences differ in length
    """
    if not len(dists) == len(labels) == len(mask):
        raise ValueError("dists, labels and mask must have equal lengths")
    keep = np.asarray(mask, dtype=bool)
    if not keep.any():
        raise AllMasked()
    probs = np.asarray(dists, dtype=float)[keep]
    return float(token_losses(probs, np.asarray(labels)[keep], kind).mean())


def logit_gradients(
    logits: np.ndarray, labels: np.ndarray, kind: LossKind
) -> np.ndarray:
    """
    Gradient of each token's loss with respect to its logits.

    With p = softmax(z) and L = -w(p_t) log p_t:
        dL/dz_j = (w'(p_t) p_t log p_t + w(p_t)) * (s_j - [j == t])

    Args:
        logits: (N, K)
        labels: (N,)
        kind: Loss variant

    Returns:
        (N, K) gradients; each row sums to zero
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    labels = np.asarray(labels, dtype=int)
    probs = softmax(logits)
    rows = np.arange(len(labels))
    p_t = np.clip(probs[rows, labels], EPSILON, 1.0)
    log_p = np.log(p_t)
    # The derivative term vanishes at p_t == 1 (log p_t == 0) even where the
    # focal derivative itself is unbounded.
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = _weight_derivative(p_t, kind) * p_t * log_p
    slope = np.where(log_p == 0.0, 0.0, raw)
    scale = slope + loss_weight(p_t, kind)
    residual = probs.copy()
    residual[rows, labels] -= 1.0
    return np.asarray(scale[:, None] * residual)


def loss_gradient(
    dist_logits: ArrayLike, true_label: int, kind: LossKind
) -> np.ndarray:
    """Gradient of token_loss(softmax(logits)) with respect to the logits."""
    logits = np.asarray(dist_logits, dtype=float)
    if not 0 <= true_label < logits.shape[-1]:
        raise IndexOutOfRange(true_label, logits.shape[-1])
    return logit_gradients(logits[None, :], np.array([true_label]), kind)[0]

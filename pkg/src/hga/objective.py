"""Label propagation, class prototypes, and the three loss terms.

Losses exist in two flavours: tape-level functions (suffix `_t`) used by the
trainer for exact gradients, and plain-array wrappers matching the public
operation contracts. Both share the same code path, so values agree bitwise.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

EPS = 1e-12
UNDECIDED = -1


@dataclass(frozen=True)
class LossWeights:
    lam: float = 0.5     # unlabeled contrastive weight
    tau: float = 0.5     # temperature
    gamma: float = 1.0   # margin
    eta: float = 0.01    # reconstruction weight
    mu: float = 0.01     # margin-loss weight

    def __post_init__(self):
        if min(self.lam, self.gamma, self.eta, self.mu) < 0 or self.tau <= 0:
            raise ValueError("loss weights must be nonnegative with tau > 0")


@dataclass(frozen=True)
class PropagatedLabels:
    Ytil: np.ndarray         # (n, c) soft labels A @ Y
    hard: np.ndarray         # (n,) class index or UNDECIDED
    confidence: np.ndarray   # (n,) max row value


def build_label_matrix(labels: np.ndarray, train_idx: np.ndarray, c: int) -> np.ndarray:
    """One-hot rows for train nodes, zero rows elsewhere."""
    Y = np.zeros((labels.shape[0], c))
    Y[train_idx, labels[train_idx]] = 1.0
    return Y


def propagate_labels(A: np.ndarray, Y: np.ndarray,
                     original_labels: np.ndarray) -> PropagatedLabels:
    """original_labels: train labels where known, UNDECIDED elsewhere.

    Labeled nodes always keep their original label."""
    Ytil = A @ Y
    hard = np.argmax(Ytil, axis=1)
    rowmax = Ytil.max(axis=1)
    ties = (Ytil == rowmax[:, None]).sum(axis=1) > 1
    hard[(rowmax == 0.0) | ties] = UNDECIDED
    known = original_labels != UNDECIDED
    hard[known] = original_labels[known]
    return PropagatedLabels(Ytil=Ytil, hard=hard, confidence=rowmax)


def class_prototype_selector(labels: np.ndarray, train_idx: np.ndarray,
                             c: int) -> np.ndarray:
    """(c, n) constant matrix averaging rows of originally labeled train nodes."""
    n = labels.shape[0]
    sel = np.zeros((c, n))
    for y in range(c):
        members = train_idx[labels[train_idx] == y]
        if members.size == 0:
            raise ValueError(f"class {y} without labeled support")
        sel[y, members] = 1.0 / members.size
    return sel


def class_prototypes_pred(P: np.ndarray, labels: np.ndarray,
                          train_idx: np.ndarray, c: int) -> np.ndarray:
    return class_prototype_selector(labels, train_idx, c) @ P


def class_prototypes_rep(Mhat: np.ndarray, labels: np.ndarray,
                         train_idx: np.ndarray, c: int) -> np.ndarray:
    return class_prototype_selector(labels, train_idx, c) @ Mhat


def _cosine_rows_t(A: Tensor, B: Tensor) -> Tensor:
    na = ad.sqrt((A * A).sum(axis=1, keepdims=True)) + EPS
    nb = ad.sqrt((B * B).sum(axis=1, keepdims=True)) + EPS
    return (A @ B.T) / (na @ nb.T)


def _contrastive_set_t(sim: Tensor, idx: np.ndarray, y: np.ndarray,
                       c: int, tau: float) -> Tensor:
    """-sum_i ln( exp(sim_i,y_i / tau) / sum_{y != y_i} exp(sim_i,y / tau) );
    the positive class is absent from the denominator, as specified."""
    rows = sim.gather_rows(idx)
    pos = np.zeros((idx.size, c))
    pos[np.arange(idx.size), y] = 1.0
    scaled = rows * (1.0 / tau)
    pos_term = (scaled * Tensor(pos)).sum()
    denom = (ad.exp(scaled) * Tensor(1.0 - pos)).sum(axis=1)
    return ad.log(denom).sum() - pos_term


def contrastive_loss_t(P: Tensor, C_pred: Tensor, hard: np.ndarray,
                       train_idx: np.ndarray, weights: LossWeights,
                       c: int) -> Tensor:
    if c < 2:
        raise ValueError("contrastive loss needs >= 2 classes")
    sim = _cosine_rows_t(P, C_pred)
    in_train = np.zeros(hard.shape[0], dtype=bool)
    in_train[train_idx] = True
    loss = _contrastive_set_t(sim, train_idx, hard[train_idx], c, weights.tau)
    ul = np.nonzero(~in_train & (hard != UNDECIDED))[0]
    if weights.lam > 0 and ul.size:
        loss = loss + weights.lam * _contrastive_set_t(sim, ul, hard[ul], c, weights.tau)
    return loss


def contrastive_loss(P: np.ndarray, C_pred: np.ndarray, hard: np.ndarray,
                     train_idx: np.ndarray, weights: LossWeights) -> float:
    return float(contrastive_loss_t(Tensor(P), Tensor(C_pred), hard,
                                    train_idx, weights, C_pred.shape[0]).value)


def normalize_feature_rows(X: np.ndarray) -> np.ndarray:
    """Shift each row to nonnegative, add EPS, divide by the row sum."""
    shifted = X - X.min(axis=1, keepdims=True) + EPS
    return shifted / shifted.sum(axis=1, keepdims=True)


def _normalize_rows_t(M: Tensor) -> Tensor:
    # row-min via a frozen argmin one-hot (selection constant within the step)
    onehot = np.zeros(M.shape)
    onehot[np.arange(M.shape[0]), np.argmin(M.value, axis=1)] = 1.0
    rowmin = (M * Tensor(onehot)).sum(axis=1, keepdims=True)
    shifted = M - rowmin + EPS
    return shifted / shifted.sum(axis=1, keepdims=True)


def reconstruction_loss_t(A: Tensor, X: np.ndarray,
                          sample_idx: np.ndarray) -> Tensor:
    """Cross-entropy between row-distributions of X and of the smoothed
    reconstruction (row-normalized A with self-loops applied to X-bar)."""
    if sample_idx.size == 0:
        raise ValueError("reconstruction loss needs a nonempty sample")
    Xbar = normalize_feature_rows(X)
    M = A + Tensor(np.eye(X.shape[0]))
    R = (M / M.sum(axis=1, keepdims=True)) @ Tensor(Xbar)
    Rbar = _normalize_rows_t(R)
    rows = ad.log(Rbar + EPS).gather_rows(sample_idx)
    return -(Tensor(Xbar[sample_idx]) * rows).sum()


def reconstruction_loss(A: np.ndarray, X: np.ndarray,
                        sample_idx: np.ndarray) -> float:
    return float(reconstruction_loss_t(Tensor(A), X, sample_idx).value)


def sample_margin_pairs(hard: np.ndarray, c: int, rng: np.random.Generator):
    """One partner per other class for each decided node, uniform per epoch."""
    decided = np.nonzero(hard != UNDECIDED)[0]
    by_class = {y: decided[hard[decided] == y] for y in range(c)}
    if sum(1 for y in range(c) if by_class[y].size) < 2:
        warnings.warn("margin loss needs two decided classes; defined as 0")
    i_idx, j_idx, y_idx = [], [], []
    for i in decided:
        for y in range(c):
            if y == hard[i] or by_class[y].size == 0:
                continue
            i_idx.append(i)
            j_idx.append(int(rng.choice(by_class[y])))
            y_idx.append(hard[i])
    return (np.array(i_idx, dtype=np.intp), np.array(j_idx, dtype=np.intp),
            np.array(y_idx, dtype=np.intp))


def margin_loss_t(C_rep: Tensor, Mhat: Tensor, pairs, gamma: float) -> Tensor:
    i_idx, j_idx, y_idx = pairs
    if i_idx.size == 0:
        return Tensor(0.0)
    Ci = C_rep.gather_rows(y_idx)
    d1 = ((Ci - Mhat.gather_rows(i_idx)) * (Ci - Mhat.gather_rows(i_idx))).sum(axis=1)
    d2 = ((Ci - Mhat.gather_rows(j_idx)) * (Ci - Mhat.gather_rows(j_idx))).sum(axis=1)
    return ad.relu(d1 - d2 + gamma).sum()


def margin_loss(C_rep: np.ndarray, Mhat: np.ndarray, pairs,
                gamma: float) -> float:
    return float(margin_loss_t(Tensor(C_rep), Tensor(Mhat), pairs, gamma).value)


def infonce_loss_t(C_rep: Tensor, Mhat: Tensor, hard: np.ndarray,
                   tau: float) -> Tensor:
    """Ablation variant: align adapted representations with their class
    prototype via InfoNCE (conventional denominator, all classes)."""
    decided = np.nonzero(hard != UNDECIDED)[0]
    if decided.size == 0:
        return Tensor(0.0)
    sim = _cosine_rows_t(Mhat, C_rep)
    rows = sim.gather_rows(decided) * (1.0 / tau)
    c = C_rep.shape[0]
    pos = np.zeros((decided.size, c))
    pos[np.arange(decided.size), hard[decided]] = 1.0
    return ad.log(ad.exp(rows).sum(axis=1)).sum() - (rows * Tensor(pos)).sum()


def total_objective(l_con: float, l_rec: float, l_mar: float,
                    weights: LossWeights) -> float:
    return l_con + weights.eta * l_rec + weights.mu * l_mar

"""Frozen surrogate of a pre-trained two-branch HGNN.

One-layer MLP per branch followed by one round of mean-aggregation message
passing. Parameters are immutable once frozen; tuning never touches them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .hetgraph import HetGraph
from .params_io import read_params, write_params


class FrozenError(RuntimeError):
    pass


@dataclass
class EncoderParams:
    W_hom: np.ndarray            # (f_target, d)
    W_het: dict                  # node type -> (f_type, d)
    d: int
    seed: int
    frozen: bool = False

    def freeze(self) -> "EncoderParams":
        self.W_hom.flags.writeable = False
        for W in self.W_het.values():
            W.flags.writeable = False
        self.frozen = True
        return self

    def byte_fingerprint(self) -> bytes:
        parts = [self.W_hom.tobytes()]
        parts += [self.W_het[t].tobytes() for t in sorted(self.W_het)]
        return b"".join(parts)


@dataclass(frozen=True)
class FrozenReps:
    Htil: np.ndarray             # (n, d) target reps before hom message passing
    Etil: np.ndarray             # (n, d) after hom message passing
    Hhat_typed: dict             # edge type name -> (n, d) mean neighbor reps
    Ehat: np.ndarray             # (n, d) heterogeneous branch output
    neighbor_mask: dict          # edge type name -> (n,) bool

    def __post_init__(self):
        for M in [self.Htil, self.Etil, self.Ehat, *self.Hhat_typed.values()]:
            if not np.all(np.isfinite(M)):
                raise ValueError("non-finite representation")


def init_encoder(graph: HetGraph, d: int, seed: int) -> EncoderParams:
    if d < 1:
        raise ValueError("hidden dim must be >= 1")
    rng = np.random.default_rng(seed)
    f = graph.features[graph.target_type].shape[1]
    W_hom = rng.normal(0.0, 1.0 / np.sqrt(f), size=(f, d))
    W_het = {}
    for t in graph.node_types:
        ft = graph.features[t].shape[1]
        W_het[t] = rng.normal(0.0, 1.0 / np.sqrt(ft), size=(ft, d))
    return EncoderParams(W_hom=W_hom, W_het=W_het, d=d, seed=seed)


def pretrain(graph: HetGraph, params: EncoderParams, epochs: int,
             seed: int, lr: float = 1e-2) -> EncoderParams:
    """Optional reconstruction warm-up on both branches, then freeze.

    Returns the frozen params; the per-epoch objective values are attached
    for inspection as `pretrain_history` on the returned object.
    """
    if params.frozen:
        raise FrozenError("already frozen")
    if epochs == 0:
        params.pretrain_history = []
        return params.freeze()
    rng = np.random.default_rng(seed)
    weights = [("hom", params.W_hom, graph.features[graph.target_type])]
    weights += [(t, params.W_het[t], graph.features[t]) for t in graph.node_types]
    decoders = [rng.normal(0.0, 1.0 / np.sqrt(params.d), size=(params.d, X.shape[1]))
                for _, _, X in weights]
    history = []
    for _ in range(epochs):
        total = 0.0
        for i, (_, W, X) in enumerate(weights):
            Wt = ad.Tensor(W.copy(), requires_grad=True)
            Bt = ad.Tensor(decoders[i], requires_grad=True)
            diff = ad.relu(ad.Tensor(X) @ Wt) @ Bt - ad.Tensor(X)
            loss = (diff * diff).sum() * (1.0 / X.size)
            loss.backward()
            total += float(loss.value)
            W -= lr * Wt.grad
            decoders[i] -= lr * Bt.grad
        history.append(total)
    params.pretrain_history = history
    return params.freeze()


def _row_normalized_with_self_loops(A: np.ndarray) -> np.ndarray:
    M = A + np.eye(A.shape[0])
    return M / M.sum(axis=1, keepdims=True)


def encode(graph: HetGraph, params: EncoderParams) -> FrozenReps:
    if not params.frozen:
        raise FrozenError("encoder must be frozen before encoding")
    relu = lambda M: np.maximum(M, 0.0)
    Htil = relu(graph.features[graph.target_type] @ params.W_hom)
    Etil = _row_normalized_with_self_loops(graph.hom_adjacency) @ Htil

    mapped = {t: relu(graph.features[t] @ params.W_het[t]) for t in graph.node_types}
    n = graph.n_target
    Hhat_typed, neighbor_mask = {}, {}
    for et in graph.edge_types:
        pairs = graph.edges[et.name]
        if et.src == graph.target_type:
            tgt_ids, nbr_ids, nbr_type = pairs[:, 0], pairs[:, 1], et.dst
        elif et.dst == graph.target_type:
            tgt_ids, nbr_ids, nbr_type = pairs[:, 1], pairs[:, 0], et.src
        else:
            continue  # edge type not incident to the target type
        sums = np.zeros((n, params.d))
        counts = np.zeros(n)
        np.add.at(sums, tgt_ids, mapped[nbr_type][nbr_ids])
        np.add.at(counts, tgt_ids, 1.0)
        mask = counts > 0
        out = np.zeros((n, params.d))
        out[mask] = sums[mask] / counts[mask, None]
        Hhat_typed[et.name] = out
        neighbor_mask[et.name] = mask

    present = np.stack([neighbor_mask[r] for r in Hhat_typed], axis=1)
    stacked = np.stack([Hhat_typed[r] for r in Hhat_typed], axis=1)  # (n, R, d)
    denom = np.maximum(present.sum(axis=1), 1.0)
    Ehat = (stacked * present[:, :, None]).sum(axis=1) / denom[:, None]
    return FrozenReps(Htil=Htil, Etil=Etil, Hhat_typed=Hhat_typed,
                      Ehat=Ehat, neighbor_mask=neighbor_mask)


def save_encoder(params: EncoderParams, path: str) -> None:
    arrays = {"W_hom": params.W_hom}
    arrays.update({f"W_het:{t}": params.W_het[t] for t in sorted(params.W_het)})
    write_params(path, {"kind": "encoder", "d": params.d, "seed": params.seed,
                        "frozen": params.frozen}, arrays)


def load_encoder(path: str) -> EncoderParams:
    header, arrays = read_params(path)
    W_het = {k.split(":", 1)[1]: v for k, v in arrays.items() if k.startswith("W_het:")}
    params = EncoderParams(W_hom=arrays["W_hom"], W_het=W_het,
                           d=int(header["d"]), seed=int(header["seed"]))
    return params.freeze() if header["frozen"] else params

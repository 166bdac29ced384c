"""Dual structure-aware adapters.

Homogeneous side: low-rank feature map plus an adaptive cosine-kNN structure
A (symmetric, nonnegative). Heterogeneous side: low-rank feature map plus a
row-stochastic edge-type weighting S. Both forwards are expressed on the
autodiff tape so the trainer gets exact gradients; the public functions take
and return plain arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params_io import read_params, write_params

COS_EPS = 1e-12

# flat-vector catalog order; keep stable for checkpoints and gradients
PARAM_NAMES = ("W_down", "W_up", "W_theta_down", "W_theta_up",
               "Theta_down", "Theta_up", "W_eps", "W_rho")


@dataclass
class AdapterState:
    W_down: np.ndarray           # (d, t)
    W_up: np.ndarray             # (t, d')
    W_theta_down: np.ndarray     # (d, t)
    W_theta_up: np.ndarray       # (t, d')
    Theta_down: np.ndarray       # (d, t')
    Theta_up: np.ndarray         # (t', d')
    W_eps: np.ndarray            # (d, 1)
    W_rho: np.ndarray            # (2d', c)
    alpha: float
    beta: float

    @property
    def dims(self):
        d, t = self.W_down.shape
        dprime = self.W_up.shape[1]
        tprime = self.Theta_down.shape[1]
        c = self.W_rho.shape[1]
        return d, dprime, t, tprime, c

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def param_count(self) -> int:
        return sum(v.size for v in self.arrays().values())

    def copy(self) -> "AdapterState":
        return AdapterState(**{k: v.copy() for k, v in self.arrays().items()},
                            alpha=self.alpha, beta=self.beta)


def expected_param_count(d: int, dprime: int, t: int, tprime: int, c: int) -> int:
    return 2 * (d * t + t * dprime) + d * tprime + tprime * dprime + d + 2 * dprime * c


def init_adapter_state(d: int, dprime: int, t: int, tprime: int, c: int,
                       alpha: float, beta: float, seed: int,
                       up_scale: float = 0.1) -> AdapterState:
    """Low-rank factors at scale 1/sqrt(d); up-factors shrunk by `up_scale`
    so the adapted residuals start near zero (exact zero would leave them
    stuck behind the ReLU with no gradient)."""
    if not (1 <= t <= min(d, dprime) // 4 and 1 <= tprime <= min(d, dprime) // 4):
        raise ValueError("low ranks must satisfy 1 <= t <= min(d, d')/4")
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    rng = np.random.default_rng(seed)
    s = 1.0 / np.sqrt(d)
    state = AdapterState(
        W_down=rng.normal(0.0, s, (d, t)),
        W_up=rng.normal(0.0, s * up_scale, (t, dprime)),
        W_theta_down=rng.normal(0.0, s, (d, t)),
        W_theta_up=rng.normal(0.0, s, (t, dprime)),
        Theta_down=rng.normal(0.0, s, (d, tprime)),
        Theta_up=rng.normal(0.0, s * up_scale, (tprime, dprime)),
        W_eps=rng.normal(0.0, s, (d, 1)),
        W_rho=rng.normal(0.0, 1.0 / np.sqrt(2 * dprime), (2 * dprime, c)),
        alpha=float(alpha),
        beta=float(beta),
    )
    assert state.param_count() == expected_param_count(d, dprime, t, tprime, c)
    return state


def proj_frozen(E: np.ndarray, dprime: int) -> np.ndarray:
    """Fixed non-trainable bridge between frozen width d and adapter width d'."""
    d = E.shape[1]
    if d == dprime:
        return E
    if d > dprime:
        return E[:, :dprime]
    return np.concatenate([E, np.zeros((E.shape[0], dprime - d))], axis=1)


def knn_mask(sim: np.ndarray, k: int) -> np.ndarray:
    """0/1 mask keeping the k largest off-diagonal entries per row.

    Ties break toward the smaller column index."""
    n = sim.shape[0]
    if k < 1 or n < 2:
        raise ValueError("need k >= 1 and n >= 2")
    mask = np.zeros((n, n))
    cols = np.arange(n)
    for i in range(n):
        order = np.lexsort((cols, -sim[i]))
        order = order[order != i][:k]
        mask[i, order] = 1.0
    return mask


# -- tape-level building blocks ---------------------------------------------

def _low_rank_map(H: Tensor, down: Tensor, up: Tensor) -> Tensor:
    return ad.relu(H @ down @ up)


def _row_norms(M: Tensor) -> Tensor:
    return ad.sqrt((M * M).sum(axis=1, keepdims=True))


def cosine_matrix_t(Proj: Tensor) -> Tensor:
    norms = _row_norms(Proj) + COS_EPS
    return (Proj @ Proj.T) / (norms @ norms.T)


def hom_structure_t(Htil: Tensor, W_theta_down: Tensor, W_theta_up: Tensor,
                    mask: np.ndarray) -> Tensor:
    """A = (ReLU(Atil) + ReLU(Atil)^T) / 2 with Atil masked to kNN entries."""
    Atil = cosine_matrix_t(Htil @ W_theta_down @ W_theta_up) * Tensor(mask)
    R = ad.relu(Atil)
    return (R + R.T) * 0.5


def masked_softmax(logits: np.ndarray, present: np.ndarray) -> np.ndarray:
    """Row softmax over present entries; absent entries exactly 0, empty rows
    stay all-zero."""
    e = np.exp(logits) * present
    denom = e.sum(axis=1, keepdims=True)
    denom = denom + (denom == 0.0)
    return e / denom


def het_structure_t(Hhat: list, W_eps: Tensor, present: np.ndarray) -> list:
    """Per-type score columns of S as tape tensors (one (n,1) tensor each)."""
    exps = [ad.exp(ad.tanh(H @ W_eps)) * Tensor(present[:, [r]])
            for r, H in enumerate(Hhat)]
    denom = exps[0]
    for e in exps[1:]:
        denom = denom + e
    denom = denom + Tensor((present.sum(axis=1, keepdims=True) == 0).astype(float))
    return [e / denom for e in exps]


def forward_t(reps, state_t: dict, mask: np.ndarray, present: np.ndarray,
              alpha: float, beta: float, dprime: int) -> dict:
    """Full adapter forward on the tape.

    `reps` carries frozen arrays; `state_t` maps PARAM_NAMES to tensors;
    `mask` is the frozen kNN selection, `present` the (n, R) neighbor mask.
    Returns tensors A, S (list of columns), F, Ztil, Mhat, Zhat, Z, P.
    """
    Htil = Tensor(reps.Htil)
    etypes = sorted(reps.Hhat_typed)
    Hhat = [Tensor(reps.Hhat_typed[r]) for r in etypes]

    F = _low_rank_map(Htil, state_t["W_down"], state_t["W_up"])
    A = hom_structure_t(Htil, state_t["W_theta_down"], state_t["W_theta_up"], mask)
    Ztil = Tensor(proj_frozen(reps.Etil, dprime)) + alpha * (A @ F)

    S_cols = het_structure_t(Hhat, state_t["W_eps"], present)
    M_typed = [_low_rank_map(H, state_t["Theta_down"], state_t["Theta_up"])
               for H in Hhat]
    Mhat = S_cols[0] * M_typed[0]
    for s, M in zip(S_cols[1:], M_typed[1:]):
        Mhat = Mhat + s * M
    Zhat = Tensor(proj_frozen(reps.Ehat, dprime)) + beta * Mhat

    Z = ad.concat_cols(Ztil, Zhat)
    P = Z @ state_t["W_rho"]
    return {"F": F, "A": A, "Ztil": Ztil, "S_cols": S_cols, "Mhat": Mhat,
            "Zhat": Zhat, "Z": Z, "P": P, "etypes": etypes}


# -- numpy-facing operations -------------------------------------------------

def _tensors(state: AdapterState) -> dict:
    return {k: Tensor(v) for k, v in state.arrays().items()}


def map_hom(Htil: np.ndarray, state: AdapterState) -> np.ndarray:
    return _low_rank_map(Tensor(Htil), Tensor(state.W_down), Tensor(state.W_up)).value


def learn_hom_structure(Htil: np.ndarray, state: AdapterState, k: int) -> np.ndarray:
    proj = Htil @ state.W_theta_down @ state.W_theta_up
    sim = cosine_matrix_t(Tensor(proj)).value
    mask = knn_mask(sim, k)
    return hom_structure_t(Tensor(Htil), Tensor(state.W_theta_down),
                           Tensor(state.W_theta_up), mask).value


def hom_forward(Htil: np.ndarray, Etil: np.ndarray, state: AdapterState, k: int):
    A = learn_hom_structure(Htil, state, k)
    dprime = state.W_up.shape[1]
    Ztil = proj_frozen(Etil, dprime) + state.alpha * (A @ map_hom(Htil, state))
    return Ztil, A


def learn_het_structure(Hhat_typed: dict, neighbor_mask: dict,
                        state: AdapterState) -> np.ndarray:
    etypes = sorted(Hhat_typed)
    present = np.stack([neighbor_mask[r] for r in etypes], axis=1).astype(float)
    logits = np.concatenate(
        [np.tanh(Hhat_typed[r] @ state.W_eps) for r in etypes], axis=1)
    return masked_softmax(logits, present)


def het_forward(Hhat_typed: dict, Ehat: np.ndarray, neighbor_mask: dict,
                state: AdapterState):
    etypes = sorted(Hhat_typed)
    S = learn_het_structure(Hhat_typed, neighbor_mask, state)
    M_typed = [map_hom_with(Hhat_typed[r], state.Theta_down, state.Theta_up)
               for r in etypes]
    Mhat = sum(S[:, [r]] * M for r, M in enumerate(M_typed))
    dprime = state.Theta_up.shape[1]
    Zhat = proj_frozen(Ehat, dprime) + state.beta * Mhat
    return Zhat, Mhat, S


def map_hom_with(H: np.ndarray, down: np.ndarray, up: np.ndarray) -> np.ndarray:
    return np.maximum(H @ down @ up, 0.0)


def fuse_and_predict(Ztil: np.ndarray, Zhat: np.ndarray, state: AdapterState):
    Z = np.concatenate([Ztil, Zhat], axis=1)
    return Z, Z @ state.W_rho


def save_adapter(state: AdapterState, path: str) -> None:
    write_params(path, {"kind": "adapter", "alpha": state.alpha, "beta": state.beta},
                 state.arrays())


def load_adapter(path: str) -> AdapterState:
    header, arrays = read_params(path)
    return AdapterState(**arrays, alpha=float(header["alpha"]),
                        beta=float(header["beta"]))


def export_structure_csv(M: np.ndarray, path: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("i,j,weight\n")
        for i, j in zip(*np.nonzero(M)):
            fh.write(f"{i},{j},{float(M[i, j])!r}\n")

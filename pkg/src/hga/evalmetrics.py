"""Downstream metrics, diagnostics, and the ablation harness."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from .encoder import FrozenReps
from .hetgraph import HetGraph, homophily_ratio
from .objective import EPS, class_prototype_selector


@dataclass(frozen=True)
class MetricsReport:
    macro_f1: float
    micro_f1: float
    nmi: float
    ari: float
    train_error: float
    test_error: float
    generalization_gap: float
    final_homophily: float
    config_fingerprint: str
    seed: int

    def as_dict(self) -> dict:
        return asdict(self)


def classify(P: np.ndarray, C_pred: np.ndarray, tau: float):
    """Prototype-similarity rule: softmax over cosine(p_i, prototype)/tau.

    Ties resolve to the smallest class index."""
    pn = P / (np.linalg.norm(P, axis=1, keepdims=True) + EPS)
    cn = C_pred / (np.linalg.norm(C_pred, axis=1, keepdims=True) + EPS)
    scores = (pn @ cn.T) / tau
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    probs = e / e.sum(axis=1, keepdims=True)
    return np.argmax(probs, axis=1), probs


def f1_scores(pred: np.ndarray, truth: np.ndarray, c: int):
    """(macro, micro) F1; classes with no support and no predictions score 0."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("length mismatch")
    per_class = []
    tp_total = fp_total = fn_total = 0
    for y in range(c):
        tp = int(np.sum((pred == y) & (truth == y)))
        fp = int(np.sum((pred == y) & (truth != y)))
        fn = int(np.sum((pred != y) & (truth == y)))
        denom = 2 * tp + fp + fn
        per_class.append(2 * tp / denom if denom else 0.0)
        tp_total += tp
        fp_total += fp
        fn_total += fn
    micro_denom = 2 * tp_total + fp_total + fn_total
    micro = 2 * tp_total / micro_denom if micro_denom else 0.0
    return float(np.mean(per_class)), float(micro)


def cluster_metrics(probabilities: np.ndarray, truth: np.ndarray, c: int,
                    seed: int):
    """K-means (k = c, 10 restarts, 300 iterations) on class probabilities,
    scored by NMI (arithmetic normalization) and adjusted Rand index."""
    X = np.asarray(probabilities, dtype=np.float64)
    if np.allclose(X, X[0]):
        return 0.0, 0.0  # degenerate: a single cluster carries no information
    km = KMeans(n_clusters=c, n_init=10, max_iter=300, random_state=seed)
    assign = km.fit_predict(X)
    nmi = normalized_mutual_info_score(truth, assign, average_method="arithmetic")
    ari = adjusted_rand_score(truth, assign)
    return float(nmi), float(ari)


def error_rates(pred_train, pred_test, truth_train, truth_test):
    if len(pred_train) == 0 or len(pred_test) == 0:
        raise ValueError("empty split")
    train_err = float(np.mean(np.asarray(pred_train) != np.asarray(truth_train)))
    test_err = float(np.mean(np.asarray(pred_test) != np.asarray(truth_test)))
    return train_err, test_err, test_err - train_err


def evaluate(graph: HetGraph, reps: FrozenReps, state, cfg,
             fingerprint: str = "") -> MetricsReport:
    """Full downstream evaluation of a tuned (or untuned) adapter state."""
    from .adapters import fuse_and_predict, het_forward, hom_forward

    Ztil, A = hom_forward(reps.Htil, reps.Etil, state, k=cfg.k)
    Zhat, _, _ = het_forward(reps.Hhat_typed, reps.Ehat, reps.neighbor_mask, state)
    _, P = fuse_and_predict(Ztil, Zhat, state)
    sel = class_prototype_selector(graph.labels, graph.train_idx, graph.num_classes)
    pred, probs = classify(P, sel @ P, cfg.weights.tau)
    train_err, test_err, gap = error_rates(
        pred[graph.train_idx], pred[graph.test_idx],
        graph.labels[graph.train_idx], graph.labels[graph.test_idx])
    macro, micro = f1_scores(pred[graph.test_idx], graph.labels[graph.test_idx],
                             graph.num_classes)
    nmi, ari = cluster_metrics(probs[graph.test_idx],
                               graph.labels[graph.test_idx],
                               graph.num_classes, cfg.seed)
    hom = homophily_ratio(A, graph.labels) if A.sum() > 0 else 0.0
    return MetricsReport(macro_f1=macro, micro_f1=micro, nmi=nmi, ari=ari,
                         train_error=train_err, test_error=test_err,
                         generalization_gap=test_err - train_err,
                         final_homophily=hom,
                         config_fingerprint=fingerprint, seed=cfg.seed)


KNOWN_TOGGLES = {
    "full", "drop_Lcon", "drop_Lrec", "drop_Lmar",
    "drop_hom_adapter", "drop_het_adapter", "drop_both_adapters",
    "no_label_extension", "infonce_margin_variant",
}


def apply_variant(cfg, toggles, overrides: dict | None = None):
    """Translate ablation toggles into a TuneConfig for one grid cell."""
    from dataclasses import replace as _rep


    w = cfg.weights
    for tog in toggles:
        if tog not in KNOWN_TOGGLES:
            raise ValueError(f"unknown toggle {tog!r}")
        if tog == "drop_Lcon":
            cfg = _rep(cfg, include_con=False)
        elif tog == "drop_Lrec":
            w = _rep(w, eta=0.0)
        elif tog == "drop_Lmar":
            w = _rep(w, mu=0.0)
        elif tog == "drop_hom_adapter":
            cfg = _rep(cfg, alpha=0.0)
        elif tog == "drop_het_adapter":
            cfg = _rep(cfg, beta=0.0)
        elif tog == "drop_both_adapters":
            cfg = _rep(cfg, alpha=0.0, beta=0.0)
        elif tog == "no_label_extension":
            w = _rep(w, lam=0.0, eta=0.0, mu=0.0)
        elif tog == "infonce_margin_variant":
            cfg = _rep(cfg, margin_variant="infonce")
    cfg = _rep(cfg, weights=w)
    if overrides:
        weight_fields = {"lam", "tau", "gamma", "eta", "mu"}
        wover = {k: v for k, v in overrides.items() if k in weight_fields}
        cover = {k: v for k, v in overrides.items() if k not in weight_fields}
        if wover:
            cfg = _rep(cfg, weights=_rep(cfg.weights, **wover))
        if cover:
            cfg = _rep(cfg, **cover)
    return cfg


def ablate(graph: HetGraph, reps: FrozenReps, base_cfg, grid,
           fingerprint: str = ""):
    """One tune+eval per grid cell under identical seeds.

    Grid cells are dicts: {"name": str, "toggles": [..], "overrides": {..}}.
    Returns a list of (name, MetricsReport)."""
    from .trainer import tune

    rows = []
    for cell in grid:
        cfg = apply_variant(base_cfg, cell.get("toggles", ()),
                            cell.get("overrides"))
        state, _ = tune(graph, reps, cfg)
        report = evaluate(graph, reps, state, cfg, fingerprint=fingerprint)
        rows.append((cell["name"], report))
    return rows


ABLATION_FIELDS = ("variant", "macro_f1", "micro_f1", "nmi", "ari",
                   "train_err", "test_err", "gap", "homophily", "seed")


def write_ablation_csv(rows, path: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(ABLATION_FIELDS) + "\n")
        for name, r in rows:
            fh.write(",".join([name, repr(r.macro_f1), repr(r.micro_f1),
                               repr(r.nmi), repr(r.ari), repr(r.train_error),
                               repr(r.test_error), repr(r.generalization_gap),
                               repr(r.final_homophily), str(r.seed)]) + "\n")

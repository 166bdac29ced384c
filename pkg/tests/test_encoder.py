"""Frozen surrogate encoder: determinism, freezing, message passing."""
import dataclasses

import numpy as np
import pytest

from hga.encoder import (FrozenError, encode, init_encoder, load_encoder,
                         pretrain, save_encoder)

from conftest import TINY_SPEC
from hga.hetgraph import generate_synthetic


def test_init_deterministic(tiny_graph):
    p1 = init_encoder(tiny_graph, 8, 3)
    p2 = init_encoder(tiny_graph, 8, 3)
    np.testing.assert_array_equal(p1.W_hom, p2.W_hom)
    for t in p1.W_het:
        np.testing.assert_array_equal(p1.W_het[t], p2.W_het[t])
    p3 = init_encoder(tiny_graph, 8, 4)
    assert not np.array_equal(p1.W_hom, p3.W_hom)


def test_init_rejects_bad_dim(tiny_graph):
    with pytest.raises(ValueError):
        init_encoder(tiny_graph, 0, 0)


def test_pretrain_zero_epochs_freezes_identity(tiny_graph):
    init = init_encoder(tiny_graph, 8, 0)
    ref = init.W_hom.copy()
    frozen = pretrain(tiny_graph, init, 0, 0)
    assert frozen.frozen
    np.testing.assert_array_equal(frozen.W_hom, ref)
    with pytest.raises(ValueError):
        frozen.W_hom[0, 0] = 1.0  # non-writeable once frozen


def test_pretrain_twice_rejected(tiny_graph):
    params = pretrain(tiny_graph, init_encoder(tiny_graph, 8, 0), 0, 0)
    with pytest.raises(FrozenError, match="already frozen"):
        pretrain(tiny_graph, params, 0, 0)


def test_pretrain_reduces_reconstruction_objective(tiny_graph):
    params = pretrain(tiny_graph, init_encoder(tiny_graph, 8, 0), 20, 0)
    hist = params.pretrain_history
    assert len(hist) == 20
    assert hist[-1] < hist[0]


def test_encode_requires_frozen(tiny_graph):
    with pytest.raises(FrozenError):
        encode(tiny_graph, init_encoder(tiny_graph, 8, 0))


def test_encode_no_hom_edges_keeps_htil(tiny_graph):
    g = dataclasses.replace(tiny_graph,
                            hom_adjacency=np.zeros_like(tiny_graph.hom_adjacency))
    reps = encode(g, pretrain(g, init_encoder(g, 8, 0), 0, 0))
    np.testing.assert_array_equal(reps.Etil, reps.Htil)


def test_encode_mean_aggregation_matches_direct_formula(tiny_graph, tiny_reps):
    A = tiny_graph.hom_adjacency
    M = A + np.eye(A.shape[0])
    expected = (M / M.sum(axis=1, keepdims=True)) @ tiny_reps.Htil
    np.testing.assert_allclose(tiny_reps.Etil, expected, rtol=1e-12)


def test_single_neighbor_copies_mapped_rep():
    spec = dataclasses.replace(TINY_SPEC, seed=5)
    g = generate_synthetic(spec)
    params = pretrain(g, init_encoder(g, 8, 5), 0, 5)
    reps = encode(g, params)
    mapped = np.maximum(g.features["aux0"] @ params.W_het["aux0"], 0.0)
    pairs = g.edges["target-aux0"]
    counts = np.bincount(pairs[:, 0], minlength=g.n_target)
    singles = np.nonzero(counts == 1)[0]
    for i in singles[:3]:
        j = pairs[pairs[:, 0] == i, 1][0]
        np.testing.assert_allclose(reps.Hhat_typed["target-aux0"][i], mapped[j],
                                   rtol=1e-12)


def test_neighbor_mask_matches_zero_rows(tiny_reps):
    for r, mask in tiny_reps.neighbor_mask.items():
        rows = tiny_reps.Hhat_typed[r]
        zero = np.all(rows == 0.0, axis=1)
        assert np.all(zero[~mask])


def test_identical_features_identical_etil():
    spec = dataclasses.replace(TINY_SPEC, seed=2)
    g = generate_synthetic(spec)
    X = g.features["target"].copy()
    X[1] = X[0]
    A = np.zeros_like(g.hom_adjacency)
    A[0, 1] = A[1, 0] = 1.0
    g = dataclasses.replace(g, features={**g.features, "target": X},
                            hom_adjacency=A)
    reps = encode(g, pretrain(g, init_encoder(g, 8, 2), 0, 2))
    np.testing.assert_allclose(reps.Etil[0], reps.Etil[1], rtol=1e-12)


def test_save_load_roundtrip(tmp_path, tiny_graph):
    params = pretrain(tiny_graph, init_encoder(tiny_graph, 8, 0), 0, 0)
    path = str(tmp_path / "encoder.bin")
    save_encoder(params, path)
    loaded = load_encoder(path)
    assert loaded.frozen and loaded.d == params.d
    np.testing.assert_array_equal(loaded.W_hom, params.W_hom)
    for t in params.W_het:
        np.testing.assert_array_equal(loaded.W_het[t], params.W_het[t])
    assert loaded.byte_fingerprint() == params.byte_fingerprint()

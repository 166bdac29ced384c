"""Loss terms against hand-computed and brute-force oracles."""
import numpy as np
import pytest

from hga.autodiff import Tensor
from hga.objective import (EPS, UNDECIDED, LossWeights, build_label_matrix,
                           class_prototype_selector, class_prototypes_pred,
                           contrastive_loss, infonce_loss_t, margin_loss,
                           normalize_feature_rows, propagate_labels,
                           reconstruction_loss, sample_margin_pairs,
                           total_objective)


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(lam=-0.1)
    with pytest.raises(ValueError):
        LossWeights(tau=0.0)


# -- label propagation -------------------------------------------------------

def test_propagation_row_example():
    A = np.array([[0.0, 0.3, 0.6], [0.3, 0.0, 0.0], [0.6, 0.0, 0.0]])
    labels = np.array([-1, 0, 1])
    Y = build_label_matrix(labels, np.array([1, 2]), 2)
    prop = propagate_labels(A, Y, labels)
    np.testing.assert_allclose(prop.Ytil[0], [0.3, 0.6])
    assert prop.hard[0] == 1


def test_propagation_override_and_undecided():
    A = np.zeros((3, 3))
    A[0, 1] = 1.0
    labels = np.array([-1, 1, 0])
    Y = build_label_matrix(labels, np.array([1, 2]), 2)
    prop = propagate_labels(A, Y, labels)
    assert prop.hard[0] == 1          # single labeled neighbor
    assert prop.hard[1] == 1          # override keeps the original label
    assert prop.hard[2] == 0          # isolated but originally labeled
    A2 = np.zeros((3, 3))
    prop2 = propagate_labels(A2, Y, np.array([-1, -1, -1]))
    assert np.all(prop2.hard == UNDECIDED)  # zero mass rows


def test_propagation_tie_is_undecided():
    A = np.array([[0.0, 0.5, 0.5], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    labels = np.array([-1, 0, 1])
    prop = propagate_labels(A, build_label_matrix(labels, np.array([1, 2]), 2),
                            labels)
    assert prop.hard[0] == UNDECIDED


# -- prototypes --------------------------------------------------------------

def test_prototypes_mean_and_errors():
    P = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    labels = np.array([0, 0, 1])
    C = class_prototypes_pred(P, labels, np.array([0, 1, 2]), 2)
    np.testing.assert_allclose(C[0], [0.5, 0.5])
    np.testing.assert_allclose(C[1], [2.0, 2.0])
    with pytest.raises(ValueError, match="without labeled support"):
        class_prototype_selector(labels, np.array([0, 1]), 2)
    np.testing.assert_array_equal(class_prototypes_pred(np.zeros((3, 2)), labels,
                                                        np.array([0, 2]), 2), 0.0)


# -- contrastive loss --------------------------------------------------------

def test_contrastive_two_class_oracle():
    # one labeled node with cosine 1 to its prototype and 0 to the other
    P = np.array([[1.0, 0.0]])
    C = np.array([[1.0, 0.0], [0.0, 1.0]])
    hard = np.array([0])
    loss = contrastive_loss(P, C, hard, np.array([0]), LossWeights(tau=1.0))
    assert loss == pytest.approx(-1.0, abs=1e-10)


def test_contrastive_lambda_zero_ignores_unlabeled():
    rng = np.random.default_rng(0)
    P = rng.normal(size=(6, 3))
    C = rng.normal(size=(3, 3))
    hard = np.array([0, 1, 2, 0, 1, UNDECIDED])
    train = np.array([0, 1, 2])
    base = contrastive_loss(P, C, hard, train, LossWeights(lam=0.0))
    labeled_only = contrastive_loss(P[:3], C, hard[:3], np.array([0, 1, 2]),
                                    LossWeights(lam=0.0))
    assert base == pytest.approx(labeled_only, abs=1e-12)


def test_contrastive_equal_sims_temperature_free():
    P = np.array([[1.0, 1.0, 0.0]])
    C = np.tile(P, (3, 1))  # identical prototypes: every similarity equal
    hard = np.array([1])
    l1 = contrastive_loss(P, C, hard, np.array([0]), LossWeights(tau=0.5))
    l2 = contrastive_loss(P, C, hard, np.array([0]), LossWeights(tau=1.0))
    assert l1 == pytest.approx(l2, abs=1e-12)
    assert l1 == pytest.approx(np.log(2.0), abs=1e-9)


def test_contrastive_single_class_rejected():
    with pytest.raises(ValueError, match=">= 2 classes"):
        contrastive_loss(np.ones((1, 2)), np.ones((1, 2)), np.array([0]),
                         np.array([0]), LossWeights())


def brute_contrastive(P, C, hard, train, w):
    def cos(a, b):
        return float(a @ b / ((np.linalg.norm(a) + EPS) * (np.linalg.norm(b) + EPS)))

    def term(i):
        sims = [cos(P[i], C[y]) for y in range(C.shape[0])]
        num = np.exp(sims[hard[i]] / w.tau)
        den = sum(np.exp(s / w.tau) for y, s in enumerate(sims) if y != hard[i])
        return -np.log(num / den)

    in_train = set(train.tolist())
    total = sum(term(i) for i in train)
    total += w.lam * sum(term(i) for i in range(P.shape[0])
                         if i not in in_train and hard[i] != UNDECIDED)
    return total


def test_contrastive_matches_bruteforce():
    rng = np.random.default_rng(4)
    P = rng.normal(size=(10, 4))
    C = rng.normal(size=(3, 4))
    hard = rng.integers(0, 3, size=10)
    hard[7] = UNDECIDED
    train = np.array([0, 2, 5])
    w = LossWeights(lam=0.7, tau=0.3)
    got = contrastive_loss(P, C, hard, train, w)
    assert got == pytest.approx(brute_contrastive(P, C, hard, train, w), abs=1e-10)


# -- reconstruction loss -----------------------------------------------------

def test_reconstruction_self_loops_reach_entropy_floor():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(4, 5))
    Xbar = normalize_feature_rows(X)
    expected = -np.sum(Xbar * np.log(Xbar + EPS))
    got = reconstruction_loss(np.zeros((4, 4)), X, np.arange(4))
    assert got == pytest.approx(expected, abs=1e-8)


def test_reconstruction_one_hot_mixture_oracle():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    got = reconstruction_loss(A, X, np.arange(2))
    # both rows mix to (0.5, 0.5); each contributes about -ln(0.5)
    assert got == pytest.approx(-2.0 * np.log(0.5 + EPS), abs=1e-9)


def test_reconstruction_identical_rows_equal_self_loop_case():
    X = np.tile(np.array([[0.2, 0.5, 0.3]]), (2, 1))
    connected = reconstruction_loss(np.array([[0.0, 1.0], [1.0, 0.0]]), X,
                                    np.arange(2))
    isolated = reconstruction_loss(np.zeros((2, 2)), X, np.arange(2))
    assert connected == pytest.approx(isolated, abs=1e-10)


def test_reconstruction_adversarial_mixing_costs_more():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    self_only = reconstruction_loss(np.zeros((2, 2)), X, np.arange(2))
    mixed = reconstruction_loss(np.array([[0.0, 1.0], [1.0, 0.0]]), X,
                                np.arange(2))
    assert self_only < mixed


def test_reconstruction_empty_sample_rejected():
    with pytest.raises(ValueError, match="nonempty"):
        reconstruction_loss(np.zeros((2, 2)), np.ones((2, 2)),
                            np.array([], dtype=np.intp))


# -- margin loss -------------------------------------------------------------

def test_margin_hinge_hand_cases():
    C = np.array([[0.0, 0.0]])
    pairs = (np.array([0]), np.array([1]), np.array([0]))
    # d(c, m_i)^2 = 1, d(c, m_j)^2 = 4, gamma = 2 -> max(0, 1-4+2) = 0
    M = np.array([[1.0, 0.0], [2.0, 0.0]])
    assert margin_loss(C, M, pairs, gamma=2.0) == 0.0
    # reversed distances -> max(0, 4-1+2) = 5
    M2 = np.array([[2.0, 0.0], [1.0, 0.0]])
    assert margin_loss(C, M2, pairs, gamma=2.0) == pytest.approx(5.0, abs=1e-10)


def test_margin_zero_when_on_prototype():
    C = np.array([[1.0, 1.0], [3.0, 3.0]])
    M = np.array([[1.0, 1.0], [3.0, 3.0]])
    pairs = (np.array([0, 1]), np.array([1, 0]), np.array([0, 1]))
    assert margin_loss(C, M, pairs, gamma=0.0) == 0.0


def test_margin_nonnegative_random():
    rng = np.random.default_rng(2)
    C = rng.normal(size=(3, 4))
    M = rng.normal(size=(8, 4))
    hard = rng.integers(0, 3, size=8)
    pairs = sample_margin_pairs(hard, 3, rng)
    assert margin_loss(C, M, pairs, gamma=1.0) >= 0.0


def test_pair_sampling_structure():
    hard = np.array([0, 0, 1, 2, UNDECIDED])
    rng = np.random.default_rng(0)
    i_idx, j_idx, y_idx = sample_margin_pairs(hard, 3, rng)
    # each decided node gets one partner per other class
    assert i_idx.size == 4 * 2
    assert np.all(hard[i_idx] == y_idx)
    assert np.all(hard[i_idx] != hard[j_idx])
    assert UNDECIDED not in hard[j_idx]
    # deterministic under the same stream
    again = sample_margin_pairs(hard, 3, np.random.default_rng(0))
    np.testing.assert_array_equal(i_idx, again[0])
    np.testing.assert_array_equal(j_idx, again[1])


def test_single_decided_class_warns_and_zeroes():
    hard = np.array([0, 0, UNDECIDED])
    with pytest.warns(UserWarning, match="two decided classes"):
        pairs = sample_margin_pairs(hard, 2, np.random.default_rng(0))
    assert margin_loss(np.zeros((2, 2)), np.zeros((3, 2)), pairs, 1.0) == 0.0


def test_infonce_empty_decided_is_zero():
    out = infonce_loss_t(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 3))),
                         np.full(4, UNDECIDED), tau=0.5)
    assert float(out.value) == 0.0


# -- combination -------------------------------------------------------------

def test_total_objective_arithmetic():
    w = LossWeights(eta=0.5, mu=2.0)
    assert total_objective(1.0, 2.0, 3.0, w) == pytest.approx(8.0, abs=1e-12)
    assert total_objective(4.0, 9.0, 9.0, LossWeights(eta=0.0, mu=0.0)) == 4.0
    assert total_objective(0.0, 0.0, 0.0, w) == 0.0

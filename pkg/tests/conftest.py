"""Shared fixtures: a small deterministic graph plus frozen representations."""
import pytest

from hga.encoder import encode, init_encoder, pretrain
from hga.hetgraph import SyntheticSpec, generate_synthetic
from hga.objective import LossWeights
from hga.trainer import TuneConfig

TINY_SPEC = SyntheticSpec(n_target=12, n_classes=2, feature_dim=8,
                          class_separation=2.0, n_aux=6, n_aux_types=2,
                          aux_feature_dim=4, p_in=0.6, p_out=0.1,
                          train_per_class=3, seed=0)

TINY_CFG = TuneConfig(dprime=8, t=2, tprime=2, k=3, alpha=0.5, beta=1.0,
                      weights=LossWeights(), lr=0.05, epochs=30, seed=0)


def build_reps(graph, d, seed=0, pretrain_epochs=0):
    params = init_encoder(graph, d, seed)
    params = pretrain(graph, params, pretrain_epochs, seed)
    return params, encode(graph, params)


@pytest.fixture(scope="session")
def tiny_graph():
    return generate_synthetic(TINY_SPEC)


@pytest.fixture(scope="session")
def tiny_reps(tiny_graph):
    return build_reps(tiny_graph, d=8)[1]


@pytest.fixture(scope="session")
def small_graph():
    spec = SyntheticSpec(n_target=90, n_classes=3, feature_dim=16,
                         class_separation=3.0, n_aux=30, n_aux_types=2,
                         aux_feature_dim=8, p_in=0.2, p_out=0.02,
                         train_per_class=8, seed=1)
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def small_reps(small_graph):
    return build_reps(small_graph, d=16, seed=1)[1]


@pytest.fixture(scope="session")
def small_cfg():
    return TuneConfig(dprime=16, t=4, tprime=4, k=5, alpha=0.5, beta=1.0,
                      weights=LossWeights(), lr=0.05, epochs=40, seed=1)

"""Shared fixtures: one miniature synthetic dataset, prepared and
pretrained once per session, reused by the integration-level tests."""

import pytest

from fairadapt.backbone import PretrainConfig, pretrain
from fairadapt.data import load_interactions, prepare_bundle
from fairadapt.synth import generate_interactions, write_tsv


@pytest.fixture(scope="session")
def mini_tsv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "mini.tsv"
    pairs, item_provider = generate_interactions(
        num_users=40, num_items=60, num_providers=6, seed=3,
        min_per_user=12, max_per_user=18)
    write_tsv(path, pairs, item_provider)
    return path


@pytest.fixture(scope="session")
def mini_bundle(mini_tsv):
    return prepare_bundle(load_interactions(mini_tsv), k_core=3, seed=3)


@pytest.fixture(scope="session")
def mini_pretrain(mini_bundle):
    return pretrain(mini_bundle, PretrainConfig(epochs=10, dim=8, seed=3))


@pytest.fixture(scope="session")
def mini_table(mini_pretrain):
    return mini_pretrain.table

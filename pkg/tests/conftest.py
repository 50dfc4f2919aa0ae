"""Session fixtures: the pinned synthetic dataset and its trained stages."""

import pytest

from gzseg.data import generate_synthetic
from gzseg.evaluation import fit_stages

from helpers import FIXTURE_PARAMS, make_fixture_config, make_tiny_dataset


@pytest.fixture
def tiny_ds():
    return make_tiny_dataset()


@pytest.fixture(scope="session")
def synth_ds():
    return generate_synthetic(**FIXTURE_PARAMS)


@pytest.fixture(scope="session")
def fixture_cfg():
    return make_fixture_config()


@pytest.fixture(scope="session")
def fixture_stages(synth_ds, fixture_cfg):
    return fit_stages(synth_ds, fixture_cfg)

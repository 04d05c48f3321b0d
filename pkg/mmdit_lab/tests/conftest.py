from __future__ import annotations

import pytest

from mmdit_lab.mmdit.config import ModelConfig
from mmdit_lab.mmdit.model import MMDiT

from .factories import make_config


@pytest.fixture(scope="session")
def config() -> ModelConfig:
    return make_config()


@pytest.fixture(scope="session")
def model(config) -> MMDiT:
    return MMDiT(config)

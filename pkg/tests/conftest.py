"""Shared fixtures: beam models and harmonic-balance backbone references
built from the shipped experiment configurations."""

from pathlib import Path

import pytest

from basemodal.cli import load_config
from basemodal.experiments import _hbm_problem, build_model_from_config
from basemodal.hbm import continue_backbone

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def shipped_config(name):
    return load_config(CONFIG_DIR / f"{name}.yaml")


@pytest.fixture(scope="session")
def friction_model():
    return build_model_from_config(shipped_config("friction-backbone-epmc")["beam"])


@pytest.fixture(scope="session")
def geometric_model():
    return build_model_from_config(shipped_config("geometric-backbone-epmc")["beam"])


@pytest.fixture(scope="session")
def friction_backbone(friction_model):
    cfg = shipped_config("friction-backbone-epmc")
    bb = continue_backbone(_hbm_problem(cfg, friction_model))
    assert not bb.stalled
    return bb


@pytest.fixture(scope="session")
def geometric_backbone(geometric_model):
    cfg = shipped_config("geometric-backbone-epmc")
    bb = continue_backbone(_hbm_problem(cfg, geometric_model))
    assert not bb.stalled
    return bb

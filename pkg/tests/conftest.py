from pathlib import Path

import numpy as np
import pytest

from exokit import hand_model, thumb_coupling
from exokit.geometry import Pose

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def chain() -> hand_model.KinematicChain:
    return hand_model.parse_chain((FIXTURES / "passive_thumb.chain").read_text())


@pytest.fixture(scope="session")
def coupling() -> hand_model.CouplingFunction:
    return hand_model.CouplingFunction.identity()


@pytest.fixture(scope="session")
def geom() -> thumb_coupling.CouplingGeometry:
    return thumb_coupling.parse_geometry(
        (FIXTURES / "thumb_coupling.geom").read_text())


@pytest.fixture(scope="session")
def q_nominal() -> hand_model.PassiveThumbConfig:
    return hand_model.PassiveThumbConfig(0.3, 0.15)


@pytest.fixture(scope="session")
def feasible_pose(chain, coupling, geom, q_nominal) -> Pose:
    guess = Pose.from_parts([1.0, 0.0, 0.0, 0.0], [0.09, -0.01, 0.035])
    return thumb_coupling.project_to_manifold(guess, q_nominal, geom, chain,
                                              coupling, tol=1e-12)


def random_pose(rng: np.random.Generator, scale: float = 0.1) -> Pose:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return Pose(q, scale * rng.standard_normal(3))

"""Experiment presets and seeded random instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..approx import FeatureMap
from ..mrp import MarkovRewardProcess, StationaryDist, random_mrp, stationary_distribution
from ..network import CommNetwork, random_connected
from .config import RunConfig

# Five-state chain of the 20-agent star example, four decimals as printed.
EXAMPLE2_PRINTED = np.array(
    [
        [0.2362, 0.0895, 0.3536, 0.1099, 0.2107],
        [0.1821, 0.2719, 0.1553, 0.1217, 0.2689],
        [0.1999, 0.0279, 0.2870, 0.1628, 0.3224],
        [0.1149, 0.1723, 0.2726, 0.3747, 0.0656],
        [0.2921, 0.1719, 0.0907, 0.1836, 0.2618],
    ]
)

EXAMPLE1_BOUNDS = [30.0, 40.0, 50.0, 60.0, 70.0]


def example2_transition_matrix() -> tuple[np.ndarray, np.ndarray]:
    """Printed matrix with each row divided by its sum, and the per-row deltas ``sum - 1``."""
    sums = EXAMPLE2_PRINTED.sum(axis=1)
    return EXAMPLE2_PRINTED / sums[:, None], sums - 1.0


def preset_example2() -> RunConfig:
    """20 agents on a star, five states, rewards r_i = i, three RBFs."""
    return RunConfig(
        preset="example2",
        instance={"source": "example2", "n_agents": 20},
        gamma=0.5,
        graph="star:20",
        features={"kind": "rbf", "q": 3, "width": None, "values": "state"},
        schedule={"kind": "harmonic", "a": 2.0, "b": 1000.0},
        projection=False,
        iterations=50_000,
        seed=0,
        mode="shared_iid",
        cadence=100,
    )


def preset_example1() -> RunConfig:
    """Five trading agents on a 100-price chain, eleven RBFs over prices."""
    return RunConfig(
        preset="example1",
        instance={"source": "example1", "n_states": 100, "bounds": list(EXAMPLE1_BOUNDS), "lower": 10.0, "seed": 7},
        gamma=0.5,
        graph="example1",
        features={"kind": "rbf", "q": 11, "width": None, "values": "state"},
        schedule={"kind": "harmonic", "a": 10.0, "b": 1000.0},
        projection=False,
        iterations=50_000,
        seed=0,
        mode="shared_trajectory",
        cadence=100,
    )


PRESETS = {"example1": preset_example1, "example2": preset_example2}


def get_preset(name: str) -> RunConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        from ..errors import ConfigError

        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class RandomInstance:
    mrp: MarkovRewardProcess
    dist: StationaryDist
    features: FeatureMap
    net: CommNetwork

    @property
    def Phi(self) -> np.ndarray:
        return self.features.Phi

    @property
    def D(self) -> np.ndarray:
        return self.dist.D


def random_instance(
    seed: int,
    n_states: tuple[int, int] = (5, 20),
    q: tuple[int, int] = (3, 5),
    n_agents: tuple[int, int] = (2, 5),
) -> RandomInstance:
    """Seeded instance with sizes drawn uniformly from the inclusive ranges.

    Dirichlet transition rows, standard-normal rewards and features,
    discount in [0.05, 0.95], and a random connected graph.
    """
    rng = np.random.default_rng(seed)
    S = int(rng.integers(n_states[0], n_states[1] + 1))
    nq = int(rng.integers(q[0], q[1] + 1))
    N = int(rng.integers(n_agents[0], n_agents[1] + 1))
    gamma = float(0.05 + 0.9 * rng.random())
    mrp = random_mrp(S, N, "gaussian", gamma, rng)
    features = FeatureMap(rng.normal(size=(S, nq)))
    net = random_connected(N, rng)
    return RandomInstance(mrp, stationary_distribution(mrp.P), features, net)

"""Run configuration: JSON document <-> validated dataclass -> resolved problem."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..approx import FeatureMap, RbfSpec, rbf_features
from ..errors import ConfigError, DgtdError
from ..learn import EarlyStop, SamplingMode, StepSchedule
from ..mrp import MarkovRewardProcess, StationaryDist, random_mrp, stationary_distribution, trading_rewards
from ..network import CommNetwork, parse_graph
from ..textio import read_matrix

log = logging.getLogger(__name__)

INSTANCE_SOURCES = ("example1", "example2", "random", "files")


@dataclass
class RunConfig:
    preset: str | None = None
    instance: dict = field(default_factory=lambda: {"source": "random", "n_states": 10, "n_agents": 4, "reward": "gaussian", "seed": 0})
    gamma: float = 0.5
    graph: str = "path:4"
    features: dict = field(default_factory=lambda: {"kind": "rbf", "q": 3, "width": None, "values": "state"})
    schedule: dict = field(default_factory=lambda: {"kind": "harmonic", "a": 1.0, "b": 100.0})
    allow_constant_step: bool = False
    projection: bool = False
    box_radius: float | None = None  # None: 10 x largest stationary coordinate
    iterations: int = 10_000
    seed: int = 0
    mode: str = SamplingMode.SHARED_IID.value
    cadence: int = 100
    init: str = "zero"
    init_scale: float = 1.0
    early_stop: dict | None = None
    chunk: int = 4096
    output: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if "config" in data and isinstance(data["config"], dict):  # a run summary
            data = data["config"]
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        cfg = cls.from_dict(data)
        cfg._resolve_paths(Path(path).resolve().parent)
        return cfg

    def _resolve_paths(self, base: Path) -> None:
        """Make relative instance, feature and graph file paths relative to ``base``."""

        def fix(p):
            return p if Path(p).is_absolute() or not (base / p).exists() else str(base / p)

        for key in ("transition", "rewards"):
            if key in self.instance:
                self.instance[key] = fix(self.instance[key])
        if self.features.get("kind") == "file":
            self.features["path"] = fix(self.features["path"])
        if ":" not in self.graph and self.graph != "example1":
            self.graph = fix(self.graph)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def step_schedule(self) -> StepSchedule:
        try:
            return StepSchedule(**self.schedule)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid schedule {self.schedule}: {exc}") from exc

    def validate(self) -> None:
        source = self.instance.get("source")
        if source not in INSTANCE_SOURCES:
            raise ConfigError(f"instance source must be one of {INSTANCE_SOURCES}, got {source!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.iterations < 0:
            raise ConfigError("iterations must be non-negative")
        if self.cadence < 1:
            raise ConfigError("cadence must be a positive integer")
        if self.chunk < 1:
            raise ConfigError("chunk must be a positive integer")
        try:
            SamplingMode(self.mode)
        except ValueError as exc:
            raise ConfigError(f"unknown sampling mode {self.mode!r}") from exc
        sched = self.step_schedule()
        if not sched.within_theory and not self.allow_constant_step:
            raise ConfigError("constant step sizes are outside the convergence theory; set allow_constant_step")
        if self.init not in ("zero", "gaussian"):
            raise ConfigError(f"init must be 'zero' or 'gaussian', got {self.init!r}")
        if self.box_radius is not None and not self.box_radius > 0:
            raise ConfigError("box_radius must be positive")
        kind = self.features.get("kind")
        if kind not in ("rbf", "tabular", "file"):
            raise ConfigError(f"unknown feature kind {kind!r}")
        if self.early_stop is not None and set(self.early_stop) != {"consensus_err", "kkt_residual"}:
            raise ConfigError("early_stop needs exactly the keys consensus_err and kkt_residual")

    def early_stop_rule(self) -> EarlyStop | None:
        return None if self.early_stop is None else EarlyStop(**self.early_stop)


@dataclass(frozen=True)
class Problem:
    mrp: MarkovRewardProcess
    dist: StationaryDist
    features: FeatureMap
    net: CommNetwork
    state_values: np.ndarray
    notes: dict

    @property
    def Phi(self) -> np.ndarray:
        return self.features.Phi


def _instance(cfg: RunConfig) -> tuple[MarkovRewardProcess, np.ndarray, dict]:
    from . import presets

    inst = cfg.instance
    source = inst["source"]
    notes: dict = {}
    if source == "example2":
        P, deltas = presets.example2_transition_matrix()
        notes["row_renormalization_delta"] = deltas.tolist()
        n_agents = int(inst.get("n_agents", 20))
        rewards = np.repeat(np.arange(1, n_agents + 1, dtype=float)[:, None], P.shape[0], axis=1)
        return MarkovRewardProcess(P, rewards, cfg.gamma), np.arange(1, P.shape[0] + 1, dtype=float), notes
    if source == "example1":
        n_states = int(inst.get("n_states", 100))
        rng = np.random.default_rng(int(inst.get("seed", 0)))
        bounds = inst.get("bounds", [30.0, 40.0, 50.0, 60.0, 70.0])
        prices = 10.0 * np.arange(1, n_states + 1)
        rewards = trading_rewards(prices, bounds, lower=float(inst.get("lower", 10.0)))
        mrp = random_mrp(n_states, len(bounds), rewards, cfg.gamma, rng)
        return mrp, prices, notes
    if source == "random":
        rng = np.random.default_rng(int(inst.get("seed", 0)))
        n_states = int(inst.get("n_states", 10))
        mrp = random_mrp(n_states, int(inst.get("n_agents", 4)), inst.get("reward", "gaussian"), cfg.gamma, rng)
        return mrp, np.arange(n_states, dtype=float), notes
    # files
    P = read_matrix(inst["transition"])
    rewards = read_matrix(inst["rewards"])
    return MarkovRewardProcess(P, rewards, cfg.gamma), np.arange(P.shape[0], dtype=float), notes


def _features(cfg: RunConfig, n_states: int, state_values: np.ndarray) -> FeatureMap:
    spec = cfg.features
    kind = spec["kind"]
    if kind == "tabular":
        return FeatureMap(np.eye(n_states))
    if kind == "file":
        return FeatureMap(read_matrix(spec["path"]))
    values = spec.get("values", "state")
    if values == "state":  # the instance's natural coordinate, e.g. prices
        values = state_values
    elif values == "index":
        values = np.arange(n_states, dtype=float)
    elif isinstance(values, str):
        raise ConfigError(f"unknown RBF coordinate system {values!r}")
    rbf = RbfSpec.evenly_spaced(np.asarray(values, dtype=float), int(spec["q"]), spec.get("width"))
    return rbf_features(rbf, n_states)


def build_problem(cfg: RunConfig) -> Problem:
    """Materialize the process, features and graph a config describes."""
    cfg.validate()
    try:
        mrp, state_values, notes = _instance(cfg)
        features = _features(cfg, mrp.n_states, state_values)
        net = parse_graph(cfg.graph)
        dist = stationary_distribution(mrp.P)
    except ConfigError:
        raise
    except (DgtdError, ValueError, KeyError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc
    if net.n_agents != mrp.n_agents:
        raise ConfigError(f"graph has {net.n_agents} nodes but the instance has {mrp.n_agents} agents")
    if features.n_states != mrp.n_states:
        raise ConfigError(f"features cover {features.n_states} states, instance has {mrp.n_states}")
    for i, delta in enumerate(notes.get("row_renormalization_delta", [])):
        if delta:
            log.info("renormalized transition row %d by %.1e", i, delta)
    return Problem(mrp, dist, features, net, state_values, notes)

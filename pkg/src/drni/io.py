"""JSON instance, strategy and result files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import ContractError, Network
from .risk import BudgetedAmbiguitySet, RandomizedStrategy, check_alpha

INSTANCE_FIELDS = (
    "nodes", "source", "sink", "arcs", "scenarios", "budget", "alpha", "q_hat", "q_bar", "gamma",
)


@dataclass(frozen=True)
class Instance:
    net: Network
    scenarios: np.ndarray
    budget: int
    alpha: float
    amb: BudgetedAmbiguitySet
    # optional generator metadata, e.g. the factor model behind the scenarios
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        sc = np.atleast_2d(np.asarray(self.scenarios, dtype=float))
        if sc.shape != (self.amb.size, self.net.arc_count):
            raise ContractError(
                f"scenarios have shape {sc.shape}, expected ({self.amb.size}, {self.net.arc_count})"
            )
        if self.budget < 0:
            raise ContractError("budget must be nonnegative")
        object.__setattr__(self, "scenarios", sc)
        object.__setattr__(self, "alpha", check_alpha(self.alpha))

    def with_gamma(self, gamma: float) -> "Instance":
        amb = BudgetedAmbiguitySet(self.amb.q_hat, self.amb.q_bar, gamma)
        return Instance(self.net, self.scenarios, self.budget, self.alpha, amb, self.extra)

    def to_dict(self) -> dict:
        out = self.net.to_dict()
        out.update(
            scenarios=self.scenarios.tolist(),
            budget=int(self.budget),
            alpha=float(self.alpha),
            q_hat=self.amb.q_hat.tolist(),
            q_bar=self.amb.q_bar.tolist(),
            gamma=float(self.amb.gamma),
        )
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        missing = [k for k in INSTANCE_FIELDS if k not in data]
        if missing:
            raise ContractError(f"instance is missing fields {missing}")
        net = Network(int(data["nodes"]), int(data["source"]), int(data["sink"]),
                      tuple(tuple(a) for a in data["arcs"]))
        amb = BudgetedAmbiguitySet(np.array(data["q_hat"], dtype=float),
                                   np.array(data["q_bar"], dtype=float), float(data["gamma"]))
        extra = {k: v for k, v in data.items() if k not in INSTANCE_FIELDS}
        return cls(net, np.array(data["scenarios"], dtype=float), int(data["budget"]),
                   float(data["alpha"]), amb, extra)


def dump_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def load_json(path):
    return json.loads(Path(path).read_text())


def save_instance(inst: Instance, path) -> None:
    dump_json(inst.to_dict(), path)


def load_instance(path) -> Instance:
    return Instance.from_dict(load_json(path))


def strategy_from_dict(data) -> RandomizedStrategy:
    """Read a strategy from a result document or a bare support list."""
    support = data["support"] if isinstance(data, dict) else data
    return RandomizedStrategy(
        tuple(tuple(s["arcs"]) for s in support), np.array([s["prob"] for s in support])
    )

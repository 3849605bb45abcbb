"""Scenario sampling, out-of-sample evaluation and the randomized-vs-deterministic study."""

from __future__ import annotations

import csv
import logging
import time
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baseline import solve_deterministic_enumerate, solve_deterministic_milp
from .bnb import BnbConfig, spatial_bnb
from .graph import ContractError, Network, flow_matrix, generate_grid, reference_grid
from .io import Instance
from .risk import BudgetedAmbiguitySet, RandomizedStrategy, check_alpha, cvar_discrete

log = logging.getLogger(__name__)

DEFAULT_GAMMAS = (0.0, 0.1, 0.5, 1.0, 10.0, 20.0)
# VRS values (in percent) at or below this count as zero
VRS_ZERO = 1e-2


@dataclass(frozen=True)
class FactorModel:
    """Capacities ``c = F xi`` driven by two independent exponential factors."""

    F: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        mu = np.asarray(self.mu, dtype=float).ravel()
        if F.shape[1] != mu.size:
            raise ContractError("loading matrix and factor means disagree on the factor count")
        if np.any(F < 0):
            raise ContractError("factor loadings must be nonnegative")
        if np.any(mu <= 0):
            raise ContractError("factor means must be positive")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def random(cls, arc_count: int, seed, factors: int = 2) -> "FactorModel":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(0.0, 1.0, (arc_count, factors)), rng.uniform(1.0, 5.0, factors))

    @property
    def arc_count(self) -> int:
        return self.F.shape[0]

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        xi = rng.exponential(self.mu, (count, self.mu.size))
        return xi @ self.F.T

    def to_dict(self) -> dict:
        return {"F": self.F.tolist(), "mu": self.mu.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "FactorModel":
        return cls(np.array(data["F"]), np.array(data["mu"]))


def sample_scenarios(fm: FactorModel, count: int, seed) -> np.ndarray:
    """``count`` capacity vectors, one per row."""
    return fm.sample(count, np.random.default_rng(seed))


def vrs(det_value: float, rand_value: float) -> float:
    """Relative advantage of randomizing, in percent."""
    if not rand_value > 0:
        raise ContractError(f"VRS is undefined for a randomized value of {rand_value}")
    return (det_value - rand_value) / rand_value * 100.0


def out_of_sample_cvar(
    net: Network,
    fm: FactorModel,
    strategy: RandomizedStrategy,
    alpha: float,
    mc_count: int,
    seed,
) -> float:
    """Monte-Carlo CVaR of the flow when the plan is drawn from ``strategy``
    and capacities from ``fm``; each (plan, draw) pair weighs
    ``u_plan / mc_count``."""
    alpha = check_alpha(alpha)
    draws = sample_scenarios(fm, mc_count, seed)
    flows = flow_matrix(net, draws, strategy.support)
    probs = np.outer(strategy.probs, np.full(mc_count, 1.0 / mc_count))
    return cvar_discrete(flows.ravel(), probs.ravel(), alpha)


@dataclass
class StudyConfig:
    # "reference" is the fixed 4x2 drawing; "grid" generates rows x cols from the seed
    network: str = "reference"
    rows: int = 4
    cols: int = 2
    scenario_count: int = 20
    budget: int = 1
    alpha: float = 0.05
    gammas: Sequence[float] = DEFAULT_GAMMAS
    instances: int = 20
    seed: int = 0
    mc_count: int = 10_000
    eps: float = 1e-4
    # reuse the same sample sets at every gamma level instead of fresh ones
    reuse_samples: bool = False
    deterministic: str = "milp"
    time_limit: float | None = None


def instance_seeds(seed: int, level: int, index: int, reuse: bool) -> tuple[int, int, int]:
    """Factor-model, sample and Monte-Carlo seeds of one study instance."""
    key = [seed, index] if reuse else [seed, level, index]
    return tuple(int(x) for x in np.random.SeedSequence(key).generate_state(3))


def study_network(config: StudyConfig) -> Network:
    if config.network == "reference":
        return reference_grid()
    if config.network == "grid":
        return generate_grid(config.rows, config.cols, config.seed)
    raise ValueError(f"unknown study network {config.network!r}")


def run_instance(
    net: Network,
    config: StudyConfig,
    gamma: float,
    index: int,
    seeds: tuple[int, int, int],
) -> dict:
    """Draw a factor model and a sample set, solve the instance both ways and
    evaluate both strategies out of sample on common draws."""
    factor_seed, sample_seed, mc_seed = seeds
    record = {"gamma": gamma, "instance": index, "factor_seed": factor_seed,
              "sample_seed": sample_seed, "mc_seed": mc_seed,
              "scenarios": config.scenario_count, "mc_count": config.mc_count}
    try:
        fm = FactorModel.random(net.arc_count, factor_seed)
        scenarios = sample_scenarios(fm, config.scenario_count, sample_seed)
        amb = BudgetedAmbiguitySet.uniform(config.scenario_count, gamma)
        t0 = time.perf_counter()
        rand = spatial_bnb(net, scenarios, amb, config.alpha, config.budget, config.eps,
                           BnbConfig(time_limit=config.time_limit))
        t1 = time.perf_counter()
        solve_det = solve_deterministic_milp if config.deterministic == "milp" \
            else solve_deterministic_enumerate
        det = solve_det(net, scenarios, amb, config.alpha, config.budget)
        t2 = time.perf_counter()
        record.update(
            status="ok",
            rand_value=rand.value,
            rand_gap=rand.gap,
            rand_limit_reached=rand.limit_reached,
            rand_support=rand.strategy.to_dict(),
            det_value=det.value,
            det_plan=list(det.plan),
            vrs=vrs(det.value, rand.value),
            cvar_r=out_of_sample_cvar(net, fm, rand.strategy, config.alpha, config.mc_count,
                                      mc_seed),
            cvar_d=out_of_sample_cvar(net, fm, det.strategy, config.alpha, config.mc_count,
                                      mc_seed),
            runtime_rand=t1 - t0,
            runtime_det=t2 - t1,
        )
    except Exception as exc:  # recorded, the study goes on
        log.warning("instance gamma=%s #%d failed: %s", gamma, index, exc)
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                      traceback=traceback.format_exc())
    return record


def summarize(records: Sequence[dict]) -> list[dict]:
    """Per-gamma summary of VRS classes and out-of-sample CVaR."""
    out = []
    for gamma in sorted({r["gamma"] for r in records}):
        rows = [r for r in records if r["gamma"] == gamma]
        ok = [r for r in rows if r["status"] == "ok"]
        v = np.array([r["vrs"] for r in ok])
        big = [r for r in ok if r["vrs"] >= 1.0]
        out.append({
            "gamma": gamma,
            "instances": len(rows),
            "failed": len(rows) - len(ok),
            "vrs_zero": int(np.sum(v <= VRS_ZERO)),
            "vrs_small": int(np.sum((v > VRS_ZERO) & (v < 1.0))),
            "vrs_large": len(big),
            "vrs_mean": float(v.mean()) if len(v) else None,
            "vrs_max": float(v.max()) if len(v) else None,
            "large_cvar_r_mean": float(np.mean([r["cvar_r"] for r in big])) if big else None,
            "large_cvar_d_mean": float(np.mean([r["cvar_d"] for r in big])) if big else None,
            "large_r_better": sum(r["cvar_r"] < r["cvar_d"] for r in big),
        })
    return out


@dataclass
class ExperimentReport:
    config: dict
    network: dict
    records: list[dict] = field(default_factory=list)

    @property
    def summary(self) -> list[dict]:
        return summarize(self.records)

    def to_dict(self) -> dict:
        return {"config": self.config, "network": self.network, "records": self.records,
                "summary": self.summary}

    def write_csv(self, path) -> None:
        columns = ["gamma", "instance", "status", "factor_seed", "sample_seed", "mc_seed", "rand_value",
                   "det_value", "vrs", "cvar_r", "cvar_d", "rand_gap", "runtime_rand",
                   "runtime_det"]
        with Path(path).open("w", newline="") as fh:
            writer = csv.DictWriter(fh, columns, extrasaction="ignore")
            writer.writeheader()
            writer.writerows(self.records)


def run_study(config: StudyConfig | None = None) -> ExperimentReport:
    """Sample instances at every gamma level and compare randomized with
    deterministic interdiction in and out of sample."""
    config = config or StudyConfig()
    net = study_network(config)
    report = ExperimentReport(
        config={**asdict(config), "gammas": list(config.gammas)},
        network=net.to_dict(),
    )
    for level, gamma in enumerate(config.gammas):
        for index in range(config.instances):
            seeds = instance_seeds(config.seed, level, index, config.reuse_samples)
            record = run_instance(net, config, gamma, index, seeds)
            log.info("gamma=%s #%d vrs=%s", gamma, index, record.get("vrs"))
            report.records.append(record)
    return report


def make_instance(
    rows: int,
    cols: int,
    scenario_count: int,
    budget: int,
    alpha: float,
    gamma: float,
    seed: int,
    sample_seed: int | None = None,
) -> Instance:
    """Grid instance with factor-model scenarios and a uniform reference
    distribution; the factor model is stored alongside for evaluation."""
    net = generate_grid(rows, cols, seed)
    fm = FactorModel.random(net.arc_count, seed)
    sample_seed = seed if sample_seed is None else sample_seed
    scenarios = sample_scenarios(fm, scenario_count, sample_seed)
    amb = BudgetedAmbiguitySet.uniform(scenario_count, gamma)
    return Instance(net, scenarios, budget, alpha, amb,
                    {"factor_model": fm.to_dict(), "seed": seed, "sample_seed": sample_seed})

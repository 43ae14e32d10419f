"""Seeded random search over the documented hyperparameter space.

Each trial's configuration is derived from (search seed, trial index), so
results are independent of execution order and of the concurrency limit.
Random search stands in for the externally-hosted Bayesian optimizer the
original experiments used: identical space, identical selection
criterion (validation AUROC).  ``sampler_hook`` is the extension point
for a surrogate-model sampler.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import trainer as trainer_mod
from .trainer import RANGES, TrainConfig, TrainingDiverged

THREAD_ENV_VAR = "PANGRAM_FUSION_THREADS"


@dataclass(frozen=True)
class Categorical:
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ValueError("categorical distribution needs values")

    def sample(self, rng):
        return self.values[int(rng.integers(0, len(self.values)))]


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bad uniform bounds ({self.lo}, {self.hi})")

    def sample(self, rng):
        return float(rng.uniform(self.lo, self.hi))


@dataclass(frozen=True)
class IntUniform:
    lo: int
    hi: int

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"bad integer bounds ({self.lo}, {self.hi})")

    def sample(self, rng):
        return int(rng.integers(self.lo, self.hi + 1))


def default_search_space() -> dict:
    """The documented tuning space plus integer loss-weight ranges."""
    return {
        "batch_size": Categorical(RANGES["batch_size"]),
        "beta1": Uniform(*RANGES["beta1"]),
        "beta2": Uniform(*RANGES["beta2"]),
        "corr_thr": Categorical(RANGES["corr_thr"]),
        "drop_correlated": Categorical((True, False)),
        "gamma": Uniform(*RANGES["gamma"]),
        "learning_rate": Uniform(*RANGES["learning_rate"]),
        "minority_oversample": Categorical((True, False)),
        "model": Categorical(("ann", "shallow")),
        "momentum": Uniform(*RANGES["momentum"]),
        "num_epochs": IntUniform(*RANGES["num_epochs"]),
        "optimizer": Categorical(("adamw", "sgd")),
        "patience": IntUniform(*RANGES["patience"]),
        "random_state": IntUniform(*RANGES["random_state"]),
        "scaling_method": Categorical(("zscore", "minmax")),
        "scheduler": Categorical(("step", "reduce")),
        "seed": IntUniform(*RANGES["seed"]),
        "step_size": IntUniform(*RANGES["step_size"]),
        "use_feature_scaling": Categorical((True, False)),
        "use_scheduler": Categorical((True, False)),
        "w_pred": IntUniform(*RANGES["loss_weight"]),
        "w_cos": IntUniform(*RANGES["loss_weight"]),
        "w_rec": IntUniform(*RANGES["loss_weight"]),
    }


def sample_config(space: dict, rng) -> TrainConfig:
    """Draw one TrainConfig; every parameter independently per its
    distribution, in sorted name order for determinism."""
    values = {name: space[name].sample(rng) for name in sorted(space)}
    return TrainConfig(**values).validate()


@dataclass
class TrialResult:
    index: int
    config: TrainConfig
    status: str  # "ok" | "failed"
    best_val_auroc: float | None = None
    epochs_run: int | None = None
    error: str | None = None

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "trial": self.index,
                "status": self.status,
                "best_val_auroc": self.best_val_auroc,
                "epochs_run": self.epochs_run,
                "error": self.error,
                "config": dataclasses.asdict(self.config),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json_line(cls, line: str) -> "TrialResult":
        doc = json.loads(line)
        return cls(
            index=doc["trial"],
            config=TrainConfig(**doc["config"]),
            status=doc["status"],
            best_val_auroc=doc["best_val_auroc"],
            epochs_run=doc["epochs_run"],
            error=doc["error"],
        )


def rank_trials(results: list[TrialResult]) -> list[TrialResult]:
    """Best validation AUROC first; ties by fewer epochs, then index."""
    ok = [r for r in results if r.status == "ok"]
    failed = [r for r in results if r.status != "ok"]
    ok.sort(key=lambda r: (-r.best_val_auroc, r.epochs_run, r.index))
    return ok + sorted(failed, key=lambda r: r.index)


def worker_limit(requested: int | None = None) -> int:
    cap = os.environ.get(THREAD_ENV_VAR)
    limit = requested if requested and requested > 0 else 1
    if cap:
        try:
            limit = min(limit, max(1, int(cap)))
        except ValueError:
            pass
    return limit


def run_search(
    space: dict,
    train_fn,
    n_trials: int,
    seed: int,
    concurrency: int | None = None,
    log_path=None,
    resume: bool = False,
    sampler_hook=None,
):
    """Run ``n_trials`` independent trials and rank them.

    ``train_fn(config) -> (best_val_auroc, epochs_run, checkpoint)`` runs
    one full training; a TrainingDiverged inside a trial records a failed
    trial and the search continues.  Returns (ranked results, best
    checkpoint or None).
    """
    done: dict[int, TrialResult] = {}
    if resume and log_path and os.path.exists(log_path):
        with open(log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    result = TrialResult.from_json_line(line)
                    done[result.index] = result

    def config_for(index: int) -> TrainConfig:
        rng = np.random.default_rng([seed, index])
        if sampler_hook is not None:
            return sampler_hook(space, rng, index)
        return sample_config(space, rng)

    checkpoints: dict[int, object] = {}

    def run_trial(index: int) -> TrialResult:
        config = config_for(index)
        try:
            best_val, epochs_run, checkpoint = train_fn(config)
        except TrainingDiverged as exc:
            return TrialResult(index=index, config=config, status="failed",
                               error=str(exc))
        checkpoints[index] = checkpoint
        return TrialResult(index=index, config=config, status="ok",
                           best_val_auroc=float(best_val),
                           epochs_run=int(epochs_run))

    pending = [i for i in range(n_trials) if i not in done]
    limit = worker_limit(concurrency)
    results = dict(done)
    if limit <= 1:
        for i in pending:
            results[i] = run_trial(i)
    else:
        with ThreadPoolExecutor(max_workers=limit) as pool:
            for result in pool.map(run_trial, pending):
                results[result.index] = result

    ordered = [results[i] for i in sorted(results)]
    if log_path:
        with open(log_path, "w", encoding="utf-8") as fh:
            for result in ordered:
                fh.write(result.to_json_line() + "\n")

    ranked = rank_trials(ordered)
    best_checkpoint = None
    if ranked and ranked[0].status == "ok":
        best_checkpoint = checkpoints.get(ranked[0].index)
    return ranked, best_checkpoint

"""Mini-batch gradient training with AUROC-based model selection.

One training run is sequential and fully deterministic given the config's
two seeds: ``seed`` initializes the parameters, ``random_state`` drives
batch shuffling (and resampling, when enabled).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import models
from .metrics import auroc
from .models import (
    ClassifierParams,
    ClassifierSpec,
    FusionParams,
    FusionSpec,
    SharedParams,
    SharedSpec,
)

BATCH_SIZES = (128, 256, 512, 1024)
ADAMW_WEIGHT_DECAY = 0.01
ADAMW_EPS = 1e-8
MIN_LR = 1e-6

# tuning ranges (hypertune samples from exactly these)
RANGES = {
    "batch_size": BATCH_SIZES,
    "beta1": (0.9, 0.99),
    "beta2": (0.99, 0.9999),
    "corr_thr": (0.8, 0.85, 0.9, 0.95),
    "gamma": (0.5, 0.95),
    "learning_rate": (0.05, 0.8),
    "momentum": (0.1, 1.0),
    "num_epochs": (2, 500),
    "patience": (1, 5),
    "random_state": (100, 999),
    "seed": (100, 999),
    "step_size": (1, 30),
    "loss_weight": (0, 100),
}


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite loss appears; names the epoch and batch."""


@dataclass
class TrainConfig:
    batch_size: int = 128
    optimizer: str = "sgd"  # "sgd" | "adamw"
    learning_rate: float = 0.1
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    use_scheduler: bool = False
    scheduler: str = "none"  # "step" | "reduce" | "none"
    gamma: float = 0.9
    step_size: int = 10
    patience: int = 5
    num_epochs: int = 50
    seed: int = 0
    random_state: int = 0
    use_feature_scaling: bool = True
    scaling_method: str = "minmax"  # "zscore" | "minmax"
    corr_thr: float = 0.85
    drop_correlated: bool = True
    minority_oversample: bool = False
    oversample_method: str = "smote"
    model: str = "ann"  # decision-head variant: "ann" | "shallow"
    hidden: int = 64
    w_pred: float = 1.0
    w_cos: float = 0.0
    w_rec: float = 0.0
    rec_metric: str = "mse"
    renormalize_after_sum: bool = False

    def validate(self) -> "TrainConfig":
        if self.batch_size not in BATCH_SIZES:
            raise ValueError(f"batch_size must be one of {BATCH_SIZES}")
        if self.optimizer not in ("sgd", "adamw"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.scheduler not in ("step", "reduce", "none"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.scaling_method not in ("zscore", "minmax"):
            raise ValueError(f"unknown scaling_method {self.scaling_method!r}")
        if self.model not in ("ann", "shallow"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.num_epochs < 1:
            raise ValueError("num_epochs must be >= 1")
        if self.rec_metric not in models.REC_METRICS:
            raise ValueError(f"unknown rec_metric {self.rec_metric!r}")
        return self

    def in_search_ranges(self) -> bool:
        """True when every tunable lies inside the documented search space."""
        checks = [
            self.batch_size in RANGES["batch_size"],
            RANGES["beta1"][0] <= self.beta1 <= RANGES["beta1"][1],
            RANGES["beta2"][0] <= self.beta2 <= RANGES["beta2"][1],
            self.corr_thr in RANGES["corr_thr"],
            RANGES["gamma"][0] <= self.gamma <= RANGES["gamma"][1],
            RANGES["learning_rate"][0] <= self.learning_rate <= RANGES["learning_rate"][1],
            RANGES["momentum"][0] <= self.momentum <= RANGES["momentum"][1],
            RANGES["num_epochs"][0] <= self.num_epochs <= RANGES["num_epochs"][1],
            RANGES["patience"][0] <= self.patience <= RANGES["patience"][1],
            RANGES["random_state"][0] <= self.random_state <= RANGES["random_state"][1],
            RANGES["seed"][0] <= self.seed <= RANGES["seed"][1],
            RANGES["step_size"][0] <= self.step_size <= RANGES["step_size"][1],
            self.optimizer in ("sgd", "adamw"),
            self.scheduler in ("step", "reduce"),
            self.model in ("ann", "shallow"),
            all(RANGES["loss_weight"][0] <= w <= RANGES["loss_weight"][1]
                for w in (self.w_pred, self.w_cos, self.w_rec)),
        ]
        return all(checks)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text)).validate()


def reference_best_config() -> TrainConfig:
    """The published best configuration for the projection-fusion model.

    The scheduler choice is "reduce" but use_scheduler is off, so training
    runs at a constant learning rate; see README for that quirk.
    """
    return TrainConfig(
        batch_size=128,
        optimizer="sgd",
        learning_rate=0.3674643450313223,
        momentum=0.8075456327084843,
        beta1=0.9084719350261068,
        beta2=0.9940871758715644,
        use_scheduler=False,
        scheduler="reduce",
        gamma=0.6033860204614545,
        step_size=17,
        patience=5,
        num_epochs=86,
        seed=191,
        random_state=621,
        use_feature_scaling=True,
        scaling_method="minmax",
        corr_thr=0.85,
        drop_correlated=True,
        minority_oversample=False,
        model="ann",
        w_pred=87.0,
        w_cos=68.0,
        w_rec=48.0,
        rec_metric="mse",
    ).validate()


@dataclass
class EpochRecord:
    epoch: int
    loss_total: float
    loss_bce: float
    loss_cos: float
    loss_rec: float
    val_auroc: float
    lr: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_auroc: float = float("-inf")
    stopped_early: bool = False

    def to_csv(self) -> str:
        lines = ["epoch,loss_total,loss_bce,loss_cos,loss_rec,val_auroc,lr"]
        for e in self.epochs:
            lines.append(
                f"{e.epoch},{e.loss_total!r},{e.loss_bce!r},{e.loss_cos!r},"
                f"{e.loss_rec!r},{e.val_auroc!r},{e.lr!r}"
            )
        return "\n".join(lines) + "\n"


class _Optimizer:
    def __init__(self, arrays: dict[str, np.ndarray], config: TrainConfig):
        self.arrays = arrays
        self.config = config
        self.velocity = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        cfg = self.config
        if cfg.optimizer == "sgd":
            for k, arr in self.arrays.items():
                self.velocity[k] = cfg.momentum * self.velocity[k] + grads[k]
                arr -= lr * self.velocity[k]
            return
        self.t += 1
        b1, b2 = cfg.beta1, cfg.beta2
        for k, arr in self.arrays.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * grads[k]
            self.v[k] = b2 * self.v[k] + (1 - b2) * grads[k] ** 2
            m_hat = self.m[k] / (1 - b1**self.t)
            v_hat = self.v[k] / (1 - b2**self.t)
            arr -= lr * (m_hat / (np.sqrt(v_hat) + ADAMW_EPS)
                         + ADAMW_WEIGHT_DECAY * arr)


def step_lr(lr0: float, epoch: int, gamma: float, step_size: int) -> float:
    """lr for a 0-based epoch index under the step schedule."""
    return lr0 * gamma ** (epoch // step_size)


def _backward_dispatch(params, batch_x, batch_y):
    if isinstance(params, ClassifierParams):
        return models.backward_classifier(params, batch_x, batch_y)
    if isinstance(params, FusionParams):
        xs, xt = batch_x
        return models.backward_fusion(params, (xs, xt, batch_y))
    if isinstance(params, SharedParams):
        return models.backward_shared(params, batch_x, batch_y)
    raise TypeError(f"unknown params type {type(params)!r}")


def predict(params, x):
    """Positive-class probabilities for any architecture."""
    if isinstance(params, ClassifierParams):
        return np.atleast_1d(models.forward_classifier(params, x))
    if isinstance(params, FusionParams):
        prob, _ = models.forward_fusion(params, x[0], x[1])
        return np.atleast_1d(prob)
    if isinstance(params, SharedParams):
        prob, _ = models.forward_shared(params, x)
        return np.atleast_1d(prob)
    raise TypeError(f"unknown params type {type(params)!r}")


def _slice_inputs(x, idx):
    if isinstance(x, tuple):
        return tuple(m[idx] for m in x)
    if isinstance(x, dict):
        return {k: v[idx] for k, v in x.items()}
    return x[idx]


def _n_rows(x):
    if isinstance(x, tuple):
        return len(x[0])
    if isinstance(x, dict):
        return len(next(iter(x.values())))
    return len(x)


def train(spec, train_data, val_data, config: TrainConfig):
    """Run the full training loop; returns (best_params, history).

    ``train_data``/``val_data`` are (inputs, labels) where inputs match the
    architecture: a matrix for classifiers, an (X_src, X_tgt) tuple for
    fusion, a {modality: matrix} dict for shared-space fusion.
    """
    config.validate()
    x_train, y_train = train_data
    x_val, y_val = val_data
    y_train = np.asarray(y_train, dtype=float)
    y_val = np.asarray(y_val, dtype=int)
    n = _n_rows(x_train)
    if n == 0:
        raise ValueError("empty training set")

    params = models.init_params(spec, seed=config.seed)
    optimizer = _Optimizer(params.arrays, config)
    shuffle_rng = np.random.default_rng(config.random_state)

    history = TrainHistory()
    best_params = models.clone_params(params)
    lr = config.learning_rate
    epochs_since_improvement = 0
    reduce_wait = 0

    for epoch in range(config.num_epochs):
        if config.use_scheduler and config.scheduler == "step":
            lr = step_lr(config.learning_rate, epoch, config.gamma, config.step_size)

        order = shuffle_rng.permutation(n)
        sums = {"total": 0.0, "bce": 0.0, "cos": 0.0, "rec": 0.0}
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_x = _slice_inputs(x_train, idx)
            comps, grads = _backward_dispatch(params, batch_x, y_train[idx])
            if not np.isfinite(comps["total"]):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}"
                )
            optimizer.step(grads, lr)
            for k in sums:
                sums[k] += comps[k]
            n_batches += 1

        val_scores = predict(params, x_val)
        val_auroc = auroc(val_scores, y_val)
        history.epochs.append(
            EpochRecord(
                epoch=epoch,
                loss_total=sums["total"] / n_batches,
                loss_bce=sums["bce"] / n_batches,
                loss_cos=sums["cos"] / n_batches,
                loss_rec=sums["rec"] / n_batches,
                val_auroc=val_auroc,
                lr=lr,
            )
        )

        if val_auroc > history.best_val_auroc:
            history.best_val_auroc = val_auroc
            history.best_epoch = epoch
            best_params = models.clone_params(params)
            epochs_since_improvement = 0
            reduce_wait = 0
        else:
            epochs_since_improvement += 1
            reduce_wait += 1
            if (
                config.use_scheduler
                and config.scheduler == "reduce"
                and reduce_wait >= config.patience
            ):
                lr = max(lr * config.gamma, MIN_LR)
                reduce_wait = 0

        if epochs_since_improvement >= 2 * config.patience:
            history.stopped_early = True
            break

    return best_params, history


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def _spec_to_dict(spec):
    if isinstance(spec, ClassifierSpec):
        return {"kind": "classifier", "variant": spec.variant,
                "in_dim": spec.in_dim, "hidden": spec.hidden}
    if isinstance(spec, FusionSpec):
        return {
            "kind": "fusion",
            "d_src": spec.d_src,
            "d_tgt": spec.d_tgt,
            "decision": _spec_to_dict(spec.decision),
            "loss_weights": [spec.loss_weights.pred, spec.loss_weights.cos,
                             spec.loss_weights.rec],
            "rec_metric": spec.rec_metric,
            "renormalize_after_sum": spec.renormalize_after_sum,
        }
    if isinstance(spec, SharedSpec):
        return {
            "kind": "shared",
            "modality_dims": spec.modality_dims,
            "d_shared": spec.d_shared,
            "decision": _spec_to_dict(spec.decision),
            "loss_weights": [spec.loss_weights.pred, spec.loss_weights.cos,
                             spec.loss_weights.rec],
            "rec_metric": spec.rec_metric,
            "renormalize_after_sum": spec.renormalize_after_sum,
        }
    raise TypeError(f"unknown spec type {type(spec)!r}")


def _spec_from_dict(d):
    kind = d["kind"]
    if kind == "classifier":
        return ClassifierSpec(d["variant"], d["in_dim"], d["hidden"])
    weights = models.LossWeights(*d["loss_weights"])
    if kind == "fusion":
        return FusionSpec(d["d_src"], d["d_tgt"], _spec_from_dict(d["decision"]),
                          weights, d["rec_metric"], d["renormalize_after_sum"])
    if kind == "shared":
        return SharedSpec(d["modality_dims"], d["d_shared"],
                          _spec_from_dict(d["decision"]), weights,
                          d["rec_metric"], d["renormalize_after_sum"])
    raise ValueError(f"unknown checkpoint kind {kind!r}")


def checkpoint_to_json(params, config: TrainConfig | None = None,
                       plan_json: str | None = None,
                       meta: dict | None = None) -> str:
    """Portable JSON checkpoint: spec, arrays as decimal lists, config,
    and the preprocessing plan that produced the model inputs."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "spec": _spec_to_dict(params.spec),
        "arrays": {k: v.tolist() for k, v in params.arrays.items()},
        "config": None if config is None else json.loads(config.to_json()),
        "preprocess_plan": None if plan_json is None else json.loads(plan_json),
        "meta": meta or {},
    }
    return json.dumps(doc, indent=2)


def checkpoint_from_json(text: str):
    doc = json.loads(text)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')}")
    spec = _spec_from_dict(doc["spec"])
    arrays = {k: np.asarray(v, dtype=float) for k, v in doc["arrays"].items()}
    if spec.__class__ is ClassifierSpec:
        params = ClassifierParams(spec, arrays)
    elif spec.__class__ is FusionSpec:
        params = FusionParams(spec, arrays)
    else:
        params = SharedParams(spec, arrays)
    config = None
    if doc.get("config"):
        config = TrainConfig(**doc["config"])
    return params, config, doc

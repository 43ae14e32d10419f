"""End-to-end orchestration shared by the CLI and the estimator facade.

Gets from (manifest records, feature matrices, split, config) to trained
checkpoints and evaluation reports, handling per-set preprocessing plans
and the architecture-specific input shapes.
"""

from __future__ import annotations

import json

import numpy as np

from . import models, preprocess, trainer
from .dataset import FeatureMatrix, Split, samples_in
from .metrics import EvalReport, confusion_and_rates
from .models import ClassifierSpec, FusionSpec, LossWeights, SharedSpec
from .preprocess import PreprocessPlan
from .trainer import TrainConfig

ARCHITECTURES = ("baseline", "concat", "fusion", "shared")
DEFAULT_SHARED_DIM = 512
SPLIT_NAMES = ("train", "validation", "test")


def fit_plans(
    features: dict[str, FeatureMatrix],
    train_sample_ids: list[str],
    config: TrainConfig,
) -> dict[str, PreprocessPlan]:
    """One pruning/scaling plan per feature set, fitted on training rows."""
    plans = {}
    for name, fm in features.items():
        train_matrix = fm.matrix(train_sample_ids)
        plans[name] = preprocess.fit_plan(
            train_matrix,
            corr_threshold=config.corr_thr,
            drop_correlated=config.drop_correlated,
            scaler=config.scaling_method if config.use_feature_scaling else "none",
            resample=(config.oversample_method if config.minority_oversample
                      else "none"),
            smote_k=5,
            seed=config.random_state,
        )
    return plans


def _labels_for(records) -> np.ndarray:
    return np.array([r.is_pd for r in records], dtype=int)


class PreparedData:
    """Architecture-shaped model inputs for each split."""

    def __init__(self, arch: str, set_names: list[str], inputs: dict,
                 labels: dict, plans: dict, sample_ids: dict):
        self.arch = arch
        self.set_names = set_names
        self.inputs = inputs
        self.labels = labels
        self.plans = plans
        self.sample_ids = sample_ids

    def dims(self) -> dict[str, int]:
        first = self.inputs["train"]
        if self.arch in ("baseline", "concat"):
            return {self.set_names[0]: first.shape[1]}
        if self.arch == "fusion":
            return {
                self.set_names[0]: first[0].shape[1],
                self.set_names[1]: first[1].shape[1],
            }
        return {name: mat.shape[1] for name, mat in first.items()}


def prepare(
    records,
    features: dict[str, FeatureMatrix],
    split: Split,
    config: TrainConfig,
    arch: str,
    set_order: list[str] | None = None,
) -> PreparedData:
    """Apply plans and shape inputs for the chosen architecture.

    For fusion the first two sets in order are (source, target).  Training
    rows are optionally class-balanced; for multi-input architectures the
    resampling operates on the column-concatenated matrix so synthetic
    rows stay consistent across inputs.
    """
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}")
    set_order = set_order or sorted(features)
    if arch == "baseline" and len(set_order) != 1:
        raise ValueError("baseline takes exactly one feature set")
    if arch == "fusion" and len(set_order) != 2:
        raise ValueError("fusion takes exactly two feature sets (source, target)")
    if arch == "shared" and len(set_order) < 2:
        raise ValueError("shared-space fusion takes at least two feature sets")

    split_records = {
        name: samples_in(records, getattr(split, name)) for name in SPLIT_NAMES
    }
    sample_ids = {k: [r.sample_id for r in v] for k, v in split_records.items()}
    plans = fit_plans(
        {n: features[n] for n in set_order}, sample_ids["train"], config
    )

    matrices = {
        part: {n: plans[n].apply(features[n].matrix(sample_ids[part]))
               for n in set_order}
        for part in SPLIT_NAMES
    }
    labels = {part: _labels_for(split_records[part]) for part in SPLIT_NAMES}

    # class rebalancing on training rows only
    plan0 = plans[set_order[0]]
    if plan0.resample != "none" and len(labels["train"]):
        stacked = np.hstack([matrices["train"][n] for n in set_order])
        widths = [matrices["train"][n].shape[1] for n in set_order]
        balanced, y_balanced = preprocess.resample(
            stacked, labels["train"], plan0.resample, plan0.seed,
            smote_k=plan0.smote_k,
        )
        offsets = np.cumsum([0] + widths)
        for i, n in enumerate(set_order):
            matrices["train"][n] = balanced[:, offsets[i]:offsets[i + 1]]
        labels["train"] = y_balanced

    def shape_inputs(part):
        mats = matrices[part]
        if arch == "baseline":
            return mats[set_order[0]]
        if arch == "concat":
            return np.hstack([mats[n] for n in set_order])
        if arch == "fusion":
            return (mats[set_order[0]], mats[set_order[1]])
        return dict(mats)

    inputs = {part: shape_inputs(part) for part in SPLIT_NAMES}
    if arch == "concat":
        set_names = ["+".join(set_order)]
    else:
        set_names = list(set_order)
    return PreparedData(arch, set_names, inputs, labels, plans, sample_ids)


def build_spec(prepared: PreparedData, config: TrainConfig,
               shared_dim: int = DEFAULT_SHARED_DIM):
    dims = prepared.dims()
    weights = LossWeights(config.w_pred, config.w_cos, config.w_rec)
    if prepared.arch in ("baseline", "concat"):
        d = dims[prepared.set_names[0]]
        return ClassifierSpec(config.model, d, hidden=config.hidden)
    if prepared.arch == "fusion":
        src, tgt = prepared.set_names
        return FusionSpec(
            d_src=dims[src],
            d_tgt=dims[tgt],
            decision=ClassifierSpec(config.model, dims[tgt], hidden=config.hidden),
            loss_weights=weights,
            rec_metric=config.rec_metric,
            renormalize_after_sum=config.renormalize_after_sum,
        )
    return SharedSpec(
        modality_dims=dims,
        d_shared=shared_dim,
        decision=ClassifierSpec(config.model, shared_dim, hidden=config.hidden),
        loss_weights=weights,
        rec_metric=config.rec_metric,
        renormalize_after_sum=config.renormalize_after_sum,
    )


def train_prepared(prepared: PreparedData, config: TrainConfig,
                   shared_dim: int = DEFAULT_SHARED_DIM):
    """Train on prepared data; returns (params, history)."""
    spec = build_spec(prepared, config, shared_dim)
    return trainer.train(
        spec,
        (prepared.inputs["train"], prepared.labels["train"]),
        (prepared.inputs["validation"], prepared.labels["validation"]),
        config,
    )


def checkpoint_document(params, config: TrainConfig, prepared: PreparedData,
                        split: Split, ratios, history) -> str:
    plans = {name: json.loads(plan.to_json())
             for name, plan in prepared.plans.items()}
    meta = {
        "arch": prepared.arch,
        "set_order": (prepared.set_names if prepared.arch != "concat"
                      else prepared.set_names[0].split("+")),
        "split_seed": split.seed,
        "split_ratios": list(ratios),
        "best_epoch": history.best_epoch,
        "best_val_auroc": history.best_val_auroc,
        "plans": plans,
    }
    return trainer.checkpoint_to_json(params, config, meta=meta)


def prepared_from_checkpoint(doc: dict, records, features):
    """Rebuild the evaluation inputs an existing checkpoint expects."""
    from .dataset import split_participants

    meta = doc["meta"]
    config = TrainConfig(**doc["config"])
    split = split_participants(records, tuple(meta["split_ratios"]),
                               meta["split_seed"])
    set_order = meta["set_order"]
    plans = {name: PreprocessPlan(**plan_doc)
             for name, plan_doc in meta["plans"].items()}

    split_records = {
        name: samples_in(records, getattr(split, name)) for name in SPLIT_NAMES
    }
    sample_ids = {k: [r.sample_id for r in v] for k, v in split_records.items()}
    matrices = {
        part: {n: plans[n].apply(features[n].matrix(sample_ids[part]))
               for n in set_order}
        for part in SPLIT_NAMES
    }
    labels = {part: _labels_for(split_records[part]) for part in SPLIT_NAMES}
    arch = meta["arch"]

    def shape_inputs(part):
        mats = matrices[part]
        if arch == "baseline":
            return mats[set_order[0]]
        if arch == "concat":
            return np.hstack([mats[n] for n in set_order])
        if arch == "fusion":
            return (mats[set_order[0]], mats[set_order[1]])
        return dict(mats)

    inputs = {part: shape_inputs(part) for part in SPLIT_NAMES}
    prepared = PreparedData(
        arch,
        set_order if arch != "concat" else ["+".join(set_order)],
        inputs, labels, plans, sample_ids,
    )
    return prepared, split_records, config


def evaluate_prepared(params, prepared: PreparedData, part: str = "test",
                      threshold: float = 0.5) -> EvalReport:
    scores = trainer.predict(params, prepared.inputs[part])
    return confusion_and_rates(scores, prepared.labels[part], threshold=threshold)

"""Fit-on-train / apply-everywhere feature transforms.

A PreprocessPlan captures correlation pruning, scaling statistics, and the
resampling choice so that training and later inference share identical
transforms.  Fitting touches training rows only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

SCALERS = ("none", "zscore", "minmax")
RESAMPLERS = ("none", "smote", "random_over", "random_under")


def prune_correlated(train: np.ndarray, thr: float) -> list[int]:
    """Indices of columns to keep after greedy correlation pruning.

    Columns are scanned in index order; a column is dropped when its
    absolute Pearson correlation with any already-kept column exceeds
    ``thr``.  Zero-variance columns are dropped outright.
    """
    train = np.asarray(train, dtype=float)
    if train.ndim != 2 or train.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least 2 rows")
    if not (0.0 < thr <= 1.0):
        raise ValueError(f"threshold must be in (0, 1], got {thr}")
    std = train.std(axis=0)
    centered = train - train.mean(axis=0)
    nonconst = std > 0.0
    scaled = np.zeros_like(centered)
    scaled[:, nonconst] = centered[:, nonconst] / (
        std[nonconst] * np.sqrt(train.shape[0])
    )
    corr = np.abs(scaled.T @ scaled)
    kept: list[int] = []
    for j in range(train.shape[1]):
        if not nonconst[j]:
            continue
        if kept and corr[j, kept].max() > thr:
            continue
        kept.append(j)
    return kept


@dataclass
class PreprocessPlan:
    kept_columns: list[int]
    scaler: str = "none"
    scaler_stats: dict[str, list[float]] = field(default_factory=dict)
    resample: str = "none"
    smote_k: int = 5
    corr_threshold: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.scaler not in SCALERS:
            raise ValueError(f"unknown scaler {self.scaler!r}")
        if self.resample not in RESAMPLERS:
            raise ValueError(f"unknown resample method {self.resample!r}")

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Prune then scale; pure per-row and idempotent-safe on re-fit."""
        X = np.asarray(X, dtype=float)
        X = X[:, self.kept_columns]
        if self.scaler == "zscore":
            mean = np.asarray(self.scaler_stats["mean"])
            std = np.asarray(self.scaler_stats["std"])
            safe = np.where(std > 0, std, 1.0)
            return (X - mean) / safe
        if self.scaler == "minmax":
            lo = np.asarray(self.scaler_stats["min"])
            hi = np.asarray(self.scaler_stats["max"])
            span = hi - lo
            safe = np.where(span > 0, span, 1.0)
            out = (X - lo) / safe
            out[:, span == 0] = 0.0
            return out
        return X

    def to_json(self) -> str:
        return json.dumps(
            {
                "kept_columns": self.kept_columns,
                "scaler": self.scaler,
                "scaler_stats": self.scaler_stats,
                "resample": self.resample,
                "smote_k": self.smote_k,
                "corr_threshold": self.corr_threshold,
                "seed": self.seed,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "PreprocessPlan":
        return cls(**json.loads(text))


def fit_plan(
    train: np.ndarray,
    corr_threshold: float = 1.0,
    drop_correlated: bool = True,
    scaler: str = "none",
    resample: str = "none",
    smote_k: int = 5,
    seed: int = 0,
) -> PreprocessPlan:
    """Fit pruning indices and scaling statistics on training rows only."""
    train = np.asarray(train, dtype=float)
    if drop_correlated:
        kept = prune_correlated(train, corr_threshold)
    else:
        kept = list(range(train.shape[1]))
    pruned = train[:, kept]
    stats: dict[str, list[float]] = {}
    if scaler == "zscore":
        stats = {
            "mean": pruned.mean(axis=0).tolist(),
            "std": pruned.std(axis=0).tolist(),
        }
    elif scaler == "minmax":
        stats = {
            "min": pruned.min(axis=0).tolist(),
            "max": pruned.max(axis=0).tolist(),
        }
    return PreprocessPlan(
        kept_columns=kept,
        scaler=scaler,
        scaler_stats=stats,
        resample=resample,
        smote_k=smote_k,
        corr_threshold=corr_threshold,
        seed=seed,
    )


def fit_apply_scaler(train: np.ndarray, *others, method: str = "zscore"):
    """Fit a scaler on train, apply it to train and every other matrix."""
    plan = fit_plan(
        np.asarray(train, dtype=float), drop_correlated=False, scaler=method
    )
    out = [plan.apply(train)]
    out.extend(plan.apply(o) for o in others)
    return out[0] if not others else tuple(out)


def _smote(X, y, minority_label, k, rng):
    minority = X[y == minority_label]
    n_needed = int(np.sum(y != minority_label) - len(minority))
    if len(minority) < 2:
        raise ValueError("SMOTE needs at least 2 minority samples")
    k = min(k, len(minority) - 1)
    # pairwise distances within the minority class; ties broken by index
    diff = minority[:, None, :] - minority[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=2))
    np.fill_diagonal(dist, np.inf)
    neighbor_idx = np.argsort(dist, axis=1, kind="stable")[:, :k]
    synth = np.empty((n_needed, X.shape[1]))
    for i in range(n_needed):
        base = int(rng.integers(0, len(minority)))
        nb = int(neighbor_idx[base, rng.integers(0, k)])
        lam = rng.uniform(0.0, 1.0)
        synth[i] = minority[base] + lam * (minority[nb] - minority[base])
    return synth


def resample(X, y, method: str, seed: int, smote_k: int = 5):
    """Balance the classes on training rows.

    smote: synthesize minority points on segments between minority
    neighbors; random_over: duplicate random minority rows; random_under:
    drop random majority rows; none: identity.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(X) != len(y):
        raise ValueError("features and labels must align")
    if method == "none":
        return X, y
    if method not in RESAMPLERS:
        raise ValueError(f"unknown resample method {method!r}")
    counts = {label: int(np.sum(y == label)) for label in (0, 1)}
    if counts[0] == counts[1]:
        return X, y
    minority = 0 if counts[0] < counts[1] else 1
    majority = 1 - minority
    rng = np.random.default_rng(seed)
    if method == "smote":
        synth = _smote(X, y, minority, smote_k, rng)
        X_out = np.vstack([X, synth])
        y_out = np.concatenate([y, np.full(len(synth), minority)])
        return X_out, y_out
    if method == "random_over":
        n_needed = counts[majority] - counts[minority]
        if counts[minority] < 1:
            raise ValueError("no minority samples to oversample")
        idx = np.flatnonzero(y == minority)
        picks = rng.integers(0, len(idx), size=n_needed)
        X_out = np.vstack([X, X[idx[picks]]])
        y_out = np.concatenate([y, np.full(n_needed, minority)])
        return X_out, y_out
    # random_under
    idx_major = np.flatnonzero(y == majority)
    keep = rng.permutation(len(idx_major))[: counts[minority]]
    keep_mask = np.ones(len(y), dtype=bool)
    keep_mask[idx_major] = False
    keep_mask[idx_major[keep]] = True
    return X[keep_mask], y[keep_mask]


class Preprocessor(BaseEstimator, TransformerMixin):
    """Estimator-style wrapper: fit on train, transform anywhere.

    Resampling is deliberately not part of ``transform`` (it applies to
    training rows only); call ``fit_resample`` after fitting.
    """

    def __init__(self, corr_threshold=0.85, drop_correlated=True,
                 scaler="none", resample="none", smote_k=5, seed=0):
        self.corr_threshold = corr_threshold
        self.drop_correlated = drop_correlated
        self.scaler = scaler
        self.resample = resample
        self.smote_k = smote_k
        self.seed = seed

    def fit(self, X, y=None):
        self.plan_ = fit_plan(
            X,
            corr_threshold=self.corr_threshold,
            drop_correlated=self.drop_correlated,
            scaler=self.scaler,
            resample=self.resample,
            smote_k=self.smote_k,
            seed=self.seed,
        )
        return self

    def transform(self, X):
        if not hasattr(self, "plan_"):
            raise NotFittedError("Preprocessor is not fitted")
        return self.plan_.apply(X)

    def fit_resample(self, X, y):
        """Transform training rows and balance classes per the plan."""
        Xt = self.transform(X)
        return resample(Xt, y, self.plan_.resample, self.plan_.seed,
                        smote_k=self.plan_.smote_k)

"""Deterministic synthetic cohorts for desk-scale end-to-end testing.

Embeddings are class-conditional Gaussians: controls centered at zero, the
PD class shifted by ``class_separation`` along a fixed seeded unit
direction per modality, identity noise, plus a shared per-sample latent
scalar (weight 0.5) that correlates the modalities.  The construction has
a closed-form achievable AUROC of Phi(delta / sqrt(2)).
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field

import numpy as np

from .dataset import FeatureMatrix, SampleRecord

DEFAULT_DIMS = {"acoustic": 38, "w2v2": 768, "wavlm": 1024, "imagebind": 1024}

SEX_WEIGHTS = {"female": 0.53, "male": 0.45, "nonbinary": 0.01, "unknown": 0.01}
ETHNICITY_WEIGHTS = {
    "white": 0.66,
    "black": 0.04,
    "american_indian": 0.004,
    "asian": 0.045,
    "other": 0.006,
    "unknown": 0.245,
}
COHORT_WEIGHTS = {"home": 0.50, "clinic": 0.27, "care": 0.23}


@dataclass
class SynthSpec:
    n_participants: int = 200
    pd_fraction: float = 0.3
    samples_per_participant: tuple[int, int] = (1, 1)
    dims: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_DIMS))
    class_separation: float = 2.0
    latent_weight: float = 0.5
    age_mean: float = 62.0
    age_std: float = 13.0
    age_range: tuple[float, float] = (16.0, 93.0)
    missing_age_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.pd_fraction < 1.0):
            raise ValueError(f"pd_fraction must be in (0, 1), got {self.pd_fraction}")
        if self.class_separation < 0:
            raise ValueError("class_separation must be >= 0")
        if self.n_participants < 2:
            raise ValueError("need at least 2 participants")
        lo, hi = self.samples_per_participant
        if not (1 <= lo <= hi):
            raise ValueError(f"bad samples_per_participant range {self.samples_per_participant}")
        for name, d in self.dims.items():
            if d < 1:
                raise ValueError(f"dim for {name!r} must be positive")


def _categorical(rng, weights: dict[str, float]) -> str:
    names = list(weights)
    probs = np.array([weights[n] for n in names], dtype=float)
    probs = probs / probs.sum()
    return names[int(rng.choice(len(names), p=probs))]


def generate(spec: SynthSpec) -> tuple[list[SampleRecord], dict[str, FeatureMatrix]]:
    """Build manifest records plus one FeatureMatrix per modality."""
    rng = np.random.default_rng(spec.seed)
    n_pd = int(round(spec.n_participants * spec.pd_fraction))
    n_pd = min(max(n_pd, 1), spec.n_participants - 1)

    directions = {}
    for name in sorted(spec.dims):
        d = spec.dims[name]
        u = rng.normal(size=d)
        directions[name] = u / np.linalg.norm(u)
    latent_dirs = {}
    for name in sorted(spec.dims):
        d = spec.dims[name]
        v = rng.normal(size=d)
        latent_dirs[name] = v / np.linalg.norm(v)

    records: list[SampleRecord] = []
    vectors: dict[str, dict[str, np.ndarray]] = {name: {} for name in spec.dims}
    base_date = datetime.date(2023, 1, 1)
    lo, hi = spec.samples_per_participant

    for i in range(spec.n_participants):
        is_pd = i < n_pd
        pid = f"p{i:05d}"
        age = float(np.clip(rng.normal(spec.age_mean, spec.age_std), *spec.age_range))
        if rng.random() < spec.missing_age_rate:
            age = None
        sex = _categorical(rng, SEX_WEIGHTS)
        ethnicity = _categorical(rng, ETHNICITY_WEIGHTS)
        cohort = _categorical(rng, COHORT_WEIGHTS)
        duration = None
        if is_pd:
            duration = float(np.clip(rng.normal(6.3, 5.2), 1.0, 27.0))
        n_samples = int(rng.integers(lo, hi + 1))
        for s in range(n_samples):
            sid = f"{pid}_r{s}"
            records.append(
                SampleRecord(
                    sample_id=sid,
                    participant_id=pid,
                    recording_date=base_date + datetime.timedelta(days=7 * s),
                    cohort=cohort,
                    label="pd" if is_pd else "control",
                    age=age,
                    sex=sex,
                    ethnicity=ethnicity,
                    disease_duration=duration,
                    audio_path=None,
                )
            )
            latent = rng.normal()
            for name in sorted(spec.dims):
                d = spec.dims[name]
                vec = rng.normal(size=d)
                vec += spec.latent_weight * latent * latent_dirs[name]
                if is_pd:
                    vec += spec.class_separation * directions[name]
                vectors[name][sid] = vec

    features = {
        name: FeatureMatrix(
            set_name=name,
            column_names=[f"{name}_{j}" for j in range(spec.dims[name])],
            rows=vectors[name],
        )
        for name in spec.dims
    }
    return records, features


def true_directions(spec: SynthSpec) -> dict[str, np.ndarray]:
    """The class-shift unit direction per modality (for oracle checks)."""
    rng = np.random.default_rng(spec.seed)
    directions = {}
    for name in sorted(spec.dims):
        d = spec.dims[name]
        u = rng.normal(size=d)
        directions[name] = u / np.linalg.norm(u)
    return directions

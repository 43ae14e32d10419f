"""Sample manifests, feature matrices, and participant-level splits.

The manifest is a flat CSV (one row per recording); feature sets live in
separate CSVs keyed by ``sample_id``.  All splitting happens at the
participant level so that no speaker contributes samples to more than one
of train/validation/test.
"""

from __future__ import annotations

import csv
import datetime
from dataclasses import dataclass, field

import numpy as np

MANIFEST_HEADER = [
    "sample_id",
    "participant_id",
    "recording_date",
    "cohort",
    "label",
    "age",
    "sex",
    "ethnicity",
    "disease_duration",
    "audio_path",
]

COHORTS = ("home", "clinic", "care")
LABELS = ("pd", "control")
SEXES = ("male", "female", "nonbinary", "unknown")
ETHNICITIES = ("white", "black", "american_indian", "asian", "other", "unknown")

# canonical widths of the named feature sets; synthetic desk-scale cohorts
# may use smaller dims, so these are advisory rather than enforced on load
CANONICAL_DIMS = {"acoustic": 38, "w2v2": 768, "wavlm": 1024, "imagebind": 1024}


class ManifestError(ValueError):
    """Raised for malformed or inconsistent manifest/feature files."""


@dataclass(frozen=True)
class SampleRecord:
    """One recording of one participant."""

    sample_id: str
    participant_id: str
    recording_date: datetime.date
    cohort: str
    label: str
    age: float | None = None
    sex: str | None = None
    ethnicity: str | None = None
    disease_duration: float | None = None
    audio_path: str | None = None

    def __post_init__(self):
        if self.cohort not in COHORTS:
            raise ManifestError(f"unknown cohort {self.cohort!r}")
        if self.label not in LABELS:
            raise ManifestError(f"unknown label {self.label!r}")
        if self.sex is not None and self.sex not in SEXES:
            raise ManifestError(f"unknown sex {self.sex!r}")
        if self.ethnicity is not None and self.ethnicity not in ETHNICITIES:
            raise ManifestError(f"unknown ethnicity {self.ethnicity!r}")
        if self.age is not None and not (0.0 <= self.age <= 130.0):
            raise ManifestError(f"age {self.age} outside [0, 130]")
        if self.disease_duration is not None and self.label != "pd":
            raise ManifestError(
                f"sample {self.sample_id}: disease_duration given for non-PD record"
            )

    @property
    def is_pd(self) -> bool:
        return self.label == "pd"


@dataclass
class FeatureMatrix:
    """A named feature set: fixed-width real vectors keyed by sample_id."""

    set_name: str
    column_names: list[str]
    rows: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.column_names)

    def __post_init__(self):
        for sid, vec in self.rows.items():
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (self.dim,):
                raise ManifestError(
                    f"feature row {sid!r} has length {vec.shape}, expected {self.dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise ManifestError(f"feature row {sid!r} contains non-finite values")
            self.rows[sid] = vec

    def matrix(self, sample_ids: list[str]) -> np.ndarray:
        """Stack rows for the given samples, in order."""
        missing = [s for s in sample_ids if s not in self.rows]
        if missing:
            raise ManifestError(
                f"feature set {self.set_name!r} missing samples: {missing[:5]}"
            )
        return np.stack([self.rows[s] for s in sample_ids])


@dataclass(frozen=True)
class Split:
    """Disjoint participant-id sets."""

    train: frozenset
    validation: frozenset
    test: frozenset
    seed: int

    def membership(self, participant_id: str) -> str:
        if participant_id in self.train:
            return "train"
        if participant_id in self.validation:
            return "validation"
        if participant_id in self.test:
            return "test"
        raise KeyError(participant_id)


def _parse_optional_float(cell: str, what: str, row_idx: int) -> float | None:
    if cell == "":
        return None
    try:
        return float(cell)
    except ValueError:
        raise ManifestError(f"row {row_idx}: cannot parse {what} {cell!r}") from None


def load_manifest(path) -> list[SampleRecord]:
    """Parse a manifest CSV into SampleRecords.

    Raises ManifestError naming the offending row for malformed rows and
    for duplicate sample ids.
    """
    records = []
    seen_ids = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        if header != MANIFEST_HEADER:
            raise ManifestError(
                f"{path}: bad header {header!r}, expected {MANIFEST_HEADER!r}"
            )
        for row_idx, row in enumerate(reader, start=1):
            if len(row) != len(MANIFEST_HEADER):
                raise ManifestError(
                    f"row {row_idx}: expected {len(MANIFEST_HEADER)} columns, got {len(row)}"
                )
            (sid, pid, date_s, cohort, label, age_s, sex, eth, dd_s, audio) = row
            if sid in seen_ids:
                raise ManifestError(f"row {row_idx}: duplicate sample_id {sid!r}")
            seen_ids.add(sid)
            try:
                date = datetime.date.fromisoformat(date_s)
            except ValueError:
                raise ManifestError(
                    f"row {row_idx}: bad recording_date {date_s!r}"
                ) from None
            try:
                rec = SampleRecord(
                    sample_id=sid,
                    participant_id=pid,
                    recording_date=date,
                    cohort=cohort,
                    label=label,
                    age=_parse_optional_float(age_s, "age", row_idx),
                    sex=sex or None,
                    ethnicity=eth or None,
                    disease_duration=_parse_optional_float(
                        dd_s, "disease_duration", row_idx
                    ),
                    audio_path=audio or None,
                )
            except ManifestError as exc:
                raise ManifestError(f"row {row_idx}: {exc}") from None
            records.append(rec)
    return records


def save_manifest(records: list[SampleRecord], path) -> None:
    """Write records back out in the manifest CSV contract."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.sample_id,
                    r.participant_id,
                    r.recording_date.isoformat(),
                    r.cohort,
                    r.label,
                    "" if r.age is None else repr(float(r.age)),
                    r.sex or "",
                    r.ethnicity or "",
                    "" if r.disease_duration is None else repr(float(r.disease_duration)),
                    r.audio_path or "",
                ]
            )


def load_feature_csv(path, set_name: str) -> FeatureMatrix:
    """Read one per-set feature CSV: ``sample_id,<col_0>,...``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty feature file") from None
        if not header or header[0] != "sample_id":
            raise ManifestError(f"{path}: first column must be sample_id")
        columns = header[1:]
        rows = {}
        for row_idx, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ManifestError(
                    f"{path} row {row_idx}: expected {len(header)} cells, got {len(row)}"
                )
            sid = row[0]
            if sid in rows:
                raise ManifestError(f"{path} row {row_idx}: duplicate sample_id {sid!r}")
            try:
                rows[sid] = np.array([float(c) for c in row[1:]], dtype=float)
            except ValueError:
                raise ManifestError(f"{path} row {row_idx}: unparsable float") from None
    return FeatureMatrix(set_name=set_name, column_names=columns, rows=rows)


def save_feature_csv(features: FeatureMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id"] + list(features.column_names))
        for sid in features.rows:
            writer.writerow([sid] + [repr(float(v)) for v in features.rows[sid]])


def deduplicate(records: list[SampleRecord]) -> list[SampleRecord]:
    """Keep the first record per (participant_id, recording_date)."""
    seen = set()
    out = []
    for rec in records:
        key = (rec.participant_id, rec.recording_date)
        if key in seen:
            continue
        seen.add(key)
        out.append(rec)
    return out


def participant_labels(records: list[SampleRecord]) -> dict[str, bool]:
    """participant_id -> PD flag (a participant is PD if any sample is PD)."""
    labels: dict[str, bool] = {}
    for rec in records:
        labels[rec.participant_id] = labels.get(rec.participant_id, False) or rec.is_pd
    return labels


def _allocate_split_sizes(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Global set sizes: validation and test quotas are floored, train
    takes the remainder (1306 @ 70/15/15 -> 916/195/195)."""
    n_val = int(np.floor(n * ratios[1]))
    n_test = int(np.floor(n * ratios[2]))
    return n - n_val - n_test, n_val, n_test


def _allocate_stratum(n_stratum: int, n_total: int, sizes: tuple[int, int, int]) -> list[int]:
    """Largest-remainder share of one stratum across the realized set sizes.

    Quotas are n_stratum * size_j / n_total; leftover units go to the
    largest fractional remainders, ties resolved train-first.
    """
    quotas = [n_stratum * s / n_total for s in sizes]
    counts = [int(np.floor(q)) for q in quotas]
    leftover = n_stratum - sum(counts)
    remainders = sorted(
        range(3), key=lambda j: (-(quotas[j] - counts[j]), j)
    )
    for j in remainders[:leftover]:
        counts[j] += 1
    return counts


def _check_ratios(ratios) -> tuple[float, float, float]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive reals, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    return ratios


def split_participants(records: list[SampleRecord], ratios, seed: int) -> Split:
    """Stratified participant-level split.

    Participants are grouped by PD label; each stratum is shuffled with a
    seeded generator and dealt into train/validation/test so that the split
    sizes hit the global quota rule and each split's PD fraction stays
    within one participant of the cohort-wide fraction.
    """
    ratios = _check_ratios(ratios)
    labels = participant_labels(records)
    participants = sorted(labels)
    n = len(participants)
    if n < 3:
        raise ValueError(f"need at least 3 participants, got {n}")

    sizes = _allocate_split_sizes(n, ratios)
    rng = np.random.default_rng(seed)
    pools: dict[str, list[str]] = {"train": [], "validation": [], "test": []}
    split_order = ("train", "validation", "test")

    remaining = list(sizes)
    strata = [
        [p for p in participants if labels[p]],
        [p for p in participants if not labels[p]],
    ]
    for i, stratum in enumerate(strata):
        if not stratum:
            continue
        if i == 0:
            counts = _allocate_stratum(len(stratum), n, sizes)
        else:
            counts = remaining  # complement of the first stratum
        shuffled = [stratum[j] for j in rng.permutation(len(stratum))]
        pos = 0
        for name, c in zip(split_order, counts):
            pools[name].extend(shuffled[pos : pos + c])
            pos += c
        remaining = [r - c for r, c in zip(remaining, counts)]

    return Split(
        train=frozenset(pools["train"]),
        validation=frozenset(pools["validation"]),
        test=frozenset(pools["test"]),
        seed=seed,
    )


def kfold_participants(records: list[SampleRecord], k: int, seed: int) -> list[Split]:
    """Stratified participant-level k-fold splits (validation left empty)."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    labels = participant_labels(records)
    participants = sorted(labels)
    if len(participants) < k:
        raise ValueError(f"k={k} exceeds participant count {len(participants)}")

    rng = np.random.default_rng(seed)
    folds: list[list[str]] = [[] for _ in range(k)]
    for stratum in (
        [p for p in participants if labels[p]],
        [p for p in participants if not labels[p]],
    ):
        shuffled = [stratum[j] for j in rng.permutation(len(stratum))]
        # deal round-robin so fold sizes differ by at most one per stratum
        for idx, p in enumerate(shuffled):
            folds[idx % k].append(p)

    splits = []
    for i in range(k):
        test = frozenset(folds[i])
        train = frozenset(p for j, fold in enumerate(folds) if j != i for p in fold)
        splits.append(Split(train=train, validation=frozenset(), test=test, seed=seed))
    return splits


def samples_in(records: list[SampleRecord], participant_ids) -> list[SampleRecord]:
    ids = set(participant_ids)
    return [r for r in records if r.participant_id in ids]

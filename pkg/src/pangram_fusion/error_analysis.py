"""Cohort-level error diagnosis.

A small CART-style tree partitions the test set on demographics (age,
sex, ethnicity, true label), greedily minimizing the weighted Gini
impurity of the misclassification indicator; every node is annotated with
its error rate and its share of all test errors (error coverage).
Heatmaps cross two demographics and report the same statistics per cell.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import SampleRecord

FEATURE_ORDER = ("age", "sex", "ethnicity", "label")

DEFAULT_MAX_DEPTH = 4
DEFAULT_MIN_LEAF = 10
DEFAULT_AGE_BINS = 8


def _feature_value(record: SampleRecord, feature: str):
    if feature == "age":
        return record.age
    if feature == "sex":
        return None if record.sex in (None, "unknown") else record.sex
    if feature == "ethnicity":
        return None if record.ethnicity in (None, "unknown") else record.ethnicity
    if feature == "label":
        return record.label
    raise ValueError(f"unknown attribute {feature!r}")


@dataclass
class ErrorTreeNode:
    n: int
    errors: int
    error_rate: float
    error_coverage: float
    split_feature: str | None = None
    split_threshold: float | None = None
    split_categories: tuple | None = None
    routed_missing: int = 0
    children: list["ErrorTreeNode"] = field(default_factory=list)

    def to_dict(self) -> dict:
        doc = {
            "n": self.n,
            "errors": self.errors,
            "error_rate": self.error_rate,
            "error_coverage": self.error_coverage,
        }
        if self.children:
            doc["split"] = {
                "feature": self.split_feature,
                "threshold": self.split_threshold,
                "categories": (
                    list(self.split_categories) if self.split_categories else None
                ),
                "routed_missing": self.routed_missing,
            }
            doc["children"] = [c.to_dict() for c in self.children]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def render(self, indent: int = 0) -> str:
        pad = "  " * indent
        line = (f"{pad}[n={self.n} errors={self.errors} "
                f"rate={100 * self.error_rate:.2f}% "
                f"coverage={100 * self.error_coverage:.2f}%]")
        if not self.children:
            return line
        if self.split_threshold is not None:
            cond = f"{self.split_feature} <= {self.split_threshold:g}"
        else:
            cats = ",".join(self.split_categories)
            cond = f"{self.split_feature} in {{{cats}}}"
        out = [line + f"  split: {cond}"]
        out.append(self.children[0].render(indent + 1))
        out.append(self.children[1].render(indent + 1))
        return "\n".join(out)

    def leaves(self) -> list["ErrorTreeNode"]:
        if not self.children:
            return [self]
        return [leaf for child in self.children for leaf in child.leaves()]


def _gini(errors: int, n: int) -> float:
    if n == 0:
        return 0.0
    p = errors / n
    return 2.0 * p * (1.0 - p)


def _candidate_splits(records, idx, feature):
    """Yield (go_left boolean array over idx, threshold, categories)."""
    values = [_feature_value(records[i], feature) for i in idx]
    present = [v for v in values if v is not None]
    if not present:
        return
    if feature == "age":
        levels = sorted(set(present))
        for lo, hi in zip(levels, levels[1:]):
            threshold = (lo + hi) / 2.0
            mask = np.array(
                [v is not None and v <= threshold for v in values], dtype=bool
            )
            yield mask, threshold, None
    else:
        for category in sorted(set(present)):
            mask = np.array([v == category for v in values], dtype=bool)
            yield mask, None, (category,)


def build_error_tree(
    records: list[SampleRecord],
    correct,
    max_depth: int = DEFAULT_MAX_DEPTH,
    min_leaf: int = DEFAULT_MIN_LEAF,
) -> ErrorTreeNode:
    """Greedy binary error tree over demographics.

    Splits minimize the weighted Gini impurity of the error indicator;
    ties break by feature order (age, sex, ethnicity, label) then by the
    lower threshold / earlier category.  Records missing the split value
    are routed to the child with more samples.
    """
    correct = np.asarray(correct, dtype=bool)
    if len(records) != len(correct):
        raise ValueError("records and correctness flags must align")
    if len(records) < min_leaf:
        raise ValueError(f"need at least min_leaf={min_leaf} samples")
    if not any(
        _feature_value(r, f) is not None for r in records for f in FEATURE_ORDER
    ):
        raise ValueError("no demographic features present")
    total_errors = int(np.sum(~correct))
    wrong = ~correct

    def make_node(idx: np.ndarray, depth: int) -> ErrorTreeNode:
        n = len(idx)
        errors = int(wrong[idx].sum())
        node = ErrorTreeNode(
            n=n,
            errors=errors,
            error_rate=errors / n if n else 0.0,
            error_coverage=errors / total_errors if total_errors else 0.0,
        )
        if depth >= max_depth or n < 2 * min_leaf or _gini(errors, n) == 0.0:
            return node

        best = None  # (impurity, feature_rank, threshold_or_cat, ...)
        for f_rank, feature in enumerate(FEATURE_ORDER):
            for mask, threshold, cats in _candidate_splits(records, idx, feature):
                missing = np.array(
                    [_feature_value(records[i], feature) is None for i in idx],
                    dtype=bool,
                )
                left = mask.copy()
                right = ~mask & ~missing
                # missing values follow the larger child
                n_missing = int(missing.sum())
                if n_missing:
                    if left.sum() >= right.sum():
                        left |= missing
                    else:
                        right |= missing
                nl, nr = int(left.sum()), int(right.sum())
                if nl < min_leaf or nr < min_leaf:
                    continue
                el = int(wrong[idx[left]].sum())
                er = int(wrong[idx[right]].sum())
                impurity = (nl * _gini(el, nl) + nr * _gini(er, nr)) / n
                sort_key = threshold if threshold is not None else cats
                cand = (impurity, f_rank, sort_key)
                if best is None or cand < best[0:3]:
                    best = (impurity, f_rank, sort_key, feature, threshold,
                            cats, left, right, n_missing)
        if best is None:
            return node
        (impurity, _, _, feature, threshold, cats, left, right, n_missing) = best
        if impurity >= _gini(errors, n):
            return node  # no improvement
        node.split_feature = feature
        node.split_threshold = threshold
        node.split_categories = cats
        node.routed_missing = n_missing
        node.children = [
            make_node(idx[left], depth + 1),
            make_node(idx[right], depth + 1),
        ]
        return node

    return make_node(np.arange(len(records)), 0)


@dataclass
class HeatmapCell:
    value_a: str
    value_b: str
    n: int
    errors: int
    error_rate: float | None
    error_coverage: float | None


def _bin_values(records, attr, n_bins):
    """Map each record to a category label for the heatmap axis."""
    raw = [_feature_value(r, attr) for r in records]
    if attr != "age":
        return [v if v is not None else None for v in raw]
    present = [v for v in raw if v is not None]
    if not present:
        return [None] * len(raw)
    lo, hi = min(present), max(present)
    if hi == lo:
        return [f"{lo:.1f}" if v is not None else None for v in raw]
    edges = np.linspace(lo, hi, n_bins + 1)
    labels = [f"{edges[i]:.1f}-{edges[i + 1]:.1f}" for i in range(n_bins)]
    out = []
    for v in raw:
        if v is None:
            out.append(None)
        else:
            b = min(int((v - lo) / (hi - lo) * n_bins), n_bins - 1)
            out.append(labels[b])
    return out


def heatmap_matrix(
    records: list[SampleRecord],
    correct,
    attr_a: str,
    attr_b: str,
    n_bins: int = DEFAULT_AGE_BINS,
) -> list[HeatmapCell]:
    """Error statistics over the cross product of two demographics.

    Numeric attributes are binned into equal-width intervals; records
    missing either attribute are skipped; empty cells carry None rates.
    """
    for attr in (attr_a, attr_b):
        if attr not in FEATURE_ORDER:
            raise ValueError(f"unknown attribute {attr!r}")
    correct = np.asarray(correct, dtype=bool)
    if len(records) != len(correct):
        raise ValueError("records and correctness flags must align")
    vals_a = _bin_values(records, attr_a, n_bins)
    vals_b = _bin_values(records, attr_b, n_bins)
    total_errors = int(np.sum(~correct))

    counts: dict[tuple[str, str], list[int]] = {}
    for va, vb, ok in zip(vals_a, vals_b, correct):
        if va is None or vb is None:
            continue
        key = (va, vb)
        if key not in counts:
            counts[key] = [0, 0]
        counts[key][0] += 1
        counts[key][1] += 0 if ok else 1

    levels_a = sorted({k[0] for k in counts})
    levels_b = sorted({k[1] for k in counts})
    cells = []
    for va in levels_a:
        for vb in levels_b:
            n, errors = counts.get((va, vb), (0, 0))
            cells.append(
                HeatmapCell(
                    value_a=va,
                    value_b=vb,
                    n=n,
                    errors=errors,
                    error_rate=errors / n if n else None,
                    error_coverage=(
                        errors / total_errors if (n and total_errors) else None
                    ),
                )
            )
    return cells


def write_heatmap_csv(cells: list[HeatmapCell], attr_a: str, attr_b: str, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{attr_a},{attr_b},n,errors,error_rate,error_coverage\n")
        for c in cells:
            rate = "" if c.error_rate is None else f"{c.error_rate!r}"
            cov = "" if c.error_coverage is None else f"{c.error_coverage!r}"
            fh.write(f"{c.value_a},{c.value_b},{c.n},{c.errors},{rate},{cov}\n")

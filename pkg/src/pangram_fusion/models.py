"""Forward/backward computation for the screening classifiers.

Three architectures, all trained by explicit analytic gradients (no
autodiff): plain classifiers (shallow linear or one-hidden-layer ANN),
single-projection fusion (source embedding projected into the target
embedding space, L2-normalized, summed, classified) and shared-space
fusion (every modality projected into one latent space).

The fusion objective is a weighted sum of prediction (BCE), cosine
alignment, and reconstruction terms; the reconstruction metric is one of
mse / l1 / kl.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REC_METRICS = ("mse", "l1", "kl")
PROB_CLAMP = 1e-7


# ---------------------------------------------------------------------------
# parameter containers and initialization
# ---------------------------------------------------------------------------

@dataclass
class ClassifierSpec:
    variant: str  # "shallow" | "ann"
    in_dim: int
    hidden: int = 64

    def __post_init__(self):
        if self.variant not in ("shallow", "ann"):
            raise ValueError(f"unknown classifier variant {self.variant!r}")


@dataclass
class LossWeights:
    """Relative weights of the three objective terms.

    The composite loss is the weight-normalized sum
    (pred*bce + cos*cos_loss + rec*rec_loss) / (pred + cos + rec),
    i.e. only the ratios matter; a term with zero weight contributes
    neither loss nor gradient.
    """

    pred: float = 1.0
    cos: float = 0.0
    rec: float = 0.0

    def __post_init__(self):
        for v in (self.pred, self.cos, self.rec):
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weights must be finite and >= 0, got {self}")

    @property
    def scale(self) -> float:
        total = self.pred + self.cos + self.rec
        return 1.0 / total if total > 0 else 0.0


@dataclass
class FusionSpec:
    d_src: int
    d_tgt: int
    decision: ClassifierSpec
    loss_weights: LossWeights
    rec_metric: str = "mse"
    renormalize_after_sum: bool = False

    def __post_init__(self):
        if self.rec_metric not in REC_METRICS:
            raise ValueError(f"unknown rec_metric {self.rec_metric!r}")
        if self.decision.in_dim != self.d_tgt:
            raise ValueError("decision head must act on the target space")


@dataclass
class SharedSpec:
    modality_dims: dict[str, int]
    d_shared: int
    decision: ClassifierSpec
    loss_weights: LossWeights
    rec_metric: str = "mse"
    renormalize_after_sum: bool = False

    def __post_init__(self):
        if self.rec_metric not in REC_METRICS:
            raise ValueError(f"unknown rec_metric {self.rec_metric!r}")
        if len(self.modality_dims) < 2:
            raise ValueError("shared-space fusion needs at least two modalities")
        if self.decision.in_dim != self.d_shared:
            raise ValueError("decision head must act on the shared space")


@dataclass
class ClassifierParams:
    spec: ClassifierSpec
    arrays: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class FusionParams:
    spec: FusionSpec
    arrays: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class SharedParams:
    spec: SharedSpec
    arrays: dict[str, np.ndarray] = field(default_factory=dict)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_classifier_arrays(spec: ClassifierSpec, rng, prefix="") -> dict[str, np.ndarray]:
    d, h = spec.in_dim, spec.hidden
    if spec.variant == "shallow":
        return {
            prefix + "w": _uniform(rng, (d,), d),
            prefix + "b": np.zeros(()),
        }
    return {
        prefix + "W1": _uniform(rng, (h, d), d),
        prefix + "b1": np.zeros(h),
        prefix + "w2": _uniform(rng, (h,), h),
        prefix + "b2": np.zeros(()),
    }


def init_params(spec, seed: int):
    """Draw weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero."""
    rng = np.random.default_rng(seed)
    if isinstance(spec, ClassifierSpec):
        return ClassifierParams(spec, _init_classifier_arrays(spec, rng))
    if isinstance(spec, FusionSpec):
        arrays = {
            "W_proj": _uniform(rng, (spec.d_tgt, spec.d_src), spec.d_src),
            "b_proj": np.zeros(spec.d_tgt),
            "W_rec": _uniform(rng, (spec.d_src, spec.d_tgt), spec.d_tgt),
            "b_rec": np.zeros(spec.d_src),
        }
        arrays.update(_init_classifier_arrays(spec.decision, rng, prefix="decision."))
        return FusionParams(spec, arrays)
    if isinstance(spec, SharedSpec):
        arrays = {}
        for name in sorted(spec.modality_dims):
            d_m = spec.modality_dims[name]
            arrays[f"proj.{name}.W"] = _uniform(rng, (spec.d_shared, d_m), d_m)
            arrays[f"proj.{name}.b"] = np.zeros(spec.d_shared)
            arrays[f"rec.{name}.W"] = _uniform(rng, (d_m, spec.d_shared), spec.d_shared)
            arrays[f"rec.{name}.b"] = np.zeros(d_m)
        arrays.update(_init_classifier_arrays(spec.decision, rng, prefix="decision."))
        return SharedParams(spec, arrays)
    raise TypeError(f"unknown spec type {type(spec)!r}")


def clone_params(params):
    return type(params)(params.spec, {k: v.copy() for k, v in params.arrays.items()})


def zero_grads_like(params) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.arrays.items()}


# ---------------------------------------------------------------------------
# shared numeric pieces
# ---------------------------------------------------------------------------

def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _rows(x, dim, what):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"{what}: expected width {dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what}: non-finite input")
    return x, single


def _unit_rows(x):
    """Row-wise L2 normalization; zero rows pass through unchanged."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe, norms[:, 0]


def _unit_rows_backward(grad_out, unit, norms):
    """Backprop through row-wise L2 normalization (identity on zero rows)."""
    safe = np.where(norms > 0, norms, 1.0)[:, None]
    dot = np.sum(grad_out * unit, axis=1, keepdims=True)
    grad_in = (grad_out - dot * unit) / safe
    zero = norms == 0
    if zero.any():
        grad_in[zero] = grad_out[zero]
    return grad_in


def _bce(prob, y):
    clamped = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(y * np.log(clamped) + (1.0 - y) * np.log1p(-clamped))


def _bce_dz(prob, y):
    """d(BCE)/d(logit) = prob - y.

    This is the gradient of the unclamped objective; the clamp protects
    only the loss value, so saturated predictions still receive a
    restoring gradient.
    """
    return prob - y


def _softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def _rec_forward(x_hat, x_ref, metric):
    err = x_hat - x_ref
    if metric == "mse":
        return np.mean(err**2, axis=1)
    if metric == "l1":
        return np.mean(np.abs(err), axis=1)
    log_p = _log_softmax_rows(x_ref)
    log_q = _log_softmax_rows(x_hat)
    return np.sum(np.exp(log_p) * (log_p - log_q), axis=1)


def _rec_backward(x_hat, x_ref, metric):
    """d(rec_i)/d(x_hat) rows (not yet scaled by the batch mean)."""
    err = x_hat - x_ref
    d = x_hat.shape[1]
    if metric == "mse":
        return 2.0 * err / d
    if metric == "l1":
        return np.sign(err) / d
    p = _softmax_rows(x_ref)
    q = _softmax_rows(x_hat)
    return q - p


# ---------------------------------------------------------------------------
# plain classifiers
# ---------------------------------------------------------------------------

def _decision_forward(arrays, spec: ClassifierSpec, x, prefix=""):
    if spec.variant == "shallow":
        z = x @ arrays[prefix + "w"] + arrays[prefix + "b"]
        cache = {}
    else:
        pre = x @ arrays[prefix + "W1"].T + arrays[prefix + "b1"]
        hid = np.maximum(pre, 0.0)
        z = hid @ arrays[prefix + "w2"] + arrays[prefix + "b2"]
        cache = {"pre": pre, "hid": hid}
    return z, cache


def _decision_backward(arrays, spec, x, cache, dz, grads, prefix=""):
    """Accumulate decision-head gradients; returns gradient w.r.t. x."""
    if spec.variant == "shallow":
        grads[prefix + "w"] += x.T @ dz
        grads[prefix + "b"] += dz.sum()
        return np.outer(dz, arrays[prefix + "w"])
    dhid = np.outer(dz, arrays[prefix + "w2"])
    dpre = dhid * (cache["pre"] > 0)
    grads[prefix + "w2"] += cache["hid"].T @ dz
    grads[prefix + "b2"] += dz.sum()
    grads[prefix + "W1"] += dpre.T @ x
    grads[prefix + "b1"] += dpre.sum(axis=0)
    return dpre @ arrays[prefix + "W1"]


def forward_classifier(params: ClassifierParams, x):
    """Probability of the positive class; accepts a vector or a batch."""
    X, single = _rows(x, params.spec.in_dim, "classifier input")
    z, _ = _decision_forward(params.arrays, params.spec, X)
    prob = _sigmoid(z)
    return float(prob[0]) if single else prob


def backward_classifier(params: ClassifierParams, X, y):
    """Mean-BCE loss and gradients over a batch."""
    X, _ = _rows(X, params.spec.in_dim, "classifier input")
    y = np.asarray(y, dtype=float)
    if len(y) != len(X):
        raise ValueError("labels must align with the batch")
    if len(y) == 0:
        raise ValueError("empty batch")
    z, cache = _decision_forward(params.arrays, params.spec, X)
    prob = _sigmoid(z)
    loss = float(np.mean(_bce(prob, y)))
    grads = zero_grads_like(params)
    dz = _bce_dz(prob, y) / len(y)
    _decision_backward(params.arrays, params.spec, X, cache, dz, grads)
    return {"total": loss, "bce": loss, "cos": 0.0, "rec": 0.0}, grads


# ---------------------------------------------------------------------------
# single-projection fusion
# ---------------------------------------------------------------------------

def forward_fusion(params: FusionParams, x_src, x_tgt):
    """Project, normalize, sum, classify.

    Returns (probability, intermediates); intermediates carry everything
    the loss and backward pass reuse.
    """
    spec = params.spec
    Xs, single = _rows(x_src, spec.d_src, "source embedding")
    Xt, single_t = _rows(x_tgt, spec.d_tgt, "target embedding")
    if len(Xs) != len(Xt) or single != single_t:
        raise ValueError("source/target batches must align")
    a = params.arrays

    proj = Xs @ a["W_proj"].T + a["b_proj"]
    src_unit, src_norm = _unit_rows(proj)
    tgt_unit, tgt_norm = _unit_rows(Xt)
    summed = src_unit + tgt_unit
    if spec.renormalize_after_sum:
        fused, sum_norm = _unit_rows(summed)
    else:
        fused, sum_norm = summed, None
    z, dec_cache = _decision_forward(a, spec.decision, fused, prefix="decision.")
    prob = _sigmoid(z)
    inter = {
        "proj": proj,
        "src_unit": src_unit,
        "src_norm": src_norm,
        "tgt_unit": tgt_unit,
        "tgt_norm": tgt_norm,
        "summed": summed,
        "fused": fused,
        "sum_norm": sum_norm,
        "dec_cache": dec_cache,
        "prob": prob,
        "single": single,
    }
    return (float(prob[0]) if single else prob), inter


def loss_fusion(params: FusionParams, inter, x_src, x_tgt, y):
    """Per-batch mean of the three-part objective.

    Returns (total, bce, cos, rec).  Zero-norm projections score a cosine
    term of 1 (orthogonality convention) and set the ``degenerate_cos``
    flag in the intermediates.
    """
    spec = params.spec
    Xs, _ = _rows(x_src, spec.d_src, "source embedding")
    Xt, _ = _rows(x_tgt, spec.d_tgt, "target embedding")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    w = spec.loss_weights
    a = params.arrays

    bce = _bce(inter["prob"], y)
    denom = inter["src_norm"] * inter["tgt_norm"]
    degenerate = denom == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(
            degenerate, 0.0, np.sum(inter["proj"] * Xt, axis=1) / np.where(denom > 0, denom, 1.0)
        )
    cos_loss = np.where(degenerate, 1.0, 1.0 - cos)
    inter["degenerate_cos"] = bool(degenerate.any())

    x_hat = inter["proj"] @ a["W_rec"].T + a["b_rec"]
    inter["x_hat"] = x_hat
    rec = _rec_forward(x_hat, Xs, spec.rec_metric)

    total = w.scale * (w.pred * bce + w.cos * cos_loss + w.rec * rec)
    return (
        float(total.mean()),
        float(bce.mean()),
        float(cos_loss.mean()),
        float(rec.mean()),
    )


def backward_fusion(params: FusionParams, batch):
    """Analytic gradients of the mean total loss over a (Xs, Xt, y) batch."""
    Xs, Xt, y = batch
    spec = params.spec
    Xs, _ = _rows(Xs, spec.d_src, "source embedding")
    Xt, _ = _rows(Xt, spec.d_tgt, "target embedding")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if len(y) == 0:
        raise ValueError("empty batch")
    a = params.arrays
    w = spec.loss_weights
    B = len(y)

    _, inter = forward_fusion(params, Xs, Xt)
    components = loss_fusion(params, inter, Xs, Xt, y)
    grads = zero_grads_like(params)
    scale = w.scale

    # prediction term
    dz = scale * w.pred * _bce_dz(inter["prob"], y) / B
    dfused = _decision_backward(a, spec.decision, inter["fused"],
                                inter["dec_cache"], dz, grads, prefix="decision.")
    if spec.renormalize_after_sum:
        dsummed = _unit_rows_backward(dfused, inter["fused"], inter["sum_norm"])
    else:
        dsummed = dfused
    dproj = _unit_rows_backward(dsummed, inter["src_unit"], inter["src_norm"])

    # cosine term: operands are the raw projection and the raw target
    if w.cos != 0.0:
        denom = inter["src_norm"] * inter["tgt_norm"]
        ok = denom > 0
        if ok.any():
            safe = np.where(ok, denom, 1.0)[:, None]
            cos_val = np.sum(inter["proj"] * Xt, axis=1, keepdims=True) / safe
            # d(cos)/d(proj); the loss contributes its negative
            dcos = (Xt / safe - cos_val * inter["proj"]
                    / np.where(ok, inter["src_norm"] ** 2, 1.0)[:, None])
            dcos[~ok] = 0.0
            dproj -= (scale * w.cos / B) * dcos
    # reconstruction term
    if w.rec != 0.0:
        dxhat = (scale * w.rec / B) * _rec_backward(inter["x_hat"], Xs, spec.rec_metric)
        grads["W_rec"] += dxhat.T @ inter["proj"]
        grads["b_rec"] += dxhat.sum(axis=0)
        dproj += dxhat @ a["W_rec"]

    grads["W_proj"] += dproj.T @ Xs
    grads["b_proj"] += dproj.sum(axis=0)
    comp = {"total": components[0], "bce": components[1],
            "cos": components[2], "rec": components[3]}
    return comp, grads


# ---------------------------------------------------------------------------
# shared-space fusion
# ---------------------------------------------------------------------------

def forward_shared(params: SharedParams, inputs: dict):
    """Every modality projected to the shared space, normalized, summed."""
    spec = params.spec
    a = params.arrays
    names = sorted(spec.modality_dims)
    if sorted(inputs) != names:
        raise ValueError(f"expected modalities {names}, got {sorted(inputs)}")
    mats = {}
    single = None
    for name in names:
        X, s = _rows(inputs[name], spec.modality_dims[name], f"modality {name!r}")
        if single is None:
            single = s
        elif s != single or len(X) != len(next(iter(mats.values()))):
            raise ValueError("modalities must share batch shape")
        mats[name] = X

    proj = {n: mats[n] @ a[f"proj.{n}.W"].T + a[f"proj.{n}.b"] for n in names}
    units, norms = {}, {}
    for n in names:
        units[n], norms[n] = _unit_rows(proj[n])
    summed = np.sum([units[n] for n in names], axis=0)
    if spec.renormalize_after_sum:
        fused, sum_norm = _unit_rows(summed)
    else:
        fused, sum_norm = summed, None
    z, dec_cache = _decision_forward(a, spec.decision, fused, prefix="decision.")
    prob = _sigmoid(z)
    inter = {
        "mats": mats,
        "proj": proj,
        "units": units,
        "norms": norms,
        "summed": summed,
        "fused": fused,
        "sum_norm": sum_norm,
        "dec_cache": dec_cache,
        "prob": prob,
        "single": single,
    }
    return (float(prob[0]) if single else prob), inter


def loss_shared(params: SharedParams, inter, y):
    spec = params.spec
    a = params.arrays
    names = sorted(spec.modality_dims)
    w = spec.loss_weights
    y = np.atleast_1d(np.asarray(y, dtype=float))

    bce = _bce(inter["prob"], y)

    pairs = [(i, j) for i in range(len(names)) for j in range(i + 1, len(names))]
    cos_terms = []
    for i, j in pairs:
        ni, nj = names[i], names[j]
        denom = inter["norms"][ni] * inter["norms"][nj]
        ok = denom > 0
        cos = np.where(
            ok,
            np.sum(inter["proj"][ni] * inter["proj"][nj], axis=1)
            / np.where(ok, denom, 1.0),
            0.0,
        )
        cos_terms.append(np.where(ok, 1.0 - cos, 1.0))
    cos_loss = np.mean(cos_terms, axis=0)

    recs = []
    x_hats = {}
    for n in names:
        x_hat = inter["proj"][n] @ a[f"rec.{n}.W"].T + a[f"rec.{n}.b"]
        x_hats[n] = x_hat
        recs.append(_rec_forward(x_hat, inter["mats"][n], spec.rec_metric))
    rec = np.mean(recs, axis=0)
    inter["x_hats"] = x_hats

    total = w.scale * (w.pred * bce + w.cos * cos_loss + w.rec * rec)
    return (
        float(total.mean()),
        float(bce.mean()),
        float(cos_loss.mean()),
        float(rec.mean()),
    )


def backward_shared(params: SharedParams, inputs: dict, y):
    spec = params.spec
    a = params.arrays
    names = sorted(spec.modality_dims)
    w = spec.loss_weights
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if len(y) == 0:
        raise ValueError("empty batch")
    B = len(y)

    _, inter = forward_shared(params, inputs)
    components = loss_shared(params, inter, y)
    grads = zero_grads_like(params)
    wscale = w.scale

    dz = wscale * w.pred * _bce_dz(inter["prob"], y) / B
    dfused = _decision_backward(a, spec.decision, inter["fused"],
                                inter["dec_cache"], dz, grads, prefix="decision.")
    if spec.renormalize_after_sum:
        dsummed = _unit_rows_backward(dfused, inter["fused"], inter["sum_norm"])
    else:
        dsummed = dfused

    dproj = {
        n: _unit_rows_backward(dsummed, inter["units"][n], inter["norms"][n])
        for n in names
    }

    if w.cos != 0.0:
        pairs = [(i, j) for i in range(len(names)) for j in range(i + 1, len(names))]
        scale = wscale * w.cos / (B * len(pairs))
        for i, j in pairs:
            ni, nj = names[i], names[j]
            pi, pj = inter["proj"][ni], inter["proj"][nj]
            denom = inter["norms"][ni] * inter["norms"][nj]
            ok = denom > 0
            safe = np.where(ok, denom, 1.0)[:, None]
            cos_val = np.sum(pi * pj, axis=1, keepdims=True) / safe
            # d(cos)/d(p_i) and d(cos)/d(p_j); the loss contributes negatives
            di = (pj / safe - cos_val * pi
                  / np.where(ok, inter["norms"][ni] ** 2, 1.0)[:, None])
            dj = (pi / safe - cos_val * pj
                  / np.where(ok, inter["norms"][nj] ** 2, 1.0)[:, None])
            di[~ok] = 0.0
            dj[~ok] = 0.0
            dproj[ni] -= scale * di
            dproj[nj] -= scale * dj

    if w.rec != 0.0:
        scale = wscale * w.rec / (B * len(names))
        for n in names:
            dxhat = scale * _rec_backward(inter["x_hats"][n], inter["mats"][n],
                                          spec.rec_metric)
            grads[f"rec.{n}.W"] += dxhat.T @ inter["proj"][n]
            grads[f"rec.{n}.b"] += dxhat.sum(axis=0)
            dproj[n] += dxhat @ a[f"rec.{n}.W"]

    for n in names:
        grads[f"proj.{n}.W"] += dproj[n].T @ inter["mats"][n]
        grads[f"proj.{n}.b"] += dproj[n].sum(axis=0)

    comp = {"total": components[0], "bce": components[1],
            "cos": components[2], "rec": components[3]}
    return comp, grads


# ---------------------------------------------------------------------------
# feature concatenation
# ---------------------------------------------------------------------------

def concat_features(sets, sample_ids):
    """Column-wise concatenation of feature sets in the given order.

    Column names come back prefixed with their set name; every set must
    cover every requested sample.
    """
    from .dataset import FeatureMatrix, ManifestError

    if not sets:
        raise ValueError("need at least one feature set")
    for fm in sets:
        missing = [s for s in sample_ids if s not in fm.rows]
        if missing:
            raise ManifestError(
                f"feature set {fm.set_name!r} missing samples: {missing[:5]}"
            )
    columns = []
    for fm in sets:
        columns.extend(f"{fm.set_name}.{c}" for c in fm.column_names)
    rows = {
        sid: np.concatenate([fm.rows[sid] for fm in sets]) for sid in sample_ids
    }
    name = "+".join(fm.set_name for fm in sets)
    return FeatureMatrix(set_name=name, column_names=columns, rows=rows)

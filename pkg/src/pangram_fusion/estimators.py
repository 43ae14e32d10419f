"""Scikit-learn style wrappers so the classifiers compose with the wider
ecosystem (pipelines, grid search, cross_val_score).

Both estimators train the underlying network with the package trainer; a
validation slice for AUROC-based model selection is carved from the
training data unless an explicit eval_set is passed to ``fit``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import train_test_split
from sklearn.utils.validation import check_array, check_X_y

from . import trainer as trainer_mod
from .models import ClassifierSpec, FusionSpec, LossWeights
from .trainer import TrainConfig


class _NetClassifierBase(BaseEstimator, ClassifierMixin):
    def _config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            optimizer=self.optimizer,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            beta1=self.beta1,
            beta2=self.beta2,
            use_scheduler=self.use_scheduler,
            scheduler=self.scheduler,
            gamma=self.gamma,
            step_size=self.step_size,
            patience=self.patience,
            num_epochs=self.num_epochs,
            seed=self.seed,
            random_state=self.random_state,
            model=self.model,
            hidden=self.hidden,
            w_pred=getattr(self, "w_pred", 1.0),
            w_cos=getattr(self, "w_cos", 0.0),
            w_rec=getattr(self, "w_rec", 0.0),
            rec_metric=getattr(self, "rec_metric", "mse"),
            renormalize_after_sum=getattr(self, "renormalize_after_sum", False),
        ).validate()

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted")

    def _split_validation(self, X, y, eval_set):
        if eval_set is not None:
            X_val, y_val = eval_set
            return X, y, np.asarray(X_val, dtype=float), np.asarray(y_val)
        X_tr, X_val, y_tr, y_val = train_test_split(
            X, y, test_size=self.validation_fraction,
            random_state=self.random_state, stratify=y,
        )
        return X_tr, y_tr, X_val, y_val

    def predict(self, X):
        proba = self.predict_proba(X)[:, 1]
        return self.classes_[(proba >= 0.5).astype(int)]

    def decision_function(self, X):
        return self.predict_proba(X)[:, 1]


class BaselineNetClassifier(_NetClassifierBase):
    """Shallow or one-hidden-layer classifier over a single feature matrix."""

    def __init__(self, model="ann", hidden=64, batch_size=128, optimizer="sgd",
                 learning_rate=0.1, momentum=0.9, beta1=0.9, beta2=0.999,
                 use_scheduler=False, scheduler="none", gamma=0.9, step_size=10,
                 patience=5, num_epochs=50, seed=0, random_state=0,
                 validation_fraction=0.15):
        self.model = model
        self.hidden = hidden
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.beta1 = beta1
        self.beta2 = beta2
        self.use_scheduler = use_scheduler
        self.scheduler = scheduler
        self.gamma = gamma
        self.step_size = step_size
        self.patience = patience
        self.num_epochs = num_epochs
        self.seed = seed
        self.random_state = random_state
        self.validation_fraction = validation_fraction

    def fit(self, X, y, eval_set=None):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError("binary classification only")
        y01 = (y == self.classes_[1]).astype(int)
        X_tr, y_tr, X_val, y_val = self._split_validation(X, y01, eval_set)
        config = self._config()
        spec = ClassifierSpec(config.model, X.shape[1], hidden=config.hidden)
        self.params_, self.history_ = trainer_mod.train(
            spec, (X_tr, y_tr), (X_val, y_val), config
        )
        return self

    def predict_proba(self, X):
        self._check_fitted()
        X = check_array(X)
        pos = trainer_mod.predict(self.params_, X)
        return np.column_stack([1.0 - pos, pos])


class ProjectionFusionClassifier(_NetClassifierBase):
    """Projection-based fusion classifier over [source | target] columns.

    ``X`` carries both embeddings side by side; ``src_dim`` says where the
    source block ends and the target block begins.
    """

    def __init__(self, src_dim=None, model="ann", hidden=64, batch_size=128,
                 optimizer="sgd", learning_rate=0.1, momentum=0.9, beta1=0.9,
                 beta2=0.999, use_scheduler=False, scheduler="none", gamma=0.9,
                 step_size=10, patience=5, num_epochs=50, seed=0,
                 random_state=0, validation_fraction=0.15, w_pred=1.0,
                 w_cos=0.5, w_rec=0.5, rec_metric="mse",
                 renormalize_after_sum=False):
        self.src_dim = src_dim
        self.model = model
        self.hidden = hidden
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.beta1 = beta1
        self.beta2 = beta2
        self.use_scheduler = use_scheduler
        self.scheduler = scheduler
        self.gamma = gamma
        self.step_size = step_size
        self.patience = patience
        self.num_epochs = num_epochs
        self.seed = seed
        self.random_state = random_state
        self.validation_fraction = validation_fraction
        self.w_pred = w_pred
        self.w_cos = w_cos
        self.w_rec = w_rec
        self.rec_metric = rec_metric
        self.renormalize_after_sum = renormalize_after_sum

    def _split_columns(self, X):
        if not self.src_dim or not (0 < self.src_dim < X.shape[1]):
            raise ValueError(
                f"src_dim must split the columns, got {self.src_dim} "
                f"for width {X.shape[1]}"
            )
        return X[:, : self.src_dim], X[:, self.src_dim :]

    def fit(self, X, y, eval_set=None):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError("binary classification only")
        y01 = (y == self.classes_[1]).astype(int)
        X_tr, y_tr, X_val, y_val = self._split_validation(X, y01, eval_set)
        config = self._config()
        xs, xt = self._split_columns(X_tr)
        vs, vt = self._split_columns(X_val)
        spec = FusionSpec(
            d_src=xs.shape[1],
            d_tgt=xt.shape[1],
            decision=ClassifierSpec(config.model, xt.shape[1],
                                    hidden=config.hidden),
            loss_weights=LossWeights(config.w_pred, config.w_cos, config.w_rec),
            rec_metric=config.rec_metric,
            renormalize_after_sum=config.renormalize_after_sum,
        )
        self.params_, self.history_ = trainer_mod.train(
            spec, ((xs, xt), y_tr), ((vs, vt), y_val), config
        )
        return self

    def predict_proba(self, X):
        self._check_fitted()
        X = check_array(X)
        xs, xt = self._split_columns(X)
        pos = trainer_mod.predict(self.params_, (xs, xt))
        return np.column_stack([1.0 - pos, pos])

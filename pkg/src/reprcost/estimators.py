"""scikit-learn compatible wrappers.

:class:`LinearReLURegressor` trains an ``L``-layer network (``L - 1`` linear
layers, one ReLU layer) with weight decay; :class:`SubspaceProjector` maps
features onto a subspace, the operation under which minimum-cost
interpolants of subspace data are invariant.  Both follow the usual
``n_samples x n_features`` layout.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .netmodel import collapse
from .repcost import SolverOptions, phi_numeric
from .subspace import ProjectionSpec
from .trainer import TrainConfig, rank_metrics, train


class LinearReLURegressor(RegressorMixin, BaseEstimator):
    """Weight-decay regression with a deep-linear-plus-ReLU network.

    Parameters
    ----------
    depth : int
        Total number of layers ``L``; ``L - 1`` of them are linear.
    width : int
        Width of every linear layer (and of the ReLU layer).
    lr, weight_decay, epochs, batch_size, momentum, init_scale
        Optimizer settings, see :class:`reprcost.trainer.TrainConfig`.
    target_loss : float
        Training MSE at or below which the fit counts as interpolating.
    random_state : int
        Seed for initialization and mini-batch order.
    """

    def __init__(
        self,
        depth=3,
        width=40,
        lr=0.05,
        weight_decay=3e-4,
        epochs=15000,
        batch_size=0,
        momentum=0.9,
        init_scale=0.2,
        target_loss=1e-4,
        random_state=0,
    ):
        self.depth = depth
        self.width = width
        self.lr = lr
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.momentum = momentum
        self.init_scale = init_scale
        self.target_loss = target_loss
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            L=self.depth,
            widths=self.width,
            lr=self.lr,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            batch=self.batch_size,
            seed=0 if self.random_state is None else int(self.random_state),
            target_loss=self.target_loss,
            init_scale=self.init_scale,
            momentum=self.momentum,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        result = train(X.T, y, self._config())
        self.train_result_ = result
        self.net_ = result.net
        self.cost_ = result.cost
        self.sv_ratio_ = result.sv_ratio
        self.interpolated_ = result.interpolated
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.net_(X)

    @property
    def effective_weight_(self):
        check_is_fitted(self, "net_")
        return collapse(self.net_).W

    def singular_values(self):
        check_is_fitted(self, "net_")
        return rank_metrics(self.net_)[1]

    def representation_cost(self, L=None, solver_options=None):
        """``Phi_L`` of the fitted network's collapsed weights (default ``L = depth``)."""
        check_is_fitted(self, "net_")
        shallow = collapse(self.net_)
        return phi_numeric(shallow.W, shallow.a, L or self.depth, SolverOptions.from_dict(solver_options))


class SubspaceProjector(TransformerMixin, BaseEstimator):
    """Orthogonal projection onto a subspace.

    With ``basis=None`` the subspace is the span of the training rows
    (after subtracting their mean when ``center=True``, which handles affine
    subspaces); ``n_components`` truncates it to the leading directions.
    """

    def __init__(self, basis=None, n_components=None, center=False, tol=1e-10):
        self.basis = basis
        self.n_components = n_components
        self.center = center
        self.tol = tol

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.offset_ = X.mean(axis=0) if self.center else np.zeros(X.shape[1])
        if self.basis is not None:
            spec = ProjectionSpec(np.asarray(self.basis, dtype=float))
        else:
            _, s, Vt = np.linalg.svd(X - self.offset_, full_matrices=False)
            r = int(np.count_nonzero(s > self.tol * max(s[0], 1e-300)))
            if self.n_components is not None:
                r = min(r, int(self.n_components))
            spec = ProjectionSpec(Vt[: max(r, 1)].T)
        self.spec_ = spec
        self.components_ = spec.basis.T
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_array(X)
        return (X - self.offset_) @ self.spec_.projector + self.offset_

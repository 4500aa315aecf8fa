"""Scikit-learn style wrappers around the reducers.

``fit`` takes the full model (a :class:`StateSpaceModel`, an ``(A, B, C)``
triple or, for :class:`FHIRKA`, a :class:`PoleResidueModel`) and stores the
reduced model in ``reduced_``.  ``predict(t)`` evaluates the reduced impulse
response, and the projection-based reducers also ``transform`` full states
into reduced coordinates.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix, check_horizon, check_state_space
from .baselines import pod_reduce, tlbt_reduce
from .exceptions import DimensionMismatch, H2tfError
from .fhirka import OptimizerConfig, fhirka_run
from .metrics import error_sq, quadrature_error_sq
from .system import PoleResidueModel, modal_decompose


def _h2_error(full, reduced, tf):
    try:
        return float(np.sqrt(error_sq(modal_decompose(full), modal_decompose(reduced), tf)))
    except H2tfError:
        return float(np.sqrt(quadrature_error_sq(full, reduced, tf)))


class _ReducerMixin:
    def predict(self, t):
        """Impulse response of the reduced model at times ``t``, shape ``(len(t), p, m)``."""
        check_is_fitted(self, "reduced_")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([self.reduced_.impulse(ti) for ti in t])

    def score(self, X, y=None):
        """Negative H2(tf) error of the fitted reduced model against ``X``."""
        check_is_fitted(self, "reduced_")
        return -_h2_error(check_state_space(X), self.reduced_, self.tf)


class _ProjectionReducer(_ReducerMixin, TransformerMixin, BaseEstimator):
    def _store(self, full, reduced, W, V):
        self.reduced_ = reduced
        self.n_states_in_ = full.n
        self._W, self._V = W, V
        self.error_ = _h2_error(full, reduced, self.tf)

    def transform(self, X):
        """Project full states (rows of ``X``, shape ``(k, n)``) to reduced coordinates."""
        check_is_fitted(self, "reduced_")
        X = as_matrix(X, "X")
        if X.shape[1] != self.n_states_in_:
            raise DimensionMismatch(f"X has {X.shape[1]} columns, expected {self.n_states_in_}")
        return X @ self._W.T

    def inverse_transform(self, Z):
        """Lift reduced coordinates back to the full state space."""
        check_is_fitted(self, "reduced_")
        Z = as_matrix(Z, "Z")
        return Z @ self._V.T


class POD(_ProjectionReducer):
    """Proper orthogonal decomposition on impulse snapshots over ``[0, tf]``.

    Parameters
    ----------
    order : int
        Reduced order.
    tf : float
        Horizon.
    n_snapshots : int
        Snapshots per input column.

    Attributes
    ----------
    reduced_ : StateSpaceModel
    pod_ : PODData
    error_ : float
        H2(tf) error of the reduced model.
    """

    def __init__(self, order=2, tf=1.0, n_snapshots=200):
        self.order = order
        self.tf = tf
        self.n_snapshots = n_snapshots

    def fit(self, X, y=None):
        full = check_state_space(X)
        reduced, data = pod_reduce(full, check_horizon(self.tf), self.order, self.n_snapshots)
        self.pod_ = data
        self._store(full, reduced, data.basis.T, data.basis)
        return self


class TLBT(_ProjectionReducer):
    """Time-limited balanced truncation.

    Attributes
    ----------
    reduced_ : StateSpaceModel
    balancing_ : BalancingData
    error_ : float
    """

    def __init__(self, order=2, tf=1.0):
        self.order = order
        self.tf = tf

    def fit(self, X, y=None):
        full = check_state_space(X)
        reduced, data = tlbt_reduce(full, check_horizon(self.tf), self.order)
        self.balancing_ = data
        self._store(full, reduced, data.Ti, data.T)
        return self


class FHIRKA(_ReducerMixin, BaseEstimator):
    """Finite-horizon H2-optimal reduction of a SISO model.

    Parameters
    ----------
    order : int
    tf : float
    init : {"auto", "pod", "tlbt", "random", "file"}
        Initialization; ``"file"`` requires ``init_poles`` or ``init_model`` in ``fit``.
    seed : int or None
    max_iters, grad_tol, step_tol : optimizer settings, see :class:`OptimizerConfig`.

    Attributes
    ----------
    result_ : ReductionResult
    reduced_ : StateSpaceModel
        Real realization of the reduced model.
    error_ : float
    converged_ : bool
    """

    def __init__(self, order=2, tf=1.0, init="auto", seed=None, max_iters=200, grad_tol=1e-8, step_tol=1e-10):
        self.order = order
        self.tf = tf
        self.init = init
        self.seed = seed
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.step_tol = step_tol

    def _config(self):
        return OptimizerConfig(
            max_iters=self.max_iters,
            grad_tol=self.grad_tol,
            step_tol=self.step_tol,
            init_source=self.init,
            seed=self.seed,
        )

    def fit(self, X, y=None, init_poles=None, init_model=None):
        full = X if isinstance(X, PoleResidueModel) else check_state_space(X)
        res = fhirka_run(full, self.order, self._config(), self.tf, init_poles=init_poles, init_model=init_model)
        self.result_ = res
        self.reduced_ = res.realization
        self.error_ = res.error
        self.converged_ = res.converged
        return self

    def score(self, X, y=None):
        check_is_fitted(self, "reduced_")
        if isinstance(X, PoleResidueModel):
            return -float(np.sqrt(error_sq(X, self.result_.reduced, self.tf)))
        return super().score(X, y)

"""POD and time-limited balanced truncation on ``[0, tf]``."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from ._validation import check_horizon, check_order, check_state_space
from .exceptions import GramianFailure, RankDeficientSnapshots, TieAtTruncation
from .metrics import time_limited_gramian
from .system import StateSpaceModel


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """State snapshots ``expm(A t_k) B[:, j]`` stacked column-wise.

    ``columns[k]`` is the input column that produced ``X[:, k]``.
    """

    X: np.ndarray
    times: np.ndarray
    columns: np.ndarray


@dataclass(frozen=True, eq=False)
class PODData:
    basis: np.ndarray
    singular_values: np.ndarray
    energy: float
    snapshots: SnapshotSet


@dataclass(frozen=True, eq=False)
class BalancingData:
    """Time-limited Hankel-type singular values and balancing factors.

    ``T`` (n x r) and ``Ti`` (r x n) satisfy ``Ti @ T = I`` and give the
    reduced model ``(Ti A T, Ti B, C T)``.
    """

    singular_values: np.ndarray
    T: np.ndarray
    Ti: np.ndarray
    gramian_fallback: bool = False


def collect_snapshots(model, tf, n_snapshots=200):
    """Impulse-driven state snapshots on a uniform grid of ``n_snapshots`` points
    per input column, propagated exactly by ``expm(A dt)``.
    """
    tf = check_horizon(tf)
    model = check_state_space(model)
    if n_snapshots < 2:
        raise ValueError("need at least two snapshots per input column")
    times = np.linspace(0.0, tf, n_snapshots)
    E = spla.expm(model.A * (times[1] - times[0]))
    X = np.empty((n_snapshots, model.n, model.m))
    x = model.B.copy()
    for k in range(n_snapshots):
        X[k] = x
        x = E @ x
    # columns grouped per input: all times for input 0, then input 1, ...
    stacked = X.transpose(1, 2, 0).reshape(model.n, model.m * n_snapshots)
    cols = np.repeat(np.arange(model.m), n_snapshots)
    return SnapshotSet(stacked, np.tile(times, model.m), cols)


def pod_reduce(model, tf, r, n_snapshots=200):
    """Galerkin projection onto the leading ``r`` POD modes.

    Returns the reduced :class:`StateSpaceModel` and :class:`PODData`.
    """
    model = check_state_space(model)
    r = check_order(r, model.n)
    snaps = collect_snapshots(model, tf, n_snapshots)
    if snaps.X.shape[1] < r:
        raise RankDeficientSnapshots(f"{snaps.X.shape[1]} snapshots cannot span {r} modes")
    U, sv, _ = spla.svd(snaps.X, full_matrices=False)
    tol = sv[0] * max(snaps.X.shape) * np.finfo(float).eps if sv.size else 0.0
    rank = int(np.sum(sv > tol))
    if rank < r:
        raise RankDeficientSnapshots(f"snapshot matrix has numerical rank {rank} < {r}")
    V = U[:, :r]
    energy = float(np.sum(sv[:r] ** 2) / np.sum(sv**2))
    red = StateSpaceModel(V.T @ model.A @ V, V.T @ model.B, model.C @ V)
    return red, PODData(V, sv, energy, snaps)


def tlbt_reduce(model, tf, r, tie_rtol=1e-12):
    """Square-root time-limited balanced truncation to order ``r``.

    Both time-limited Gramians are factored as ``P = S S^T``, ``Q = R R^T``;
    the SVD ``R^T S = U diag(sigma) V^T`` yields the balancing projection.

    Raises
    ------
    GramianFailure
        When a Gramian cannot be computed or is zero.
    TieAtTruncation
        When ``sigma_r`` and ``sigma_{r+1}`` coincide to ``tie_rtol``.
    """
    tf = check_horizon(tf)
    model = check_state_space(model)
    r = check_order(r, model.n)
    P = time_limited_gramian(model, tf, "reachability")
    Q = time_limited_gramian(model, tf, "observability")
    S, R = P.factor(), Q.factor()
    U, sigma, Vh = spla.svd(R.T @ S)
    if sigma.size == 0 or sigma[0] == 0:
        raise GramianFailure("time-limited Hankel singular values vanish")
    if sigma[r - 1] <= np.finfo(float).eps * sigma[0]:
        raise GramianFailure(f"sigma_{r} = {sigma[r - 1]:.3e} is numerically zero")
    if r < sigma.size and sigma[r - 1] - sigma[r] <= tie_rtol * sigma[0]:
        gaps = np.flatnonzero(sigma[:-1] - sigma[1:] > tie_rtol * sigma[0]) + 1
        gaps = np.append(gaps, sigma.size)
        suggestion = int(gaps[np.argmin(np.abs(gaps - r))])
        raise TieAtTruncation(f"sigma_{r} ties with sigma_{r + 1}", suggestion)
    root = 1.0 / np.sqrt(sigma[:r])
    T = S @ Vh[:r].T * root
    Ti = (U[:, :r] * root).T @ R.T
    red = StateSpaceModel(Ti @ model.A @ T, Ti @ model.B, model.C @ T)
    data = BalancingData(sigma, T, Ti, P.fallback or Q.fallback)
    return red, data

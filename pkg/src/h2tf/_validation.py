"""Input validation helpers shared by the estimators and the functional API."""

from numbers import Integral, Real

import numpy as np

from .exceptions import DimensionMismatch


def as_matrix(X, name, dtype=float):
    """Return ``X`` as a finite 2-D array, promoting vectors to columns."""
    arr = np.asarray(X, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_horizon(tf):
    """Validate a time horizon and return it as a float.

    Accepts plain numbers or :class:`h2tf.system.Horizon` instances.
    """
    tf = getattr(tf, "tf", tf)
    if isinstance(tf, bool) or not isinstance(tf, Real):
        raise TypeError(f"horizon must be a real number, got {type(tf).__name__}")
    tf = float(tf)
    if not (np.isfinite(tf) and tf > 0):
        raise ValueError(f"horizon must be positive and finite, got {tf}")
    return tf


def check_order(r, n=None):
    if isinstance(r, bool) or not isinstance(r, Integral) or r < 1:
        raise ValueError(f"reduced order must be a positive integer, got {r!r}")
    if n is not None and r > n:
        raise ValueError(f"reduced order {r} exceeds full order {n}")
    return int(r)


def check_state_space(model):
    """Coerce ``model`` to a :class:`~h2tf.system.StateSpaceModel`.

    ``model`` may already be one, or an ``(A, B, C)`` triple.
    """
    from .system import StateSpaceModel

    if isinstance(model, StateSpaceModel):
        return model
    if isinstance(model, (tuple, list)) and len(model) == 3:
        return StateSpaceModel(*model)
    raise TypeError(
        "expected a StateSpaceModel or an (A, B, C) triple, "
        f"got {type(model).__name__}"
    )


def check_pole_residue(model, siso=False):
    """Return ``model`` as a pole-residue model, diagonalizing state-space input."""
    from .system import PoleResidueModel, StateSpaceModel, modal_decompose

    if isinstance(model, (StateSpaceModel, tuple, list)):
        model = modal_decompose(check_state_space(model))
    if not isinstance(model, PoleResidueModel):
        raise TypeError(f"expected a PoleResidueModel, got {type(model).__name__}")
    if siso and (model.p != 1 or model.m != 1):
        raise DimensionMismatch(
            f"a SISO model is required, got p={model.p}, m={model.m}"
        )
    return model


def check_compatible(g, h):
    if (g.p, g.m) != (h.p, h.m):
        raise DimensionMismatch(
            f"incompatible models: (p, m) = {(g.p, g.m)} vs {(h.p, h.m)}"
        )

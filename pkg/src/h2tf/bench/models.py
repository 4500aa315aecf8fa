"""Model bundles and synthetic benchmark generators."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla

from .._validation import check_state_space
from ..exceptions import DimensionMismatch
from ..system import StateSpaceModel


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """A model plus where it came from.

    ``channels`` holds 0-based ``(output, input)`` indices of the SISO
    subsystem that ``model`` was extracted from, or ``None`` when the model is
    used as loaded.
    """

    model: StateSpaceModel
    name: str
    provenance: dict = field(default_factory=dict)
    channels: tuple = None
    source_model: StateSpaceModel = None

    def __post_init__(self):
        object.__setattr__(self, "model", check_state_space(self.model))
        if self.channels is not None:
            src = self.source_model or self.model
            out, inp = self.channels
            if not (0 <= out < src.p and 0 <= inp < src.m):
                raise DimensionMismatch(
                    f"channel (output={out}, input={inp}) out of range for p={src.p}, m={src.m}"
                )

    @classmethod
    def select(cls, model, name, channels=None, provenance=None):
        """Bundle ``model``, extracting the SISO channel ``(output, input)`` if given."""
        model = check_state_space(model)
        if channels is None:
            return cls(model, name, provenance or {})
        out, inp = channels
        if not (0 <= out < model.p and 0 <= inp < model.m):
            raise DimensionMismatch(
                f"channel (output={out}, input={inp}) out of range for p={model.p}, m={model.m}"
            )
        return cls(model.siso(out, inp), name, provenance or {}, (out, inp), model)


def generate_heat_like(n=197):
    """1-D diffusion with boundary input at the first node and output at the last.

    ``A = (n + 1)^2 tridiag(1, -2, 1)``, ``B = e_1``, ``C = e_n^T``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    h2 = float((n + 1) ** 2)
    A = h2 * (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1))
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = np.zeros((1, n))
    C[0, -1] = 1.0
    return ModelBundle(StateSpaceModel(A, B, C), f"heat{n}", {"generator": "heat_like", "n": n})


def generate_unstable_toy(n_stable=400, n_unstable=2, seed=0):
    """Block-diagonal SISO model with stable and unstable modes.

    Stable poles have real parts ``-10^U(-1, 2)`` (so in ``[-100, -0.1]``); a
    random subset is grouped into conjugate pairs with ``|Im| = 10^U(-1, 1)``.
    Unstable poles are real, uniform in ``[0.1, 1]``.  ``B`` and ``C`` have
    standard normal entries.
    """
    if n_stable < 0 or n_unstable < 0 or n_stable + n_unstable < 1:
        raise ValueError("need n_stable + n_unstable >= 1")
    rng = np.random.default_rng(seed)
    n_pairs = int(rng.binomial(n_stable // 2, 0.5)) if n_stable >= 2 else 0
    n_real = n_stable - 2 * n_pairs
    blocks = []
    for a in -(10.0 ** rng.uniform(-1, 2, size=n_real)):
        blocks.append(np.array([[a]]))
    for a, b in zip(-(10.0 ** rng.uniform(-1, 2, size=n_pairs)), 10.0 ** rng.uniform(-1, 1, size=n_pairs)):
        blocks.append(np.array([[a, b], [-b, a]]))
    for a in rng.uniform(0.1, 1.0, size=n_unstable):
        blocks.append(np.array([[a]]))
    A = spla.block_diag(*blocks)
    n = A.shape[0]
    B = rng.standard_normal((n, 1))
    C = rng.standard_normal((1, n))
    name = f"unstable{n_stable}+{n_unstable}"
    prov = {"generator": "unstable_toy", "n_stable": n_stable, "n_unstable": n_unstable, "seed": seed}
    return ModelBundle(StateSpaceModel(A, B, C), name, prov)

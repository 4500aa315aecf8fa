"""Order sweeps comparing baselines with FHIRKA, and impulse-error traces."""

import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as spla

from .._validation import check_horizon, check_state_space
from ..baselines import pod_reduce, tlbt_reduce
from ..exceptions import DimensionMismatch, H2tfWarning
from ..fhirka import OptimizerConfig, ReductionResult, fhirka_run
from ..metrics import error_sq
from ..system import PoleResidueModel, modal_decompose, realize
from .models import ModelBundle

logger = logging.getLogger(__name__)

SWEEP_METHODS = ("pod", "tlbt", "random")
STATUSES = ("ok", "not_converged", "init_failed", "failed")
FAILED_STATUSES = ("init_failed", "failed")


@dataclass(frozen=True)
class SweepSpec:
    """Orders, horizon and initializations for :func:`run_sweep`.

    Random initializations draw their seed from ``(seed, r)`` so every row is
    reproducible on its own.
    """

    orders: tuple
    tf: float = 1.0
    methods: tuple = SWEEP_METHODS
    config: OptimizerConfig = field(default_factory=OptimizerConfig)
    out: str = None
    seed: int = 0
    n_jobs: int = 1
    n_snapshots: int = 200

    def __post_init__(self):
        orders = tuple(int(r) for r in self.orders)
        if not orders:
            raise ValueError("at least one order is required")
        if len(set(orders)) != len(orders):
            raise ValueError(f"orders must be distinct, got {orders}")
        if min(orders) < 1:
            raise ValueError("orders must be positive")
        methods = tuple(self.methods)
        bad = [m for m in methods if m not in SWEEP_METHODS]
        if bad or not methods:
            raise ValueError(f"methods must be drawn from {SWEEP_METHODS}, got {methods}")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be positive")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "tf", check_horizon(self.tf))


@dataclass(frozen=True)
class SweepRow:
    r: int
    method: str
    status: str
    init_error: float
    final_error: float
    iterations: int
    converged: bool
    reason: str
    max_value_residual: float
    max_hermite_residual: float
    message: str = ""


@dataclass
class ErrorTable:
    """Rows of a sweep; errors are H2(tf) norms, i.e. square roots of ``J``."""

    rows_: list = field(default_factory=list)
    model_name: str = ""

    columns = (
        "r",
        "method",
        "status",
        "init_error",
        "final_error",
        "iterations",
        "converged",
        "reason",
        "max_value_residual",
        "max_hermite_residual",
        "message",
    )

    def rows(self):
        for row in self.rows_:
            yield tuple(getattr(row, c) for c in self.columns)

    def __len__(self):
        return len(self.rows_)

    def select(self, method=None, status=None):
        return [
            row for row in self.rows_
            if (method is None or row.method == method) and (status is None or row.status == status)
        ]

    @property
    def failed(self):
        return [row for row in self.rows_ if row.status in FAILED_STATUSES]


def _row_seed(seed, r):
    return int(np.random.SeedSequence([int(seed), int(r)]).generate_state(1)[0])


def _run_row(task):
    full_ss, full_pr, r, method, spec = task
    nan = math.nan
    config = replace(spec.config, init_source=method, seed=_row_seed(spec.seed, r))
    init_model = None
    if method in ("pod", "tlbt"):
        try:
            if method == "pod":
                init_model, _ = pod_reduce(full_ss, spec.tf, r, spec.n_snapshots)
            else:
                init_model, _ = tlbt_reduce(full_ss, spec.tf, r)
        except Exception as exc:
            logger.info("r=%d %s baseline failed: %s", r, method, exc)
            return SweepRow(r, method, "init_failed", nan, nan, 0, False, "", nan, nan, f"{type(exc).__name__}: {exc}")
    try:
        # the row's status and reason carry what the optimizer would warn about
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", H2tfWarning)
            res = fhirka_run(full_pr, r, config, spec.tf, init_model=init_model)
    except Exception as exc:
        logger.info("r=%d %s FHIRKA failed: %s", r, method, exc)
        init_error = nan
        if init_model is not None:
            try:
                init_error = math.sqrt(error_sq(full_pr, modal_decompose(init_model), spec.tf))
            except Exception:
                pass
        status = "init_failed" if init_model is None and "initial" in str(exc) else "failed"
        return SweepRow(r, method, status, init_error, nan, 0, False, "", nan, nan, f"{type(exc).__name__}: {exc}")
    status = "ok" if res.converged else "not_converged"
    return SweepRow(
        r,
        method,
        status,
        math.sqrt(res.init_J),
        res.error,
        res.iterations,
        res.converged,
        res.reason,
        res.residuals.max_value,
        res.residuals.max_hermite,
    )


def run_sweep(bundle, spec):
    """Run every ``(r, method)`` pair of ``spec`` on a SISO model.

    Failures are recorded as rows with a status instead of aborting the sweep.
    Rows are ordered by ``r`` and then by method as listed in ``spec``.
    """
    model = bundle.model if isinstance(bundle, ModelBundle) else check_state_space(bundle)
    name = bundle.name if isinstance(bundle, ModelBundle) else ""
    if model.p != 1 or model.m != 1:
        raise DimensionMismatch("run_sweep requires a SISO model; select a channel first")
    too_big = [r for r in spec.orders if r >= model.n]
    if too_big:
        raise ValueError(f"orders {too_big} are not below the model order {model.n}")
    full_pr = modal_decompose(model)
    tasks = [(model, full_pr, r, method, spec) for r in spec.orders for method in spec.methods]
    if spec.n_jobs > 1:
        workers = min(spec.n_jobs, len(tasks), os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_row, tasks))
    else:
        rows = [_run_row(t) for t in tasks]
    return ErrorTable(rows, name)


@dataclass(frozen=True, eq=False)
class ImpulseTrace:
    t: np.ndarray
    h: np.ndarray
    h_r: np.ndarray
    error: np.ndarray

    columns = ("t", "h", "h_r", "abs_error")

    def rows(self):
        return zip(self.t.tolist(), self.h.tolist(), self.h_r.tolist(), self.error.tolist())

    def trapezoid_sq(self):
        """Trapezoid approximation of ``int |h - h_r|^2 dt``."""
        return float(np.trapezoid(self.error**2, self.t))


def _as_state_space(model):
    if isinstance(model, ReductionResult):
        return model.realization
    if isinstance(model, ModelBundle):
        return model.model
    if isinstance(model, PoleResidueModel):
        return realize(model)
    return check_state_space(model)


def _propagate(model, E, steps):
    out = np.empty(steps + 1)
    x = model.B[:, 0].copy()
    c = model.C[0]
    for k in range(steps + 1):
        out[k] = c @ x
        x = E @ x
    return out


def impulse_error_trace(bundle, reduced, tf=1.0, dt=None):
    """Pointwise impulse responses and their difference on a uniform grid.

    The grid has ``ceil(tf / dt)`` equal steps (so the step never exceeds
    ``dt``); both responses are propagated exactly with ``expm(A step)``.
    ``dt`` defaults to ``tf / 2000``.
    """
    tf = check_horizon(tf)
    dt = tf / 2000 if dt is None else float(dt)
    if not dt > 0:
        raise ValueError("dt must be positive")
    full, red = _as_state_space(bundle), _as_state_space(reduced)
    for mdl in (full, red):
        if mdl.p != 1 or mdl.m != 1:
            raise DimensionMismatch("impulse traces are defined for SISO models")
    steps = max(1, math.ceil(tf / dt - 1e-9))
    t = np.linspace(0.0, tf, steps + 1)
    step = tf / steps
    h = _propagate(full, spla.expm(full.A * step), steps)
    hr = _propagate(red, spla.expm(red.A * step), steps)
    return ImpulseTrace(t, h, hr, np.abs(h - hr))

"""Finite-horizon IRKA for SISO models.

For fixed reduced poles the squared error is quadratic in the residues,
``J = ||h||^2 - 2 phi^T w + phi^T M phi``, so the optimal residues solve the
``r x r`` system ``M phi = w``.  FHIRKA minimizes the resulting reduced
objective over the poles alone with BFGS and a backtracking line search, and
certifies the result with the interpolation residuals.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_horizon, check_order, check_pole_residue, check_state_space
from .conditions import OptimalityResidual, eval_G_pr, optimality_residuals
from .exceptions import (
    ConjugateClosureViolation,
    DegeneratePoles,
    DimensionMismatch,
    HorizonOverflow,
    IllConditioned,
    LineSearchFailed,
    NegativeError,
    NonDiagonalizable,
    PoleCollision,
    SingularM,
)
from .metrics import _pair_terms, error_sq, norm_sq_pr, phi1, phi2
from .system import PoleResidueModel, StateSpaceModel, modal_decompose, pair_poles, realize

logger = logging.getLogger(__name__)

COLLISION_TOL = 1e-10
ILL_CONDITIONED = 1e12


# -- pole bookkeeping ---------------------------------------------------------


@dataclass(frozen=True)
class PoleParametrization:
    """Map between conjugate-closed poles and a real parameter vector.

    Real poles contribute one parameter, each conjugate pair two (real and
    imaginary part of the member with positive imaginary part).  Poles are
    laid out as ``[reals..., rep_1, conj(rep_1), rep_2, conj(rep_2), ...]``.
    """

    n_real: int
    n_pairs: int

    @classmethod
    def from_poles(cls, poles, tol=1e-10):
        poles = np.asarray(poles, dtype=complex)
        real, pairs, unmatched = pair_poles(poles, tol)
        if unmatched:
            raise ConjugateClosureViolation(f"poles {poles[list(unmatched)]} have no conjugate partner")
        return cls(len(real), len(pairs))

    @property
    def order(self):
        return self.n_real + 2 * self.n_pairs

    @property
    def size(self):
        return self.n_real + 2 * self.n_pairs

    def canonical(self, poles, tol=1e-10):
        """Reorder ``poles`` into the canonical layout with exact conjugates."""
        poles = np.asarray(poles, dtype=complex)
        real, pairs, unmatched = pair_poles(poles, tol)
        if unmatched or len(real) != self.n_real or len(pairs) != self.n_pairs:
            raise ConjugateClosureViolation("poles do not match the parametrization")
        reals = np.sort(poles[list(real)].real)
        reps = sorted((poles[i] for i, _ in pairs), key=lambda z: (z.real, z.imag))
        out = list(reals.astype(complex))
        for z in reps:
            out.extend([z, np.conj(z)])
        return np.array(out, dtype=complex)

    def to_params(self, poles):
        poles = self.canonical(poles)
        reps = poles[self.n_real::2]
        return np.concatenate([poles[: self.n_real].real, np.column_stack([reps.real, reps.imag]).ravel()])

    def to_poles(self, theta):
        theta = np.asarray(theta, dtype=float)
        reals = theta[: self.n_real].astype(complex)
        ab = theta[self.n_real:].reshape(-1, 2)
        reps = ab[:, 0] + 1j * ab[:, 1]
        pairs = np.column_stack([reps, np.conj(reps)]).ravel()
        return np.concatenate([reals, pairs])

    def chain(self, dJ_dlambda):
        """Real-parameter gradient from holomorphic pole derivatives (canonical layout)."""
        g = np.asarray(dJ_dlambda)
        reals = g[: self.n_real].real
        reps = g[self.n_real::2]
        # lambda = a + ib, partner a - ib: dJ/da = 2 Re g, dJ/db = -2 Im g
        return np.concatenate([reals, np.column_stack([2 * reps.real, -2 * reps.imag]).ravel()])

    def param_scale(self, poles, floor):
        """Characteristic magnitude per parameter (pole modulus, floored)."""
        poles = self.canonical(poles)
        mag = np.maximum(np.abs(poles), floor)
        return np.concatenate([mag[: self.n_real], np.repeat(mag[self.n_real::2], 2)])


def _check_distinct(poles, tol=COLLISION_TOL):
    if poles.size < 2:
        return
    d = np.abs(poles[:, None] - poles[None, :])
    d[np.diag_indices(poles.size)] = np.inf
    scale = np.maximum(1.0, np.maximum(np.abs(poles[:, None]), np.abs(poles[None, :])))
    if np.any(d <= tol * scale):
        raise DegeneratePoles(f"reduced poles are not distinct: min gap {d.min():.3e}")


def _siso_full(full):
    full = check_pole_residue(full, siso=True)
    return full, full.siso_residues


# -- residue subproblem -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ResidueSystem:
    """``M phi = w`` for the optimal residues at fixed poles.

    ``M[i, j] = phi1(lambda_i + lambda_j)``, ``w[i] = sum_k psi_k phi1(rho_k + lambda_i)``
    and ``rhs[j] = G(-lambda_j)`` evaluated separately (equal to ``w``).
    """

    poles: np.ndarray
    M: np.ndarray
    w: np.ndarray
    rhs: np.ndarray
    zero_sum_pairs: bool = False

    @property
    def cond(self):
        return float(np.linalg.cond(self.M))


def build_residue_system(full, poles, tf, rtol=1e-10):
    tf = check_horizon(tf)
    full, psi = _siso_full(full)
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    _check_distinct(poles)
    sums = poles[:, None] + poles[None, :]
    M = phi1(sums, tf)
    w = phi1(poles[:, None] + full.poles[None, :], tf) @ psi
    rhs = np.array([eval_G_pr(full, -lam, tf)[0, 0] for lam in poles])
    if not np.allclose(rhs, w, rtol=rtol, atol=rtol * max(np.abs(w).max(initial=0.0), 1e-300)):
        raise AssertionError("G(-lambda) disagrees with the residue right-hand side")
    zero_sum = bool(np.any(np.abs(sums) * tf < 1e-3))
    return ResidueSystem(poles, M, w, rhs, zero_sum)


def _real_basis(poles):
    """``T`` with ``phi = T x`` mapping real ``x`` onto conjugate-closed residues."""
    real, pairs, unmatched = pair_poles(poles, 1e-10)
    if unmatched:
        raise ConjugateClosureViolation(f"poles {poles[list(unmatched)]} have no conjugate partner")
    r = poles.size
    T = np.zeros((r, r), dtype=complex)
    col = 0
    for i in real:
        T[i, col] = 1.0
        col += 1
    for i, j in pairs:
        T[i, col], T[j, col] = 1.0, 1.0
        T[i, col + 1], T[j, col + 1] = 1j, -1j
        col += 2
    return T


@dataclass(frozen=True, eq=False)
class _ResidueSolution:
    phi: np.ndarray
    reduction: float
    cond: float
    rank: int


def _solve_residues(M, w, poles):
    """Minimize ``-2 phi^T w + phi^T M phi`` over conjugate-closed ``phi``.

    In real coordinates ``phi = T x`` the Gram matrix ``T^T M T`` is real
    symmetric positive definite; it is diagonalized and eigenvalues at
    round-off level are dropped.  ``reduction`` is ``b^T M_R^+ b`` so that the
    optimal error is ``||h||^2 - reduction``.
    """
    if poles.size == 0:
        return _ResidueSolution(np.zeros(0, dtype=complex), 0.0, 1.0, 0)
    T = _real_basis(poles)
    MR = (T.T @ M @ T).real
    MR = 0.5 * (MR + MR.T)
    b = (T.T @ w).real
    mu, U = np.linalg.eigh(MR)
    if not mu[-1] > 0:
        raise SingularM("residue Gram matrix is not positive definite")
    keep = mu > 10 * poles.size * np.finfo(float).eps * mu[-1]
    c = U[:, keep].T @ b
    x = U[:, keep] @ (c / mu[keep])
    reduction = math.fsum(c**2 / mu[keep])
    cond = float(mu[-1] / max(mu[0], np.finfo(float).tiny)) if mu[0] > 0 else np.inf
    return _ResidueSolution(T @ x, reduction, cond, int(keep.sum()))


def optimal_residues(full, poles, tf, return_system=False):
    """Globally optimal residues for fixed reduced poles.

    Warns with :class:`~h2tf.exceptions.IllConditioned` when ``cond(M) > 1e12``;
    directions at round-off level are then left out of the solve.
    """
    system = build_residue_system(full, poles, tf)
    sol = _solve_residues(system.M, system.w, system.poles)
    if sol.cond > ILL_CONDITIONED:
        warnings.warn(f"residue system condition number {sol.cond:.2e}", IllConditioned, stacklevel=2)
    return (sol.phi, system) if return_system else sol.phi


class _VPContext:
    """Cached full-model data for repeated variable-projection evaluations.

    ``evaluate`` returns ``J`` from the same three-term sum as
    :func:`~h2tf.metrics.error_sq` together with ``noise``, a bound on its
    rounding error from the magnitudes of the summed terms.  Near-cancelling
    residues make that bound large, and the optimizer uses it to refuse
    decreases that are indistinguishable from rounding.
    """

    def __init__(self, full, tf):
        self.full, self.psi = _siso_full(full)
        self.tf = check_horizon(tf)
        hh = _pair_terms(self.full, self.full, self.tf)
        self.norm_sq = norm_sq_pr(self.full, self.tf)
        self.abs_h = float(np.abs(hh).sum())

    def evaluate(self, poles, with_grad=True):
        tf, rho, psi = self.tf, self.full.poles, self.psi
        _check_distinct(poles)
        M = phi1(poles[:, None] + poles[None, :], tf)
        K = phi1(poles[:, None] + rho[None, :], tf) * psi[None, :]
        w = K.sum(axis=1)
        sol = _solve_residues(M, w, poles)
        phi = sol.phi
        cross = phi[:, None] * K
        quad = phi[:, None] * M * phi[None, :]
        J = math.fsum((self.norm_sq, -2.0 * math.fsum(cross.real.ravel()), math.fsum(quad.real.ravel())))
        noise = 8 * np.finfo(float).eps * (self.abs_h + 2 * np.abs(cross).sum() + np.abs(quad).sum())
        if J < 0:
            if -J > 1e3 * noise:
                raise NegativeError(f"J = {J:.3e} (rounding bound {noise:.1e})")
            J = 0.0
        out = {"J": J, "noise": float(noise), "phi": phi, "M": M, "w": w, "cond": sol.cond}
        if with_grad:
            Gp = -phi2(poles[:, None] + rho[None, :], tf) @ psi
            Grp = -phi2(poles[:, None] + poles[None, :], tf) @ phi
            out["dJ_dlambda"] = 2.0 * phi * (Gp - Grp)
            out["hermite_rel"] = np.abs(phi * (Gp - Grp)) / (np.abs(phi * Gp) + 1e-300)
        return out


def objective_vp(full, poles, tf):
    """Variable-projection objective: ``(J(poles, phi*), phi*)``."""
    ctx = _VPContext(full, tf)
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    res = ctx.evaluate(poles, with_grad=False)
    return res["J"], res["phi"]


def pole_gradient_vp(full, poles, tf):
    """Gradient of :func:`objective_vp` in the real pole parametrization.

    The parameter layout is that of :class:`PoleParametrization` built from
    ``poles``: real poles first, then ``(Re, Im)`` of each pair representative.
    """
    param = PoleParametrization.from_poles(poles)
    poles = param.canonical(poles)
    res = _VPContext(full, tf).evaluate(poles)
    return param.chain(res["dJ_dlambda"])


# -- optimizer ----------------------------------------------------------------


@dataclass
class OptimizerConfig:
    """Settings for :func:`fhirka_run`.

    ``grad_tol`` applies to the pole gradient normalized per pole by
    ``2 |phi_k G'(-lambda_k)|``, i.e. to the relative Hermite residual;
    ``step_tol`` to the relative pole change of an accepted step.
    """

    max_iters: int = 200
    grad_tol: float = 1e-8
    step_tol: float = 1e-10
    shrink: float = 0.5
    armijo: float = 1e-4
    max_step: float = 0.5
    init_source: str = "auto"
    seed: int = None
    value_tol: float = 1e-6
    hermite_tol: float = 1e-4
    n_snapshots: int = 200

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        for name in ("grad_tol", "step_tol", "armijo", "max_step", "value_tol", "hermite_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.init_source not in INIT_SOURCES:
            raise ValueError(f"init_source must be one of {INIT_SOURCES}, got {self.init_source!r}")


INIT_SOURCES = ("auto", "pod", "tlbt", "random", "file")


@dataclass(eq=False)
class ReductionResult:
    """Outcome of a FHIRKA run.

    Attributes
    ----------
    reduced
        Reduced model in pole-residue form (SISO).
    realization
        Real block-diagonal state-space realization of ``reduced``.
    J_trace
        Squared error after initialization and after every accepted step.
    init_J
        Squared error of the initial model (its own residues when it came from
        a baseline, otherwise the optimal residues at the initial poles).
    reason
        Termination reason: ``grad_tol``, ``step_tol``, ``stalled``,
        ``max_iters`` or ``line_search_failed``.
    """

    reduced: PoleResidueModel
    realization: StateSpaceModel
    J_trace: list
    residuals: OptimalityResidual
    iterations: int
    converged: bool
    init_J: float
    reason: str
    init_source: str
    init_poles: np.ndarray
    max_cond: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def J(self):
        return self.J_trace[-1]

    @property
    def error(self):
        """Finite-horizon H2 error ``sqrt(J)``."""
        return math.sqrt(self.J)

    @property
    def poles(self):
        return self.reduced.poles

    @property
    def residues(self):
        return self.reduced.siso_residues


def random_poles(r, rng):
    """``r`` stable poles with log-spaced real parts in ``[-10, -0.1]``, some in pairs."""
    n_pairs = int(rng.integers(0, r // 2 + 1))
    n_real = r - 2 * n_pairs
    re = -(10.0 ** rng.uniform(-1, 1, size=n_real + n_pairs))
    im = 10.0 ** rng.uniform(-1, 1, size=n_pairs)
    reps = re[n_real:] + 1j * im
    return np.concatenate([re[:n_real].astype(complex), reps, np.conj(reps)])


def jitter_poles(poles, rng, rel=1e-8):
    """Perturb poles by ``rel`` relative noise, keeping conjugate closure."""
    param = PoleParametrization.from_poles(poles, tol=1e-8)
    theta = param.to_params(param.canonical(poles, tol=1e-8))
    scale = param.param_scale(param.to_poles(theta), 1.0)
    return param.to_poles(theta + rel * scale * rng.standard_normal(theta.size))


def _initial_model(full_ss, r, source, tf, config, rng):
    """Reduced initial model from a baseline, or ``None`` for random poles."""
    from .baselines import pod_reduce, tlbt_reduce

    if source == "auto":
        stable = np.all(np.linalg.eigvals(full_ss.A).real < 0)
        source = "tlbt" if stable else "pod"
    if source == "pod":
        red, _ = pod_reduce(full_ss, tf, r, config.n_snapshots)
        return red, "pod"
    if source == "tlbt":
        red, _ = tlbt_reduce(full_ss, tf, r)
        return red, "tlbt"
    return None, source


def _modal_with_retry(model, rng):
    try:
        return modal_decompose(model)
    except NonDiagonalizable:
        A = model.A + 1e-8 * np.linalg.norm(model.A, 1) * np.diag(rng.standard_normal(model.n))
        return modal_decompose(StateSpaceModel(A, model.B, model.C))


def fhirka_run(full, r, config=None, tf=1.0, init_poles=None, init_model=None):
    """Reduce a SISO model to order ``r`` by finite-horizon IRKA.

    Parameters
    ----------
    full
        SISO :class:`StateSpaceModel` or :class:`PoleResidueModel`.
    r
        Reduced order.
    config
        :class:`OptimizerConfig`; defaults are used when omitted.
    tf
        Horizon.
    init_poles
        Explicit initial poles (overrides ``config.init_source``).
    init_model
        Explicit initial reduced model (pole-residue or state-space).

    Returns
    -------
    ReductionResult
    """
    config = config or OptimizerConfig()
    tf = check_horizon(tf)
    rng = np.random.default_rng(config.seed)

    if isinstance(full, PoleResidueModel):
        full_pr = check_pole_residue(full, siso=True)
        full_ss = None
    else:
        full_ss = check_state_space(full)
        if full_ss.p != 1 or full_ss.m != 1:
            raise DimensionMismatch("fhirka_run requires a SISO model")
        full_pr = modal_decompose(full_ss)
    r = check_order(r, full_pr.r)

    source = config.init_source
    init_J = None
    if init_poles is None and init_model is None:
        if source == "file":
            raise ValueError("init_source='file' requires init_poles or init_model")
        if source in ("auto", "pod", "tlbt"):
            ss = full_ss if full_ss is not None else realize(full_pr)
            try:
                init_model, source = _initial_model(ss, r, source, tf, config, rng)
            except Exception as exc:
                if config.init_source != "auto":
                    raise
                logger.info("baseline init failed (%s); using random poles", exc)
                init_model, source = None, "random"
        if init_model is None:
            init_poles = random_poles(r, rng)
            source = "random"
    elif init_model is not None:
        source = source if source != "auto" else "model"
    else:
        source = "file" if source == "auto" else source

    init_pr = None
    if init_model is not None:
        init_pr = init_model if isinstance(init_model, PoleResidueModel) else _modal_with_retry(check_state_space(init_model), rng)
        if init_pr.r != r:
            raise DimensionMismatch(f"initial model has order {init_pr.r}, expected {r}")
        init_J = error_sq(full_pr, init_pr, tf)
        init_poles = init_pr.poles

    init_poles = np.asarray(init_poles, dtype=complex)
    if init_poles.size != r:
        raise DimensionMismatch(f"expected {r} initial poles, got {init_poles.size}")

    ctx = _VPContext(full_pr, tf)
    param = PoleParametrization.from_poles(init_poles, tol=1e-8)
    poles = param.canonical(init_poles, tol=1e-8)
    try:
        state = ctx.evaluate(poles)
    except (DegeneratePoles, SingularM):
        poles = param.canonical(jitter_poles(poles, rng), tol=1e-8)
        try:
            state = ctx.evaluate(poles)
        except (DegeneratePoles, SingularM) as exc:
            raise PoleCollision(f"initial poles collide: {exc}") from exc

    scale = param.param_scale(poles, 1.0 / tf)
    theta = param.to_params(poles) / scale
    trace = [state["J"]]
    if init_J is None:
        init_J = state["J"]
    max_cond = 0.0

    def grad_of(st):
        return param.chain(st["dJ_dlambda"]) * scale

    def trial(th):
        p = param.to_poles(th * scale)
        try:
            return ctx.evaluate(p)
        except (DegeneratePoles, SingularM, HorizonOverflow, NegativeError, ConjugateClosureViolation,
                FloatingPointError, np.linalg.LinAlgError):
            return None

    g = grad_of(state)
    Hinv = np.eye(theta.size)
    fresh = True
    reason = "max_iters"
    it = 0
    while it < config.max_iters:
        if state["hermite_rel"].max(initial=0.0) <= config.grad_tol:
            reason = "grad_tol"
            break
        d = -Hinv @ g
        if fresh or not float(g @ d) < 0:
            # no curvature information yet: steepest descent at the largest allowed step
            Hinv, fresh = np.eye(theta.size), True
            d = -g * (config.max_step / max(np.abs(g).max(initial=0.0), 1e-300))
        slope = float(g @ d)
        dmax = np.abs(d).max(initial=0.0)
        if dmax > config.max_step:
            d *= config.max_step / dmax
            slope *= config.max_step / dmax
            dmax = config.max_step
        alpha, accepted = 1.0, None
        while alpha * dmax >= config.step_tol:
            cand = trial(theta + alpha * d)
            if (cand is not None and cand["J"] <= state["J"] + config.armijo * alpha * slope
                    and state["J"] - cand["J"] > cand["noise"] + state["noise"]):
                accepted = cand
                break
            alpha *= config.shrink
        if accepted is None:
            if not fresh:
                Hinv, fresh = np.eye(theta.size), True
                continue
            red = PoleResidueModel.from_siso(param.to_poles(theta * scale), state["phi"])
            ok = optimality_residuals(full_pr, red, tf).is_stationary(config.value_tol, config.hermite_tol)
            reason = "stalled" if ok else "line_search_failed"
            break
        it += 1
        step = alpha * d
        theta_new = theta + step
        g_new = grad_of(accepted)
        y = g_new - g
        sy = float(step @ y)
        if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(y):
            if fresh:
                Hinv = (sy / float(y @ y)) * np.eye(theta.size)
            rho = 1.0 / sy
            V = np.eye(theta.size) - rho * np.outer(step, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(step, step)
            fresh = False
        theta, g, state = theta_new, g_new, accepted
        trace.append(state["J"])
        if np.abs(step).max() < config.step_tol:
            reason = "step_tol"
            break

    poles = param.to_poles(theta * scale)
    phi = state["phi"]
    reduced = PoleResidueModel.from_siso(poles, phi)
    residuals = optimality_residuals(full_pr, reduced, tf)
    max_cond = float(state["cond"])
    reverted = False
    if init_pr is not None and trace[-1] > init_J:
        # only possible at round-off level: the initial model is the best iterate
        reduced, trace, it, reverted = init_pr, [float(init_J)], 0, True
        residuals = optimality_residuals(full_pr, reduced, tf)
    if max_cond > ILL_CONDITIONED:
        warnings.warn(f"final residue system condition number {max_cond:.2e}", IllConditioned, stacklevel=2)
    if reason == "line_search_failed":
        warnings.warn("no sufficient decrease at the minimum step; returning the best iterate",
                      LineSearchFailed, stacklevel=2)
    converged = reason != "line_search_failed" and residuals.is_stationary(config.value_tol, config.hermite_tol)
    return ReductionResult(
        reduced=reduced,
        realization=realize(reduced),
        J_trace=trace,
        residuals=residuals,
        iterations=it,
        converged=converged,
        init_J=float(init_J),
        reason=reason,
        init_source=source,
        init_poles=np.asarray(init_poles),
        max_cond=max_cond,
        info={"reverted_to_init": reverted},
    )

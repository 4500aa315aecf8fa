"""Finite-horizon inner products, norms and the squared error ``J``.

Closed forms are sums over pole pairs weighted by the kernel
``phi1(x) = (exp(x tf) - 1) / x``.  Composite Gauss-Legendre quadrature of the
time-domain definition is provided as an independent cross-check, together with
time-limited Gramians.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as spla

from ._validation import check_compatible, check_horizon, check_pole_residue, check_state_space
from .exceptions import (
    ConjugateClosureViolation,
    GramianFailure,
    HorizonOverflow,
    LyapunovIllPosed,
    NegativeError,
    NotConverged,
)
from .system import EXP_OVERFLOW, PoleResidueModel

SERIES_SWITCH = 1e-3
# phi2 cancels as |z|^2, so it switches to its series much later.
PHI2_SERIES_SWITCH = 1.0

_PHI1_COEF = np.array([1.0 / math.factorial(k + 1) for k in range(9)])
_PHI2_COEF = np.array([(j + 1) / math.factorial(j + 2) for j in range(28)])


def _cexpm1(z):
    """``exp(z) - 1`` for complex ``z`` without cancellation near 0."""
    x, y = z.real, z.imag
    em1 = np.expm1(x)
    re = em1 * np.cos(y) - 2.0 * np.sin(0.5 * y) ** 2
    im = np.exp(x) * np.sin(y)
    return re + 1j * im


def _horner(coef, z):
    out = np.full_like(z, coef[-1])
    for c in coef[-2::-1]:
        out = out * z + c
    return out


def _check_overflow(z):
    if z.size and z.real.max() > EXP_OVERFLOW:
        raise HorizonOverflow(
            f"Re(x) * tf = {z.real.max():.1f} exceeds the overflow threshold {EXP_OVERFLOW}"
        )


def phi1(x, tf):
    """``(exp(x tf) - 1) / x`` with the limit ``tf`` at ``x = 0``.

    Vectorized over ``x``; returns a complex scalar for scalar input.
    """
    tf = check_horizon(tf)
    x = np.asarray(x, dtype=complex)
    z = x * tf
    _check_overflow(z)
    out = np.empty_like(z)
    small = np.abs(z) < SERIES_SWITCH
    out[small] = tf * _horner(_PHI1_COEF, z[small])
    big = ~small
    out[big] = _cexpm1(z[big]) / x[big]
    return out[()] if out.ndim == 0 else out


def phi2(x, tf):
    """``((tf x - 1) exp(x tf) + 1) / x^2`` with the limit ``tf^2 / 2`` at 0.

    This is the derivative of :func:`phi1` with respect to ``x``.
    """
    tf = check_horizon(tf)
    x = np.asarray(x, dtype=complex)
    z = x * tf
    _check_overflow(z)
    out = np.empty_like(z)
    small = np.abs(z) < PHI2_SERIES_SWITCH
    out[small] = tf**2 * _horner(_PHI2_COEF, z[small])
    big = ~small
    zb = z[big]
    out[big] = tf**2 * ((zb - 1.0) * np.exp(zb) + 1.0) / zb**2
    return out[()] if out.ndim == 0 else out


def _fsum_complex(terms):
    terms = np.asarray(terms).ravel()
    return complex(math.fsum(terms.real), math.fsum(terms.imag))


def _pair_terms(g, h, tf):
    # entry (i, j): (l_i^g . l_j^h)(r_i^g . r_j^h) phi1(lambda_i + rho_j)
    W = (g.left @ h.left.T) * (g.right @ h.right.T)
    return W * phi1(g.poles[:, None] + h.poles[None, :], tf)


def _realify(value, terms, what):
    scale = max(abs(value), float(np.abs(terms).sum()))
    if abs(value.imag) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise ConjugateClosureViolation(
            f"{what} has imaginary part {value.imag:.3e} (scale {scale:.3e})"
        )
    return value.real


def inner_product_pr(g, h, tf):
    """Finite-horizon inner product ``int_0^tf Tr(h(t)^T g(t)) dt`` in closed form."""
    tf = check_horizon(tf)
    g = check_pole_residue(g)
    h = check_pole_residue(h)
    check_compatible(g, h)
    terms = _pair_terms(g, h, tf)
    return _realify(_fsum_complex(terms), terms, "inner product")


def norm_sq_pr(g, tf):
    """Squared finite-horizon norm of a pole-residue model."""
    val = inner_product_pr(g, g, tf)
    return max(val, 0.0)


def error_sq(full, red, tf, rtol=1e-12):
    """``J = ||h||^2 - 2 <h, h_r> + ||h_r||^2`` over ``[0, tf]``.

    Slightly negative values (within ``rtol`` of the summed term magnitudes,
    which bound the cancellation error) are clamped to zero; anything more negative raises :class:`NegativeError`.
    """
    tf = check_horizon(tf)
    full = check_pole_residue(full)
    red = check_pole_residue(red)
    check_compatible(full, red)
    hh = _pair_terms(full, full, tf)
    hr = _pair_terms(red, full, tf)
    rr = _pair_terms(red, red, tf)
    nh = _realify(_fsum_complex(hh), hh, "||h||^2")
    ip = _realify(_fsum_complex(hr), hr, "<h, h_r>")
    nr = _realify(_fsum_complex(rr), rr, "||h_r||^2")
    J = math.fsum((nh, -2.0 * ip, nr))
    if J < 0:
        scale = max(nh + nr, float(np.abs(hh).sum() + 2 * np.abs(hr).sum() + np.abs(rr).sum()))
        if -J <= rtol * max(scale, np.finfo(float).tiny):
            return 0.0
        raise NegativeError(f"J = {J:.3e} is negative beyond round-off")
    return J


# -- quadrature ---------------------------------------------------------------


@lru_cache(maxsize=32)
def _leggauss(k):
    return np.polynomial.legendre.leggauss(k)


@dataclass(frozen=True)
class QuadratureRule:
    """Composite Gauss-Legendre rule on ``[0, tf]``."""

    panels: int = 32
    nodes: int = 16

    def __post_init__(self):
        if int(self.panels) < 1 or int(self.nodes) < 4:
            raise ValueError("need panels >= 1 and at least 4 nodes per panel")

    def refined(self):
        return QuadratureRule(2 * self.panels, self.nodes)

    def layout(self, tf):
        """Panel left edges, in-panel offsets and weights (each ``(nodes,)``)."""
        xi, wi = _leggauss(self.nodes)
        width = tf / self.panels
        edges = width * np.arange(self.panels)
        offsets = 0.5 * width * (xi + 1.0)
        weights = 0.5 * width * wi
        return edges, offsets, weights

    def points(self, tf):
        """Flattened nodes and weights."""
        edges, offsets, weights = self.layout(tf)
        t = (edges[:, None] + offsets[None, :]).ravel()
        w = np.tile(weights, self.panels)
        return t, w


def _expm_action_panels(A, X, width, offsets, panels):
    """``expm(A (k width + offset)) X`` for all panels ``k`` and offsets.

    Returns shape ``(panels, len(offsets)) + X.shape``.
    """
    E_w = spla.expm(A * width)
    E_off = np.stack([spla.expm(A * o) for o in offsets])
    out = np.empty((panels, len(offsets)) + X.shape)
    Xk = X.copy()
    for k in range(panels):
        out[k] = E_off @ Xk
        Xk = E_w @ Xk
    return out


def _impulse_samples(model, tf, rule):
    """Impulse response at the rule's nodes, shape ``(panels, nodes, p, m)``."""
    edges, offsets, _ = rule.layout(tf)
    if isinstance(model, PoleResidueModel):
        t = edges[:, None] + offsets[None, :]
        return model.impulse(t)
    model = check_state_space(model)
    X = _expm_action_panels(model.A, model.B, tf / rule.panels, offsets, rule.panels)
    return np.einsum("pi,klim->klpm", model.C, X)


def _integrate(samples, rule, tf):
    _, _, weights = rule.layout(tf)
    return np.tensordot(samples, weights, axes=([1], [0])).sum(axis=0)


def _refine(compute, rule, rtol, max_panels, scale=None):
    """Double panels until successive results agree to ``rtol``."""
    prev = compute(rule)
    while True:
        nxt_rule = rule.refined()
        cur = compute(nxt_rule)
        sc = scale if scale is not None else max(np.abs(cur).max(initial=0.0), np.finfo(float).tiny)
        if np.abs(cur - prev).max(initial=0.0) <= rtol * sc:
            return cur
        if nxt_rule.panels > max_panels:
            raise NotConverged(
                f"quadrature did not reach rtol={rtol} with {nxt_rule.panels} panels"
            )
        prev, rule = cur, nxt_rule


def _check_quad_model(model):
    if isinstance(model, PoleResidueModel):
        return model
    return check_state_space(model)


def _dims(model):
    return (model.p, model.m)


def quadrature_inner_product(g, h, tf, rule=None, rtol=1e-9, max_panels=4096):
    """``int_0^tf Tr(h(t)^T g(t)) dt`` by composite Gauss-Legendre quadrature.

    ``g`` and ``h`` may be pole-residue or state-space models.  Panels are
    doubled until two successive values agree to ``rtol`` relative to
    ``||g|| ||h||`` (computed with the same rule).
    """
    tf = check_horizon(tf)
    g, h = _check_quad_model(g), _check_quad_model(h)
    if _dims(g) != _dims(h):
        check_compatible(g, h)
    rule = rule or QuadratureRule()

    def compute(rl):
        sg = _impulse_samples(g, tf, rl)
        sh = _impulse_samples(h, tf, rl)
        gg = _integrate(np.einsum("klpm,klpm->kl", sg, sg), rl, tf)
        hh = _integrate(np.einsum("klpm,klpm->kl", sh, sh), rl, tf)
        gh = _integrate(np.einsum("klpm,klpm->kl", sg, sh), rl, tf)
        return np.array([gh, math.sqrt(max(gg, 0) * max(hh, 0))])

    def compute_ip(rl):
        return compute(rl)[:1]

    scale = max(compute(rule)[1], np.finfo(float).tiny)
    return float(_refine(compute_ip, rule, rtol, max_panels, scale=scale)[0])


def quadrature_error_sq(full, red, tf, rule=None, rtol=1e-9, max_panels=4096):
    """``int_0^tf ||h(t) - h_r(t)||_F^2 dt`` by quadrature."""
    tf = check_horizon(tf)
    full, red = _check_quad_model(full), _check_quad_model(red)
    rule = rule or QuadratureRule()

    def compute(rl):
        d = _impulse_samples(full, tf, rl) - _impulse_samples(red, tf, rl)
        return np.array([_integrate(np.einsum("klpm,klpm->kl", d, d), rl, tf)])

    sq = quadrature_inner_product(full, full, tf, rule, rtol, max_panels)
    return float(_refine(compute, rule, rtol, max_panels, scale=max(sq, np.finfo(float).tiny))[0])


def quadrature_truncated_laplace(model, s, tf, rule=None, rtol=1e-11, max_panels=4096):
    """``int_0^tf h(t) exp(-s t) dt`` by quadrature (complex ``(p, m)``)."""
    tf = check_horizon(tf)
    model = _check_quad_model(model)
    rule = rule or QuadratureRule()
    s = complex(s)

    def compute(rl):
        edges, offsets, _ = rl.layout(tf)
        t = edges[:, None] + offsets[None, :]
        samples = _impulse_samples(model, tf, rl) * np.exp(-s * t)[:, :, None, None]
        return _integrate(samples, rl, tf)

    return _refine(compute, rule, rtol, max_panels)


# -- time-limited Gramians ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class TimeLimitedGramian:
    """``P(tf) = int_0^tf expm(A t) B B^T expm(A^T t) dt`` (or its dual).

    Attributes
    ----------
    method
        ``"lyapunov"`` or ``"quadrature"``.
    fallback
        True when the Lyapunov route was rejected and quadrature used instead.
    """

    P: np.ndarray
    tf: float
    side: str
    method: str = "lyapunov"
    fallback: bool = False

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise GramianFailure(f"Gramian must be square, got {P.shape}")
        if self.side not in ("reachability", "observability"):
            raise ValueError(f"side must be 'reachability' or 'observability', got {self.side!r}")
        P = 0.5 * (P + P.T)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    def factor(self):
        """Square-root factor ``S`` with ``P = S S^T`` (negative round-off clipped)."""
        w, V = np.linalg.eigh(self.P)
        w = np.clip(w, 0.0, None)
        return V * np.sqrt(w)


def _gramian_ok(P, tol=1e-10):
    nrm = np.linalg.norm(P, 2)
    if nrm == 0:
        return True
    if np.linalg.norm(P - P.T) > 1e-12 * max(np.linalg.norm(P), 1.0) * 10:
        return False
    return np.linalg.eigvalsh(0.5 * (P + P.T)).min() >= -tol * nrm


def _sides(model, side):
    if side == "reachability":
        return model.A, model.B
    if side == "observability":
        return model.A.T, model.C.T
    raise ValueError(f"side must be 'reachability' or 'observability', got {side!r}")


def _quadrature_gramian(A, B, tf, rule, rtol, max_panels):
    def compute(rl):
        edges, offsets, weights = rl.layout(tf)
        X = _expm_action_panels(A, B, tf / rl.panels, offsets, rl.panels)
        return np.einsum("l,klim,kljm->ij", weights, X, X)

    def scale_compute(rl):
        return compute(rl)

    P0 = compute(rule)
    scale = max(np.abs(P0).max(initial=0.0), np.finfo(float).tiny)
    return _refine(scale_compute, rule, rtol, max_panels, scale=scale)


def time_limited_gramian(model, tf, side="reachability", method="auto", rule=None,
                         sep_tol=1e-6, rtol=1e-11, max_panels=4096):
    """Time-limited reachability or observability Gramian.

    The Lyapunov route solves ``A P + P A^T = F B B^T F^T - B B^T`` with
    ``F = expm(A tf)``.  When two eigenvalues of ``A`` nearly sum to zero
    (relative to ``sep_tol * ||A||``), or the solution fails a symmetry/PSD
    check, a quadrature Gramian is returned instead with ``fallback=True`` and
    a :class:`LyapunovIllPosed` warning.
    """
    tf = check_horizon(tf)
    model = check_state_space(model)
    A, B = _sides(model, side)
    rule = rule or QuadratureRule()
    if method == "quadrature":
        P = _quadrature_gramian(A, B, tf, rule, rtol, max_panels)
        return TimeLimitedGramian(P, tf, side, "quadrature", False)
    if method not in ("auto", "lyapunov"):
        raise ValueError(f"unknown method {method!r}")

    ev = np.linalg.eigvals(A)
    sep = np.abs(ev[:, None] + ev[None, :]).min() if ev.size else np.inf
    normA = max(np.linalg.norm(A, 1), 1.0)
    reason = None
    if sep <= sep_tol * normA:
        reason = f"eigenvalue pair sums to {sep:.2e}"
    else:
        F = spla.expm(A * tf)
        FB = F @ B
        Q = FB @ FB.T - B @ B.T
        P = spla.solve_continuous_lyapunov(A, Q)
        if np.all(np.isfinite(P)) and _gramian_ok(P):
            return TimeLimitedGramian(P, tf, side, "lyapunov", False)
        reason = "Lyapunov solution failed the symmetry/PSD check"
    if method == "lyapunov":
        raise GramianFailure(reason)
    warnings.warn(f"{reason}; using quadrature Gramian", LyapunovIllPosed, stacklevel=2)
    P = _quadrature_gramian(A, B, tf, rule, rtol, max_panels)
    return TimeLimitedGramian(P, tf, side, "quadrature", True)


def norm_sq_gramian(model, tf, **kwargs):
    """``trace(C P(tf) C^T)`` from the reachability Gramian."""
    model = check_state_space(model)
    P = time_limited_gramian(model, tf, "reachability", **kwargs).P
    return max(float(np.trace(model.C @ P @ model.C.T)), 0.0)

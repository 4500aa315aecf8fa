"""Truncated-Laplace functions ``G``/``G_r``, gradients of ``J`` and the
interpolatory first-order optimality conditions on a finite horizon.

``G(s) = int_0^tf h(t) exp(-s t) dt``.  A reduced model with poles
``lambda_k`` and residue directions ``(l_k, r_k)`` is stationary for ``J`` iff
``G_r`` tangentially Hermite-interpolates ``G`` at the mirror points
``-lambda_k``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from ._validation import check_compatible, check_horizon, check_pole_residue, check_state_space
from .metrics import phi1, phi2
from .system import eval_transfer_ss

_FLOOR = 1e-300


def eval_G_pr(full, s, tf):
    """``G(s) = sum_j c_j b_j^T phi1(rho_j - s)`` as a ``(p, m)`` array."""
    tf = check_horizon(tf)
    full = check_pole_residue(full)
    k = phi1(full.poles - complex(s), tf)
    return np.tensordot(k, full.residues, axes=1).reshape(full.p, full.m)


def eval_G_prime_pr(full, s, tf):
    """``G'(s) = -sum_j c_j b_j^T phi2(rho_j - s)``."""
    tf = check_horizon(tf)
    full = check_pole_residue(full)
    k = phi2(full.poles - complex(s), tf)
    return -np.tensordot(k, full.residues, axes=1).reshape(full.p, full.m)


def eval_G_ss(model, s, tf):
    """``G(s) = H(s) - exp(-s tf) C (sI - A)^{-1} expm(A tf) B``.

    Raises :class:`~h2tf.exceptions.SingularShift` at eigenvalues of ``A``.
    """
    tf = check_horizon(tf)
    model = check_state_space(model)
    s = complex(s)
    FB = spla.expm(model.A * tf) @ model.B
    H = eval_transfer_ss(model, s)
    K = eval_transfer_ss(type(model)(model.A, FB, model.C), s)
    return H - np.exp(-s * tf) * K


def _mirror_kernels(full, red, tf):
    """``G``, ``G_r``, ``G'`` and ``G_r'`` at every ``-lambda_k``, each ``(r, p, m)``."""
    lam = red.poles
    K_full = phi1(lam[:, None] + full.poles[None, :], tf)
    K_red = phi1(lam[:, None] + lam[None, :], tf)
    D_full = phi2(lam[:, None] + full.poles[None, :], tf)
    D_red = phi2(lam[:, None] + lam[None, :], tf)
    G = np.tensordot(K_full, full.residues, axes=1)
    Gr = np.tensordot(K_red, red.residues, axes=1)
    Gp = -np.tensordot(D_full, full.residues, axes=1)
    Grp = -np.tensordot(D_red, red.residues, axes=1)
    return G, Gr, Gp, Grp


@dataclass(frozen=True)
class GradientBundle:
    """Holomorphic partial derivatives of ``J``.

    Attributes
    ----------
    dJ_dlambda
        ``(r,)``, ``dJ/dlambda_k = 2 l_k^T (G' - G_r')(-lambda_k) r_k``.
    dJ_dl
        ``(p, r)``, column ``k`` is ``2 (G_r - G)(-lambda_k) r_k``.
    dJ_dr
        ``(m, r)``, column ``k`` is ``2 ((G_r - G)(-lambda_k))^T l_k``.
    """

    dJ_dlambda: np.ndarray
    dJ_dl: np.ndarray
    dJ_dr: np.ndarray


def gradients(full, red, tf):
    tf = check_horizon(tf)
    full = check_pole_residue(full)
    red = check_pole_residue(red)
    check_compatible(full, red)
    G, Gr, Gp, Grp = _mirror_kernels(full, red, tf)
    D = Gr - G
    dl = 2.0 * np.einsum("kpm,km->pk", D, red.right)
    dr = 2.0 * np.einsum("kpm,kp->mk", D, red.left)
    dlam = 2.0 * np.einsum("kp,kpm,km->k", red.left, Gp - Grp, red.right)
    return GradientBundle(dlam, dl, dr)


@dataclass(frozen=True)
class OptimalityResidual:
    """Per-pole violations of the three interpolation conditions.

    ``left``/``right`` are the norms of ``l_k^T (G - G_r)(-lambda_k)`` and
    ``(G - G_r)(-lambda_k) r_k``; ``hermite`` is ``|l_k^T (G' - G_r')(-lambda_k) r_k|``.
    The ``*_rel`` fields divide by the magnitude of the corresponding ``G``-side
    quantity.
    """

    left: np.ndarray
    right: np.ndarray
    hermite: np.ndarray
    left_rel: np.ndarray
    right_rel: np.ndarray
    hermite_rel: np.ndarray

    @property
    def max_value(self):
        vals = np.concatenate([self.left_rel, self.right_rel])
        return float(vals.max(initial=0.0))

    @property
    def max_hermite(self):
        return float(self.hermite_rel.max(initial=0.0))

    def is_stationary(self, value_tol=1e-6, hermite_tol=1e-4):
        return self.max_value <= value_tol and self.max_hermite <= hermite_tol


def _residual_record(G, Gr, Gp, Grp, left, right):
    D = G - Gr
    lD = np.einsum("kp,kpm->km", left, D)
    Dr = np.einsum("kpm,km->kp", D, right)
    lG = np.einsum("kp,kpm->km", left, G)
    Gr_ = np.einsum("kpm,km->kp", G, right)
    herm = np.abs(np.einsum("kp,kpm,km->k", left, Gp - Grp, right))
    herm_ref = np.abs(np.einsum("kp,kpm,km->k", left, Gp, right))
    lnorm = np.linalg.norm(lD, axis=1)
    rnorm = np.linalg.norm(Dr, axis=1)
    return OptimalityResidual(
        lnorm,
        rnorm,
        herm,
        lnorm / (np.linalg.norm(lG, axis=1) + _FLOOR),
        rnorm / (np.linalg.norm(Gr_, axis=1) + _FLOOR),
        herm / (herm_ref + _FLOOR),
    )


def optimality_residuals(full, red, tf):
    """Residuals of the finite-horizon interpolation conditions at each reduced pole."""
    tf = check_horizon(tf)
    full = check_pole_residue(full)
    red = check_pole_residue(red)
    check_compatible(full, red)
    G, Gr, Gp, Grp = _mirror_kernels(full, red, tf)
    return _residual_record(G, Gr, Gp, Grp, red.left, red.right)


def h2_residuals(full, red):
    """Infinite-horizon analogue: ``H_r`` vs ``H`` (and derivatives) at ``-lambda_k``."""
    full = check_pole_residue(full)
    red = check_pole_residue(red)
    check_compatible(full, red)
    lam = red.poles

    def at(model):
        d = -lam[:, None] - model.poles[None, :]
        H = np.tensordot(1.0 / d, model.residues, axes=1)
        dH = np.tensordot(-1.0 / d**2, model.residues, axes=1)
        return H, dH

    H, dH = at(full)
    Hr, dHr = at(red)
    return _residual_record(H, Hr, dH, dHr, red.left, red.right)

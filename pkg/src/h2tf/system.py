"""State-space and pole-residue representations of LTI systems.

A :class:`StateSpaceModel` holds real ``(A, B, C)`` with
``h(t) = C expm(A t) B``.  A :class:`PoleResidueModel` holds the same impulse
response as a sum of rank-1 terms ``exp(lambda_i t) l_i r_i^T``; it is used for
both the modal form of a full model and for reduced models.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla

from ._validation import as_matrix, check_horizon
from .exceptions import (
    ConjugateClosureViolation,
    DimensionMismatch,
    HorizonOverflow,
    NonDiagonalizable,
    PoleHit,
    SingularShift,
)

# exp(x) overflows double precision just above 709.
EXP_OVERFLOW = 700.0


@dataclass(frozen=True)
class Horizon:
    """Finite time horizon ``[0, tf]``."""

    tf: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tf", check_horizon(self.tf))

    def __float__(self):
        return self.tf


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Real LTI system ``x' = A x + B u, y = C x`` with zero initial state."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = np.asarray(self.C, dtype=float)
        # a 1-D C is an output row, not a column
        C = as_matrix(C.reshape(1, -1) if C.ndim == 1 else C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionMismatch(f"C has {C.shape[1]} columns, expected {n}")
        for name, arr in (("A", A), ("B", B), ("C", C)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def order(self):
        return self.n

    def transfer(self, s):
        return eval_transfer_ss(self, s)

    def impulse(self, t):
        """``C expm(A t) B`` at a single time ``t``."""
        return self.C @ spla.expm(self.A * float(t)) @ self.B

    def poles(self):
        return np.linalg.eigvals(self.A)

    def siso(self, output=0, input=0):
        """Extract the (0-based) ``output``/``input`` channel."""
        if not (0 <= output < self.p and 0 <= input < self.m):
            raise DimensionMismatch(
                f"channel ({output}, {input}) out of range for p={self.p}, m={self.m}"
            )
        return StateSpaceModel(self.A, self.B[:, [input]], self.C[[output], :])

    def __repr__(self):
        return f"StateSpaceModel(n={self.n}, m={self.m}, p={self.p})"


@dataclass(frozen=True, eq=False)
class PoleResidueModel:
    """Impulse response ``sum_i exp(poles[i] t) left[i] right[i]^T``.

    Parameters
    ----------
    poles
        Complex array of shape ``(r,)``.
    left
        Left residue directions, shape ``(r, p)``.
    right
        Right residue directions, shape ``(r, m)``.
    """

    poles: np.ndarray
    left: np.ndarray
    right: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        poles = np.atleast_1d(np.asarray(self.poles, dtype=complex))
        if poles.ndim != 1:
            raise DimensionMismatch(f"poles must be 1-D, got shape {poles.shape}")
        r = poles.shape[0]
        left = np.asarray(self.left, dtype=complex)
        right = np.asarray(self.right, dtype=complex)
        if left.ndim == 1:
            left = left.reshape(r, 1) if r != 1 or left.size == 1 else left.reshape(1, -1)
        if right.ndim == 1:
            right = right.reshape(r, 1) if r != 1 or right.size == 1 else right.reshape(1, -1)
        if left.ndim != 2 or left.shape[0] != r:
            raise DimensionMismatch(f"left must have shape (r, p) with r={r}, got {left.shape}")
        if right.ndim != 2 or right.shape[0] != r:
            raise DimensionMismatch(f"right must have shape (r, m) with r={r}, got {right.shape}")
        for name, arr in (("poles", poles), ("left", left), ("right", right)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_terms(cls, terms, p=None, m=None):
        """Build from an iterable of ``(pole, left, right)`` triples."""
        terms = list(terms)
        if not terms:
            return cls(np.zeros(0), np.zeros((0, p or 1)), np.zeros((0, m or 1)))
        poles = [t[0] for t in terms]
        left = [np.atleast_1d(np.asarray(t[1], dtype=complex)) for t in terms]
        right = [np.atleast_1d(np.asarray(t[2], dtype=complex)) for t in terms]
        return cls(np.array(poles), np.vstack(left), np.vstack(right))

    @classmethod
    def from_siso(cls, poles, residues):
        poles = np.atleast_1d(np.asarray(poles, dtype=complex))
        residues = np.atleast_1d(np.asarray(residues, dtype=complex))
        return cls(poles, residues.reshape(-1, 1), np.ones((poles.size, 1)))

    @property
    def r(self):
        return self.poles.shape[0]

    @property
    def p(self):
        return self.left.shape[1]

    @property
    def m(self):
        return self.right.shape[1]

    @property
    def order(self):
        return self.r

    @property
    def terms(self):
        return list(zip(self.poles, self.left, self.right))

    @property
    def residues(self):
        """Rank-1 residue matrices, shape ``(r, p, m)``."""
        return self.left[:, :, None] * self.right[:, None, :]

    @property
    def siso_residues(self):
        if self.p != 1 or self.m != 1:
            raise DimensionMismatch("siso_residues requires p = m = 1")
        return self.left[:, 0] * self.right[:, 0]

    def transfer(self, s, derivative=False):
        return eval_transfer_pr(self, s, derivative=derivative)

    def impulse(self, t):
        return impulse_response(self, t)

    def __repr__(self):
        return f"PoleResidueModel(r={self.r}, p={self.p}, m={self.m})"


@dataclass(frozen=True)
class ClosureReport:
    """Outcome of :func:`validate_conjugate_closure`."""

    closed: bool
    real: tuple
    pairs: tuple
    unmatched: tuple

    def __bool__(self):
        return self.closed


def _pole_scale(z):
    return np.maximum(1.0, np.abs(z))


def _sort_order(poles):
    # Lexicographic (Re, |Im|, sign Im) with the positive-imaginary member first.
    return np.lexsort((-np.sign(poles.imag), np.abs(poles.imag), poles.real))


def pair_poles(poles, tol=1e-12):
    """Split ``poles`` into real indices and conjugate index pairs.

    Returns ``(real, pairs, unmatched)`` where each pair ``(i, j)`` has
    ``Im poles[i] > 0`` and ``poles[j]`` its conjugate partner.
    """
    poles = np.asarray(poles, dtype=complex)
    scale = _pole_scale(poles)
    order = _sort_order(poles)
    used = np.zeros(poles.size, dtype=bool)
    real, pairs, unmatched = [], [], []
    for i in order:
        if used[i]:
            continue
        used[i] = True
        if abs(poles[i].imag) <= tol * scale[i]:
            real.append(int(i))
            continue
        free = np.flatnonzero(~used)
        if free.size:
            dist = np.abs(poles[free] - np.conj(poles[i]))
            k = int(np.argmin(dist))
            if dist[k] <= tol * scale[i]:
                j = int(free[k])
                used[j] = True
                pairs.append((int(i), j) if poles[i].imag > 0 else (j, int(i)))
                continue
        unmatched.append(int(i))
    return tuple(real), tuple(pairs), tuple(unmatched)


def validate_conjugate_closure(prm, tol=1e-12):
    """Check that poles and residues of ``prm`` come in conjugate pairs.

    Real poles need real residue matrices; complex poles need a partner whose
    residue matrix is the elementwise conjugate.  Returns a :class:`ClosureReport`,
    which is truthy iff the model is closed.
    """
    real, pairs, unmatched = pair_poles(prm.poles, tol)
    res = prm.residues
    bad = list(unmatched)
    for i in real:
        sc = max(1.0, np.abs(res[i]).max(initial=0.0))
        if np.abs(res[i].imag).max(initial=0.0) > tol * sc:
            bad.append(i)
    for i, j in pairs:
        sc = max(1.0, np.abs(res[i]).max(initial=0.0))
        if np.abs(res[j] - np.conj(res[i])).max(initial=0.0) > tol * sc:
            bad.extend((i, j))
    good_pairs = tuple(pr for pr in pairs if pr[0] not in bad)
    good_real = tuple(i for i in real if i not in bad)
    return ClosureReport(not bad, good_real, good_pairs, tuple(sorted(set(bad))))


def modal_decompose(model, gap_tol=1e-10):
    """Diagonalize ``model`` into pole-residue form.

    With right eigenvectors ``x_j`` and left eigenvectors ``y_j`` normalized to
    ``y_j^T x_j = 1``, the terms are ``(rho_j, C x_j, B^T y_j)``.  Poles are
    ordered by ``(Re, |Im|, sign Im)`` and conjugate partners are made exact
    conjugates of each other.

    Raises
    ------
    NonDiagonalizable
        If two eigenvalues are closer than ``gap_tol * ||A||_1``.
    """
    A, B, C = model.A, model.B, model.C
    n = model.n
    rho, X = spla.eig(A)
    if n > 1:
        gap = np.abs(rho[:, None] - rho[None, :])
        gap[np.diag_indices(n)] = np.inf
        min_gap = gap.min()
        normA = max(np.linalg.norm(A, 1), np.finfo(float).tiny)
        if min_gap <= gap_tol * normA:
            raise NonDiagonalizable(
                f"eigenvalue gap {min_gap:.3e} below threshold {gap_tol * normA:.3e}"
            )
    try:
        Yt = np.linalg.solve(X, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise NonDiagonalizable("eigenvector matrix is singular") from exc
    left = (C @ X).T
    right = Yt @ B

    order = _sort_order(rho)
    rho, left, right = rho[order], left[order], right[order]
    # Pairing is looser than validation here: conjugates from the eigensolver
    # agree to rounding, which we then make exact.
    real, pairs, unmatched = pair_poles(rho, tol=1e-8)
    if unmatched:
        raise NonDiagonalizable(
            f"could not pair complex eigenvalues {rho[list(unmatched)]}"
        )
    rho = rho.copy()
    for i in real:
        rho[i] = rho[i].real
        left[i] = left[i].real
        right[i] = right[i].real
    for i, j in pairs:
        rho[j] = np.conj(rho[i])
        left[j] = np.conj(left[i])
        right[j] = np.conj(right[i])
    return PoleResidueModel(rho, left, right)


def eval_transfer_ss(model, s):
    """``H(s) = C (sI - A)^{-1} B`` as a complex ``(p, m)`` array."""
    s = complex(s)
    K = s * np.eye(model.n) - model.A
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spla.LinAlgWarning)
        lu, piv = spla.lu_factor(K, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min(initial=np.inf) <= model.n * np.finfo(float).eps * max(np.linalg.norm(K, 1), np.finfo(float).tiny):
        raise SingularShift(f"sI - A is singular at s = {s}")
    return model.C @ spla.lu_solve((lu, piv), model.B.astype(complex), check_finite=False)


def eval_transfer_pr(prm, s, derivative=False):
    """``H(s) = sum_i l_i r_i^T / (s - lambda_i)``.

    With ``derivative=True`` returns ``(H(s), H'(s))``.
    """
    s = complex(s)
    d = s - prm.poles
    if np.any(np.abs(d) <= 1e-14 * _pole_scale(prm.poles)):
        raise PoleHit(f"s = {s} coincides with a pole")
    res = prm.residues
    H = np.tensordot(1.0 / d, res, axes=1)
    if not derivative:
        return H.reshape(prm.p, prm.m)
    dH = np.tensordot(-1.0 / d**2, res, axes=1)
    return H.reshape(prm.p, prm.m), dH.reshape(prm.p, prm.m)


def impulse_response(prm, t):
    """Real impulse response ``h(t)`` of a conjugate-closed pole-residue model.

    ``t`` may be a scalar (returns ``(p, m)``) or an array (returns
    ``t.shape + (p, m)``).

    Raises
    ------
    ConjugateClosureViolation
        If the imaginary part exceeds ``1e-10`` of the matrix scale.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("impulse response is defined for t >= 0")
    flat = t_arr.reshape(-1)
    expo = np.outer(flat, prm.poles)
    if flat.size and prm.r and expo.real.max() > EXP_OVERFLOW:
        raise HorizonOverflow("exp(lambda t) overflows for the requested times")
    E = np.exp(expo)
    res = prm.residues
    h = np.tensordot(E, res, axes=1)
    scale = np.abs(E) @ np.abs(res).reshape(prm.r, -1).max(axis=1, initial=0.0)
    imag = np.abs(h.imag).reshape(flat.size, -1).max(axis=1, initial=0.0)
    if np.any(imag > 1e-10 * np.maximum(scale, np.finfo(float).tiny)):
        raise ConjugateClosureViolation(
            f"impulse response has imaginary part {imag.max():.3e}"
        )
    return h.real.reshape(t_arr.shape + (prm.p, prm.m))


def realize(prm, tol=1e-10):
    """Real block-diagonal state-space realization of a closed pole-residue model.

    Real poles give 1x1 blocks; a pair ``a +/- ib`` gives the block
    ``[[a, -b], [b, a]]`` acting on ``(Re z, Im z)``.
    """
    report = validate_conjugate_closure(prm, tol)
    if not report:
        raise ConjugateClosureViolation(
            f"cannot realize model, unmatched terms {report.unmatched}"
        )
    n = prm.r
    A = np.zeros((n, n))
    B = np.zeros((n, prm.m))
    C = np.zeros((prm.p, n))
    k = 0
    for i in sorted(report.real + tuple(i for i, _ in report.pairs), key=lambda i: (prm.poles[i].real, abs(prm.poles[i].imag))):
        lam, ell, rr = prm.poles[i], prm.left[i], prm.right[i]
        if i in report.real:
            # residue l r^T is real; put its phase on the input side
            res = np.outer(ell, rr)
            u, sv, vh = np.linalg.svd(res.real) if ell.size and rr.size else (None, None, None)
            A[k, k] = lam.real
            if sv is not None and sv.size:
                C[:, k] = u[:, 0] * sv[0]
                B[k, :] = vh[0]
            k += 1
        else:
            a, b = lam.real, lam.imag
            A[k:k + 2, k:k + 2] = [[a, -b], [b, a]]
            B[k, :] = rr.real
            B[k + 1, :] = rr.imag
            C[:, k] = 2 * ell.real
            C[:, k + 1] = -2 * ell.imag
            k += 2
    return StateSpaceModel(A, B, C)

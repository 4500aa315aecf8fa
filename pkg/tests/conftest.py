import numpy as np
import pytest

from h2tf.system import PoleResidueModel, StateSpaceModel

# PASS/FAIL lines collected by the acceptance checks
ACCEPTANCE_KEY = pytest.StashKey[list]()


def random_poles(rng, r, re_range=(-3.0, -0.2), im_max=3.0, unstable=0):
    """Distinct conjugate-closed poles: ``unstable`` positive reals, the rest mixed."""
    n_pairs = int(rng.integers(0, (r - unstable) // 2 + 1))
    n_real = r - 2 * n_pairs
    reals = rng.uniform(*re_range, size=n_real)
    if unstable:
        reals[:unstable] = rng.uniform(0.1, 1.0, size=unstable)
    reps = rng.uniform(*re_range, size=n_pairs) + 1j * rng.uniform(0.2, im_max, size=n_pairs)
    return np.concatenate([reals.astype(complex), reps, np.conj(reps)])


def random_pr(rng, r, p=1, m=1, **kw):
    """Random conjugate-closed pole-residue model with ``r`` terms."""
    poles = random_poles(rng, r, **kw)
    n_real = int(np.sum(poles.imag == 0))
    n_pairs = (r - n_real) // 2

    def directions(k):
        real = rng.standard_normal((n_real, k)).astype(complex)
        rep = rng.standard_normal((n_pairs, k)) + 1j * rng.standard_normal((n_pairs, k))
        return np.vstack([real, rep, np.conj(rep)])

    return PoleResidueModel(poles, directions(p), directions(m))


def random_stable_ss(rng, n, p=1, m=1, shift=0.5):
    """Random stable state-space model (eigenvalues shifted left of ``-shift``)."""
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    A -= (np.max(np.linalg.eigvals(A).real) + shift) * np.eye(n)
    return StateSpaceModel(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)))


def scalar(a=-1.0, b=1.0, c=1.0):
    return StateSpaceModel([[a]], [[b]], [[c]])


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def central_diff(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

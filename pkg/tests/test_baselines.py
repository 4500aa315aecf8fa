import numpy as np
import pytest

from conftest import random_stable_ss, rel, scalar
from h2tf.baselines import collect_snapshots, pod_reduce, tlbt_reduce
from h2tf.exceptions import GramianFailure, RankDeficientSnapshots, TieAtTruncation
from h2tf.fhirka import fhirka_run
from h2tf.metrics import error_sq, quadrature_error_sq
from h2tf.system import StateSpaceModel, eval_transfer_ss, modal_decompose


def diag2(fast):
    return StateSpaceModel(np.diag([-1.0, -fast]), [[1.0], [1.0]], [[1.0, 1.0]])


def J(full, red, tf=1.0):
    return error_sq(modal_decompose(full), modal_decompose(red), tf)


class TestSnapshots:
    def test_scalar_values(self):
        snaps = collect_snapshots(scalar(), 1.0, 11)
        assert np.allclose(snaps.X[0], np.exp(-snaps.times), rtol=1e-14)
        assert snaps.times[0] == 0.0 and snaps.times[-1] == 1.0

    def test_mimo_layout(self, rng):
        model = random_stable_ss(rng, 4, m=2)
        snaps = collect_snapshots(model, 2.0, 5)
        assert snaps.X.shape == (4, 10)
        assert list(snaps.columns) == [0] * 5 + [1] * 5
        assert np.allclose(snaps.X[:, 5], model.B[:, 1])
        for j in range(2):
            assert np.all(np.diff(snaps.times[snaps.columns == j]) > 0)

    def test_validation(self):
        with pytest.raises(ValueError):
            collect_snapshots(scalar(), 1.0, 1)


class TestPOD:
    def test_scalar_exact(self):
        red, data = pod_reduce(scalar(), 1.0, 1)
        assert red.A[0, 0] == pytest.approx(-1.0)
        assert red.B[0, 0] * red.C[0, 0] == pytest.approx(1.0)
        assert J(scalar(), red) <= 1e-15
        assert data.energy == pytest.approx(1.0)

    def test_slow_mode_dominates(self):
        full = diag2(100.0)
        red, data = pod_reduce(full, 1.0, 1)
        assert abs(data.basis[0, 0]) > abs(data.basis[1, 0])
        keep_slow = StateSpaceModel([[-1.0]], [[1.0]], [[1.0]])
        keep_fast = StateSpaceModel([[-100.0]], [[1.0]], [[1.0]])
        assert J(full, red) < min(J(full, keep_slow), J(full, keep_fast))

    def test_energy(self, rng):
        model = random_stable_ss(rng, 5)
        energies = [pod_reduce(model, 1.0, r)[1].energy for r in range(1, 6)]
        assert np.all(np.diff(energies) >= 0) and energies[-1] == pytest.approx(1.0, abs=1e-14)

    def test_full_order_reproduces(self, rng):
        model = random_stable_ss(rng, 5, p=2, m=2)
        red, _ = pod_reduce(model, 1.0, 5)
        for s in (0.3, 1 + 1j):
            assert rel(eval_transfer_ss(red, s), eval_transfer_ss(model, s)) < 1e-9

    def test_rank_deficient(self):
        model = StateSpaceModel(-np.eye(3), [[1.0], [0.0], [0.0]], [[1.0, 1.0, 1.0]])
        with pytest.raises(RankDeficientSnapshots):
            pod_reduce(model, 1.0, 2)

    def test_real_output_and_order(self, rng):
        model = random_stable_ss(rng, 8, m=2)
        red, _ = pod_reduce(model, 1.0, 3)
        assert red.n == 3 and np.isrealobj(red.A)

    def test_unstable_model(self):
        full = StateSpaceModel(np.diag([0.5, -2.0, -5.0]), np.ones((3, 1)), np.ones((1, 3)))
        red, _ = pod_reduce(full, 1.0, 2)
        assert np.isfinite(J(full, red))


class TestTLBT:
    def test_scalar_exact(self):
        red, data = tlbt_reduce(scalar(), 1.0, 1)
        assert red.A[0, 0] == pytest.approx(-1.0)
        assert J(scalar(), red) <= 1e-15
        assert data.singular_values.shape == (1,)

    def test_full_order_unchanged(self, rng):
        A = rng.standard_normal((6, 6))
        A = -(A @ A.T) - 0.5 * np.eye(6)
        model = StateSpaceModel(A, rng.standard_normal((6, 1)), rng.standard_normal((1, 6)))
        red, data = tlbt_reduce(model, 1.0, 6)
        for s in (0.0, 2j, 1 - 3j):
            assert rel(eval_transfer_ss(red, s), eval_transfer_ss(model, s)) < 1e-9
        assert np.allclose(data.Ti @ data.T, np.eye(6), atol=1e-8)

    def test_sigma_ordering_matches_energy(self):
        full = diag2(50.0)
        _, data = tlbt_reduce(full, 1.0, 2)
        sigma = data.singular_values
        assert np.all(sigma >= 0) and np.all(np.diff(sigma) <= 0)
        red, data = tlbt_reduce(full, 1.0, 1)
        # energy of each state's impulse contribution over [0, 1]
        energy = [(1 - np.exp(-2 * a)) / (2 * a) for a in (1.0, 50.0)]
        kept = int(np.argmax(energy))
        assert red.A[0, 0] == pytest.approx([-1.0, -50.0][kept], rel=0.2)
        assert abs(data.T[kept, 0]) > abs(data.T[1 - kept, 0])

    def test_error_decreases_with_order(self, rng):
        model = random_stable_ss(rng, 10)
        errs = [J(model, tlbt_reduce(model, 1.0, r)[0]) for r in (1, 2, 3, 4)]
        assert np.all(np.diff(errs) < 0)

    def test_against_quadrature(self, rng):
        model = random_stable_ss(rng, 8)
        red, _ = tlbt_reduce(model, 1.0, 3)
        assert J(model, red) == pytest.approx(quadrature_error_sq(model, red, 1.0), rel=1e-7)

    def test_tie(self):
        # two identical decoupled states give a repeated singular value
        model = StateSpaceModel(np.diag([-1.0, -1.0]), [[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(TieAtTruncation) as info:
            tlbt_reduce(model, 1.0, 1)
        assert info.value.suggestion == 2

    def test_zero_output(self):
        model = StateSpaceModel(-np.eye(2), np.ones((2, 1)), np.zeros((1, 2)))
        with pytest.raises(GramianFailure):
            tlbt_reduce(model, 1.0, 1)


@pytest.mark.parametrize("reducer", [pod_reduce, tlbt_reduce])
def test_baselines_initialize_fhirka(rng, reducer):
    model = random_stable_ss(rng, 9)
    out = reducer(model, 1.0, 3)
    red = out[0]
    assert modal_decompose(red).r == 3
    res = fhirka_run(model, 3, init_model=red)
    assert res.J <= res.init_J

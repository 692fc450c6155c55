import math

import numpy as np
import pytest

from kernelfill import matcore
from kernelfill.errors import InvalidInput, NotPositiveDefinite, SingularMatrix

from conftest import random_pd


class TestEig:
    def test_identity(self):
        w, V = matcore.eig(np.eye(3))
        np.testing.assert_array_equal(w, [1, 1, 1])
        np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-15)
        assert np.all(V[np.argmax(np.abs(V), axis=0), range(3)] > 0)

    def test_diagonal(self):
        w, V = matcore.eig(np.diag([3.0, 1.0]))
        np.testing.assert_array_equal(w, [3, 1])
        np.testing.assert_array_equal(V, np.eye(2))

    def test_two_by_two(self):
        # characteristic polynomial (2-x)^2 - 1 = 0 -> x = 3, 1
        w, V = matcore.eig([[2.0, 1.0], [1.0, 2.0]])
        np.testing.assert_allclose(w, [3, 1], atol=1e-14)
        v1, v2 = V[:, 0], V[:, 1]
        np.testing.assert_allclose(v1, np.array([1, 1]) / math.sqrt(2), atol=1e-14)
        # sign convention: largest-magnitude component positive; ties go to the first
        np.testing.assert_allclose(v2, np.array([1, -1]) / math.sqrt(2), atol=1e-14)

    def test_random_batch(self, rng):
        for _ in range(200):
            A = rng.uniform(-1, 1, size=(5, 5))
            A = A + A.T
            w, V = matcore.eig(A)
            assert np.max(np.abs(V.T @ V - np.eye(5))) < 1e-10
            assert np.max(np.abs((V * w) @ V.T - A)) < 1e-8
            assert np.all(np.diff(w) <= 0)

    def test_matches_lapack(self, rng):
        A = rng.uniform(-10, 10, size=(30, 30))
        A = A + A.T
        w, _ = matcore.eig(A)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(A)[::-1], atol=1e-9)

    def test_deterministic(self, rng):
        A = random_pd(rng, 7)
        a, b = matcore.eig(A), matcore.eig(A.copy())
        assert a.eigenvalues.tobytes() == b.eigenvalues.tobytes()
        assert a.eigenvectors.tobytes() == b.eigenvectors.tobytes()

    def test_rank_deficient_with_repeated_eigenvalues(self, rng):
        X = rng.normal(size=(40, 6))
        A = X @ X.T + 1e-3 * np.eye(40)
        w, V = matcore.eig(A)
        assert np.max(np.abs(V.T @ V - np.eye(40))) < 1e-10
        assert np.max(np.abs((V * w) @ V.T - A)) < 1e-8

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInput):
            matcore.eig([[1.0, np.nan], [np.nan, 1.0]])


class TestInverse:
    def test_identity(self):
        np.testing.assert_array_equal(matcore.inverse(np.eye(4)), np.eye(4))

    def test_diagonal(self):
        np.testing.assert_allclose(matcore.inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))

    def test_two_by_two(self):
        expected = np.array([[4 / 3, -2 / 3], [-2 / 3, 4 / 3]])
        np.testing.assert_allclose(matcore.inverse([[1.0, 0.5], [0.5, 1.0]]), expected, atol=1e-14)

    def test_product_and_involution(self, rng):
        for _ in range(50):
            A = random_pd(rng, 6)
            Ainv = matcore.inverse(A)
            assert np.max(np.abs(A @ Ainv - np.eye(6))) < 1e-8
            assert np.array_equal(Ainv, Ainv.T)
            assert np.max(np.abs(matcore.inverse(Ainv) - A)) < 1e-7

    def test_singular(self):
        with pytest.raises(SingularMatrix) as info:
            matcore.inverse([[1.0, 1.0], [1.0, 1.0]])
        assert info.value.ratio is not None and info.value.ratio <= 1e-12


class TestLogDet:
    def test_identity(self):
        assert matcore.log_det(np.eye(5)) == 0.0

    def test_diagonal(self):
        assert matcore.log_det(np.diag([2.0, 3.0])) == pytest.approx(math.log(6), abs=1e-14)

    def test_two_by_two(self):
        assert matcore.log_det([[2.0, 1.0], [1.0, 2.0]]) == pytest.approx(math.log(3), abs=1e-14)

    def test_block_additivity(self, rng):
        for _ in range(20):
            A, B = random_pd(rng, 3), random_pd(rng, 4)
            total = matcore.log_det(matcore.block_diag(A, B))
            assert abs(total - matcore.log_det(A) - matcore.log_det(B)) < 1e-9

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            matcore.log_det([[1.0, 2.0], [2.0, 1.0]])


class TestPartition:
    def test_identity(self):
        p = matcore.partition(np.eye(4), 2)
        np.testing.assert_array_equal(p.vv, np.eye(2))
        np.testing.assert_array_equal(p.vh, np.zeros((2, 2)))
        np.testing.assert_array_equal(p.hh, np.eye(2))

    def test_three_by_three(self):
        A = np.arange(9.0).reshape(3, 3)
        A = A + A.T
        p = matcore.partition(A, 1)
        assert p.visible_count == 1 and p.hidden_count == 2
        np.testing.assert_array_equal(p.vv, A[:1, :1])
        np.testing.assert_array_equal(p.vh, A[:1, 1:])
        np.testing.assert_array_equal(p.hh, A[1:, 1:])

    def test_round_trip(self, rng):
        A = random_pd(rng, 6)
        for n in range(1, 6):
            assert np.array_equal(matcore.assemble(matcore.partition(A, n)), A)

    @pytest.mark.parametrize("n", [0, 4, -1])
    def test_out_of_range(self, n):
        with pytest.raises(InvalidInput):
            matcore.partition(np.eye(4), n)


class TestPermute:
    def test_identity(self, rng):
        A = random_pd(rng, 4)
        assert np.array_equal(matcore.permute_symmetric(A, [0, 1, 2, 3]), A)

    def test_swap(self):
        np.testing.assert_array_equal(matcore.permute_symmetric(np.diag([1.0, 2.0]), [1, 0]), np.diag([2.0, 1.0]))

    def test_round_trip_and_spectrum(self, rng):
        A = random_pd(rng, 7)
        perm = rng.permutation(7)
        B = matcore.permute_symmetric(A, perm)
        for i in range(7):
            for j in range(7):
                assert B[i, j] == A[perm[i], perm[j]]
        assert np.array_equal(matcore.permute_symmetric(B, matcore.inverse_permutation(perm)), A)
        np.testing.assert_allclose(np.linalg.eigvalsh(B), np.linalg.eigvalsh(A), atol=1e-9)

    @pytest.mark.parametrize("perm", [[0, 0, 1], [0, 1], [0, 1, 3]])
    def test_not_bijective(self, perm):
        with pytest.raises(InvalidInput):
            matcore.permute_symmetric(np.eye(3), perm)


def test_as_symmetric_warns_and_symmetrizes(caplog):
    A = np.array([[1.0, 2.0], [2.1, 1.0]])
    with caplog.at_level("WARNING"):
        S = matcore.as_symmetric(A)
    assert "asymmetric" in caplog.text
    np.testing.assert_array_equal(S, S.T)
    assert S[0, 1] == pytest.approx(2.05)


def test_as_symmetric_rejects_bad_shapes():
    with pytest.raises(InvalidInput):
        matcore.as_symmetric(np.ones((2, 3)))
    with pytest.raises(InvalidInput):
        matcore.as_symmetric(np.array([[np.inf]]))

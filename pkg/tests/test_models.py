import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelfill import matcore
from kernelfill.errors import InvalidInput, NotPositiveDefinite
from kernelfill.models import (
    HarmonicMixture,
    SpectralModel,
    check_doubly_autoparallel,
    jordan_product,
    materialize,
    spectral_model_from_base,
)

from conftest import random_orthonormal, random_pd


class TestSpectralModelFromBase:
    def test_identity(self):
        model = spectral_model_from_base(np.eye(3))
        np.testing.assert_array_equal(model.coeffs, np.ones(3))
        np.testing.assert_array_equal(model.materialize(), np.eye(3))
        assert model.regularization == 0.0

    def test_diagonal(self):
        model = spectral_model_from_base(np.diag([2.0, 0.5]))
        np.testing.assert_allclose(model.coeffs, [0.5, 2.0])
        np.testing.assert_allclose(model.materialize(), np.diag([2.0, 0.5]), atol=1e-15)

    def test_two_by_two(self):
        model = spectral_model_from_base([[2.0, 1.0], [1.0, 2.0]])
        np.testing.assert_allclose(model.coeffs, [1 / 3, 1.0], atol=1e-14)
        s = 1 / math.sqrt(2)
        np.testing.assert_allclose(np.abs(model.eigvecs), np.full((2, 2), s), atol=1e-14)

    def test_reconstruction(self, rng):
        K = random_pd(rng, 8)
        assert np.max(np.abs(spectral_model_from_base(K).materialize() - K)) < 1e-8

    def test_regularizes_rank_deficient_base(self, rng):
        X = rng.normal(size=(6, 2))
        K = X @ X.T
        model = spectral_model_from_base(K)
        eps = 1e-8 * np.trace(K) / 6
        assert model.regularization == pytest.approx(eps)
        assert np.max(np.abs(model.materialize() - (K + eps * np.eye(6)))) < 1e-8

    def test_rejects_negative_definite(self):
        with pytest.raises(NotPositiveDefinite):
            spectral_model_from_base(-np.eye(3))


class TestMaterialize:
    def test_spectral_scalar(self):
        np.testing.assert_allclose(materialize(SpectralModel(np.eye(2), [2.0, 2.0])), 0.5 * np.eye(2))

    def test_harmonic_scalar(self):
        np.testing.assert_allclose(materialize(HarmonicMixture([np.eye(3)], [4.0])), 0.25 * np.eye(3))

    def test_mixed_sign_mixture_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            HarmonicMixture([np.eye(2), np.diag([1.0, 3.0])], [1.0, -1.0]).materialize()

    def test_spectral_eigenvalues_are_reciprocals(self, rng):
        for _ in range(20):
            V = random_orthonormal(rng, 5)
            b = rng.uniform(0.1, 10, size=5)
            M = SpectralModel(V, b).materialize()
            np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(M)), np.sort(1 / b), atol=1e-9)
            # eigenvectors are those of the model
            np.testing.assert_allclose(M @ V, V / b, atol=1e-9)

    def test_invalid_coeffs(self):
        with pytest.raises(InvalidInput):
            SpectralModel(np.eye(2), [1.0, 0.0])
        with pytest.raises(InvalidInput):
            SpectralModel(np.eye(2), [1.0])


class TestJordanProduct:
    def test_identity_element(self, rng):
        X = random_pd(rng, 4)
        np.testing.assert_allclose(jordan_product(X, np.eye(4)), X, atol=1e-15)

    def test_orthogonal_projectors(self):
        e1, e2 = np.outer([1, 0, 0], [1, 0, 0]), np.outer([0, 1, 0], [0, 1, 0])
        np.testing.assert_array_equal(jordan_product(e1, e2), np.zeros((3, 3)))

    def test_anticommuting_pair(self):
        # XY = [[0,-1],[1,0]], YX = [[0,1],[-1,0]]
        X = np.array([[0.0, 1.0], [1.0, 0.0]])
        Y = np.diag([1.0, -1.0])
        np.testing.assert_array_equal(jordan_product(X, Y), np.zeros((2, 2)))

    def test_bilinear_commutative(self, rng):
        for _ in range(50):
            X, Y, Z = (random_pd(rng, 4) - np.eye(4) for _ in range(3))
            a, b = rng.normal(size=2)
            assert np.max(np.abs(jordan_product(X, Y) - jordan_product(Y, X))) < 1e-10
            lhs = jordan_product(a * X + b * Y, Z)
            rhs = a * jordan_product(X, Z) + b * jordan_product(Y, Z)
            assert np.max(np.abs(lhs - rhs)) < 1e-10
            P = jordan_product(X, Y)
            assert np.array_equal(P, P.T)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInput):
            jordan_product(np.eye(2), np.eye(3))


class TestDoublyAutoparallel:
    def test_spectral_bases(self, rng):
        V = random_orthonormal(rng, 5)
        for size in range(1, 6):
            bases = [np.outer(V[:, i], V[:, i]) for i in range(size)]
            report = check_doubly_autoparallel(bases)
            assert report.is_doubly_autoparallel
            assert report.worst_residual < 1e-8

    def test_counterexample(self):
        N1 = np.array([[1.0, 1.0], [1.0, 2.0]])
        # N1 * N1 = N1^2 = [[2, 3], [3, 5]]; upper triangles (2, 3, 5) vs (1, 1, 2):
        # least-squares coefficient 15/6, residual (-0.5, 0.5, 0) -> relative sqrt(0.5)/sqrt(38)
        np.testing.assert_array_equal(jordan_product(N1, N1), [[2, 3], [3, 5]])
        report = check_doubly_autoparallel([N1])
        assert not report.is_doubly_autoparallel
        assert report.worst_residual == pytest.approx(math.sqrt(0.5) / math.sqrt(38), rel=1e-9)
        assert report.witness_pair == (0, 0)

    def test_identity(self):
        report = check_doubly_autoparallel([np.eye(3)])
        assert report.is_doubly_autoparallel

    def test_generic_pair_fails(self, rng):
        assert not check_doubly_autoparallel([random_pd(rng, 3), random_pd(rng, 3)]).is_doubly_autoparallel

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(1e-3, 1e3), min_size=3, max_size=3), st.integers(0, 2**32 - 1))
    def test_scale_invariance(self, scales, seed):
        rng = np.random.default_rng(seed)
        V = random_orthonormal(rng, 4)
        spectral = [np.outer(V[:, i], V[:, i]) for i in range(3)]
        generic = [random_pd(rng, 4) for _ in range(3)]
        for bases in (spectral, generic):
            plain = check_doubly_autoparallel(bases)
            scaled = check_doubly_autoparallel([s * N for s, N in zip(scales, bases)])
            assert plain.is_doubly_autoparallel == scaled.is_doubly_autoparallel

    def test_invalid(self):
        with pytest.raises(InvalidInput):
            check_doubly_autoparallel([])
        with pytest.raises(InvalidInput):
            check_doubly_autoparallel([np.array([[1.0, 2.0], [0.0, 1.0]])])

"""Model manifolds: spectral variants of a base matrix and harmonic mixtures.

Both families are written in inverse form, ``M = (sum_j b_j N_j)^-1``. For
spectral variants the bases are the rank-one projectors ``v_j v_j^T`` built
from the eigenvectors of a base kernel, so ``M`` keeps those eigenvectors and
has eigenvalues ``1 / b_j``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import matcore
from .errors import InvalidInput, NotPositiveDefinite, SingularMatrix

logger = logging.getLogger(__name__)

REGULARIZATION_SCALE = 1e-8
SPAN_DAMPING = 1e-12
AUTOPARALLEL_TOL = 1e-8


@dataclass(frozen=True)
class SpectralModel:
    """Spectral variant ``M = sum_j (1/b_j) v_j v_j^T``.

    ``eigvecs`` holds ``v_j`` as columns. ``regularization`` records the ridge
    that was added to the base matrix before decomposing it (0 if none).
    """

    eigvecs: NDArray
    coeffs: NDArray
    regularization: float = 0.0

    def __post_init__(self):
        V = np.asarray(self.eigvecs, dtype=float)
        b = np.asarray(self.coeffs, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise InvalidInput("eigvecs must be a square matrix")
        if b.shape != (V.shape[1],):
            raise InvalidInput(f"expected {V.shape[1]} coefficients, got shape {b.shape}")
        if not np.all(np.isfinite(b)) or np.any(b <= 0):
            raise InvalidInput("spectral coefficients must be finite and positive")
        object.__setattr__(self, "eigvecs", V)
        object.__setattr__(self, "coeffs", b)

    @property
    def dim(self) -> int:
        return self.eigvecs.shape[0]

    def with_coeffs(self, coeffs: ArrayLike) -> "SpectralModel":
        return SpectralModel(self.eigvecs, coeffs, self.regularization)

    def precision(self) -> NDArray:
        """``M^-1 = sum_j b_j v_j v_j^T``."""
        V = self.eigvecs
        P = (V * self.coeffs) @ V.T
        return 0.5 * (P + P.T)

    def materialize(self) -> NDArray:
        V = self.eigvecs
        M = (V / self.coeffs) @ V.T
        return 0.5 * (M + M.T)

    def log_det(self) -> float:
        return float(-np.sum(np.log(self.coeffs)))

    def quadratic_forms(self, D: ArrayLike) -> NDArray:
        """``tr(v_j v_j^T D) = v_j^T D v_j`` for every j."""
        V = self.eigvecs
        return np.sum(V * (np.asarray(D, dtype=float) @ V), axis=0)

    def permuted(self, perm: Sequence[int]) -> "SpectralModel":
        """The same model with samples reordered: row ``i`` becomes old row ``perm[i]``."""
        return SpectralModel(self.eigvecs[np.asarray(perm)], self.coeffs, self.regularization)


@dataclass(frozen=True)
class HarmonicMixture:
    """``M = (sum_j b_j N_j)^-1`` for arbitrary symmetric bases ``N_j``."""

    bases: tuple
    coeffs: NDArray

    def __post_init__(self):
        bases = tuple(np.asarray(N, dtype=float) for N in self.bases)
        if not bases:
            raise InvalidInput("a harmonic mixture needs at least one base")
        d = bases[0].shape
        for N in bases:
            if N.ndim != 2 or N.shape != d or N.shape[0] != N.shape[1]:
                raise InvalidInput("bases must be square matrices of one size")
            if np.max(np.abs(N - N.T)) > 1e-12 * max(1.0, np.max(np.abs(N))):
                raise InvalidInput("bases must be symmetric")
        b = np.asarray(self.coeffs, dtype=float)
        if b.shape != (len(bases),):
            raise InvalidInput(f"expected {len(bases)} coefficients, got shape {b.shape}")
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "coeffs", b)

    @property
    def dim(self) -> int:
        return self.bases[0].shape[0]

    def with_coeffs(self, coeffs: ArrayLike) -> "HarmonicMixture":
        return HarmonicMixture(self.bases, coeffs)

    def precision(self) -> NDArray:
        return sum(b * N for b, N in zip(self.coeffs, self.bases))

    def materialize(self) -> NDArray:
        try:
            return matcore.inverse(self.precision())
        except SingularMatrix as exc:
            raise NotPositiveDefinite(
                "weighted sum of bases is not positive definite", exc.ratio
            ) from exc


def materialize(model: SpectralModel | HarmonicMixture) -> NDArray:
    return model.materialize()


def spectral_model_from_base(K_B: ArrayLike) -> SpectralModel:
    """Decompose the base kernel and return the model sitting exactly at it.

    If the base has eigenvalues at or below the positive-definiteness cutoff,
    ``eps * I`` with ``eps = 1e-8 * tr(K_B) / dim`` is added first; the ridge
    is stored in ``SpectralModel.regularization``.

    Raises
    ------
    NotPositiveDefinite
        If the base is still not positive definite after the ridge.
    """
    K_B = matcore.as_symmetric(K_B, name="base matrix")
    dim = K_B.shape[0]
    eps = 0.0
    w = np.linalg.eigvalsh(K_B)
    if not w[-1] > 0 or w[0] <= matcore.PD_RATIO * w[-1]:
        eps = REGULARIZATION_SCALE * np.trace(K_B) / dim
        logger.info("base matrix is not positive definite; adding ridge %.3g", eps)
        K_B = K_B + eps * np.eye(dim)
    dec = matcore.eig(K_B)
    lam = dec.eigenvalues
    if not lam[0] > 0 or lam[-1] <= matcore.PD_RATIO * lam[0]:
        raise NotPositiveDefinite(
            "base matrix is not positive definite even after regularization",
            lam[-1] / lam[0] if lam[0] > 0 else None,
        )
    return SpectralModel(dec.eigenvectors, 1.0 / lam, eps)


def jordan_product(X: ArrayLike, Y: ArrayLike) -> NDArray:
    """``X * Y = (XY + YX) / 2``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise InvalidInput(f"jordan_product: shapes {X.shape} and {Y.shape} do not match")
    # (XY)^T == YX for symmetric inputs; this form is exactly symmetric
    XY = X @ Y
    return 0.5 * (XY + XY.T)


@dataclass(frozen=True)
class AutoparallelReport:
    is_doubly_autoparallel: bool
    worst_residual: float
    witness_pair: tuple = field(default=(0, 0))

    def to_dict(self) -> dict:
        return {
            "is_doubly_autoparallel": self.is_doubly_autoparallel,
            "worst_residual": self.worst_residual,
            "witness_pair": list(self.witness_pair),
        }


def check_doubly_autoparallel(bases: Sequence[ArrayLike]) -> AutoparallelReport:
    """Test whether every Jordan product ``N_i * N_j`` stays in ``span{N_k}``.

    Each product is projected onto the span by damped normal-equation least
    squares over the vectorized upper triangles. The reported residual is
    relative to the norm of the product. A product whose norm is below
    ``1e-12 * |N_i| |N_j|`` counts as zero and its residual is taken relative
    to ``|N_i| |N_j|`` instead, so rescaling a base never changes the verdict.
    Whether the identity lies in the span is not checked.
    """
    mats = [np.asarray(N, dtype=float) for N in bases]
    if not mats:
        raise InvalidInput("need at least one base matrix")
    d = mats[0].shape
    for N in mats:
        if N.ndim != 2 or N.shape != d or N.shape[0] != N.shape[1]:
            raise InvalidInput("bases must be square matrices of one size")
        if not np.allclose(N, N.T, atol=1e-12):
            raise InvalidInput("bases must be symmetric")
    iu = np.triu_indices(d[0])
    A = np.stack([N[iu] for N in mats], axis=1)
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0.0):
        raise InvalidInput("bases must be nonzero")
    # unit columns span the same space and make the damping scale-free
    A = A / norms
    gram = A.T @ A + SPAN_DAMPING * np.eye(len(mats))

    worst, witness = 0.0, (0, 0)
    c = len(mats)
    for i in range(c):
        for j in range(i, c):
            y = jordan_product(mats[i], mats[j])[iu]
            coef = np.linalg.solve(gram, A.T @ y)
            res = np.linalg.norm(y - A @ coef)
            ynorm = np.linalg.norm(y)
            scale = norms[i] * norms[j]
            rel = res / ynorm if ynorm >= 1e-12 * scale else res / scale
            if rel > worst:
                worst, witness = float(rel), (i, j)
    return AutoparallelReport(worst < AUTOPARALLEL_TOL, worst, witness)

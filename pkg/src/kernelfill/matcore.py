"""Dense symmetric linear algebra used throughout kernelfill.

Symmetric matrices are plain ``numpy.ndarray`` objects of shape ``(d, d)``.
External data enters through :func:`as_symmetric`, which validates the
shape and symmetrizes; every other function assumes its inputs already
passed through it (or were produced by this package).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidInput, NotPositiveDefinite, SingularMatrix

logger = logging.getLogger(__name__)

#: Eigenvalues at or below ``PD_RATIO * largest`` count as zero.
PD_RATIO = 1e-12
ASYMMETRY_WARN = 1e-8
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class EigenDecomposition(NamedTuple):
    """Eigenvalues sorted descending and the matching orthonormal columns."""

    eigenvalues: NDArray
    eigenvectors: NDArray

    def reconstruct(self) -> NDArray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


@dataclass(frozen=True)
class BlockPartition:
    """The 2x2 block view of a symmetric matrix split after row ``n``."""

    vv: NDArray
    vh: NDArray
    hh: NDArray

    @property
    def visible_count(self) -> int:
        return self.vv.shape[0]

    @property
    def hidden_count(self) -> int:
        return self.hh.shape[0]


def as_symmetric(A: ArrayLike, *, name: str = "matrix") -> NDArray:
    """Validate ``A`` and return a symmetric float copy.

    The input is replaced by ``(A + A.T) / 2``. A warning is logged when the
    original asymmetry exceeds ``1e-8``.

    Raises
    ------
    InvalidInput
        If ``A`` is not a non-empty square 2-D array of finite numbers.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise InvalidInput(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput(f"{name} has non-finite entries")
    asym = np.max(np.abs(A - A.T)) if A.size else 0.0
    if asym > ASYMMETRY_WARN:
        logger.warning("%s is asymmetric (max |A - A^T| = %.3g); symmetrizing", name, asym)
    return 0.5 * (A + A.T)


def _check_square(A: NDArray, name: str = "matrix") -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise InvalidInput(f"{name} must be a non-empty square matrix, got shape {A.shape}")


def eig(A: ArrayLike) -> EigenDecomposition:
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Sweeps visit pairs ``(p, q)`` with ``p < q`` in row-major order until the
    off-diagonal Frobenius norm drops below ``1e-12`` times the diagonal norm,
    for at most 100 sweeps. Eigenvalues are returned in descending order and
    each eigenvector is signed so that its largest-magnitude component is
    positive, which makes the output reproducible run to run.

    Raises
    ------
    InvalidInput
        If ``A`` is not square or has non-finite entries.
    """
    A = np.array(A, dtype=float)
    _check_square(A)
    if not np.all(np.isfinite(A)):
        raise InvalidInput("eig: non-finite entries")
    A = 0.5 * (A + A.T)
    d = A.shape[0]
    V = np.eye(d)

    for _ in range(JACOBI_MAX_SWEEPS):
        diag = np.diag(A)
        diag_norm = np.sqrt(np.sum(diag**2))
        off_norm = np.sqrt(np.sum((A - np.diag(diag)) ** 2))
        if off_norm <= JACOBI_TOL * diag_norm or off_norm == 0.0:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                h = A[q, q] - A[p, p]
                if abs(apq) < 1e-150 * abs(h):
                    # theta**2 would overflow; use the small-angle limit
                    t = apq / h
                else:
                    theta = h / (2.0 * apq)
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q]
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :]
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        logger.warning("eig: Jacobi did not converge in %d sweeps", JACOBI_MAX_SWEEPS)

    w = np.diag(A).copy()
    # stable sort on -w keeps ties in index order
    order = np.argsort(-w, kind="stable")
    w = w[order]
    V = V[:, order]
    pivots = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivots, np.arange(d)])
    signs[signs == 0] = 1.0
    V = V * signs
    return EigenDecomposition(w, V)


def _eigvalsh(A: NDArray) -> NDArray:
    return np.linalg.eigvalsh(A)


def pd_ratio(A: ArrayLike) -> float:
    """Smallest eigenvalue over largest; ``-inf`` when the largest is not positive."""
    w = _eigvalsh(np.asarray(A, dtype=float))
    if w[-1] <= 0:
        return -np.inf
    return float(w[0] / w[-1])


def is_positive_definite(A: ArrayLike) -> bool:
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        return False
    return pd_ratio(A) > PD_RATIO


def inverse(A: ArrayLike) -> NDArray:
    """Inverse of a positive definite matrix, symmetric by construction.

    Raises
    ------
    SingularMatrix
        If the smallest-to-largest eigenvalue ratio is at most ``1e-12``.
        The ratio is available as the ``ratio`` attribute.
    """
    return inverse_and_log_det(A)[0]


def inverse_and_log_det(A: ArrayLike):
    """``(inverse(A), log det A)`` from a single eigendecomposition."""
    A = np.asarray(A, dtype=float)
    _check_square(A)
    w, V = np.linalg.eigh(A)
    ratio = w[0] / w[-1] if w[-1] > 0 else -np.inf
    if not ratio > PD_RATIO:
        raise SingularMatrix(f"matrix is singular or indefinite (eigenvalue ratio {ratio:.3g})", ratio)
    Ainv = (V / w) @ V.T
    return 0.5 * (Ainv + Ainv.T), float(np.sum(np.log(w)))


def log_det(A: ArrayLike) -> float:
    """Log-determinant as the sum of log eigenvalues.

    Raises
    ------
    NotPositiveDefinite
        If any eigenvalue is at most ``1e-12`` times the largest.
    """
    A = np.asarray(A, dtype=float)
    _check_square(A)
    if not np.all(np.isfinite(A)):
        raise NotPositiveDefinite("log_det: non-finite entries")
    w = _eigvalsh(A)
    ratio = w[0] / w[-1] if w[-1] > 0 else -np.inf
    if not ratio > PD_RATIO:
        raise NotPositiveDefinite(f"log_det: eigenvalue ratio {ratio:.3g}", ratio)
    return float(np.sum(np.log(w)))


def partition(A: ArrayLike, n: int) -> BlockPartition:
    """Split ``A`` into visible (first ``n``) and hidden (remaining) blocks."""
    A = np.asarray(A, dtype=float)
    _check_square(A)
    d = A.shape[0]
    if not (isinstance(n, (int, np.integer)) and 1 <= n < d):
        raise InvalidInput(f"partition size must satisfy 1 <= n < {d}, got {n}")
    return BlockPartition(A[:n, :n].copy(), A[:n, n:].copy(), A[n:, n:].copy())


def assemble(p: BlockPartition) -> NDArray:
    n, m = p.vv.shape[0], p.hh.shape[0]
    if p.vh.shape != (n, m):
        raise InvalidInput(f"vh block has shape {p.vh.shape}, expected {(n, m)}")
    out = np.empty((n + m, n + m))
    out[:n, :n] = p.vv
    out[:n, n:] = p.vh
    out[n:, :n] = p.vh.T
    out[n:, n:] = p.hh
    return out


def _check_perm(perm: Sequence[int], d: int) -> NDArray:
    perm = np.asarray(perm)
    if perm.shape != (d,) or not np.issubdtype(perm.dtype, np.integer):
        raise InvalidInput(f"permutation must be {d} integers")
    if not np.array_equal(np.sort(perm), np.arange(d)):
        raise InvalidInput("permutation is not a bijection")
    return perm


def permute_symmetric(A: ArrayLike, perm: Sequence[int]) -> NDArray:
    """Return ``B`` with ``B[i, j] == A[perm[i], perm[j]]``."""
    A = np.asarray(A, dtype=float)
    _check_square(A)
    perm = _check_perm(perm, A.shape[0])
    return A[np.ix_(perm, perm)]


def inverse_permutation(perm: Sequence[int]) -> NDArray:
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv


def block_diag(*blocks: ArrayLike) -> NDArray:
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    d = sum(b.shape[0] for b in blocks)
    out = np.zeros((d, d))
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i : i + k, i : i + k] = b
        i += k
    return out

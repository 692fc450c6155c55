"""Completion of kernel matrices with missing rows and columns by the em algorithm.

The observed samples span a positive definite block ``K_I``. Completions
``D`` that keep ``K_I`` fixed form the data manifold; spectral variants of a
base kernel form the model manifold. The em loop alternates the e-step
(closest completion to the current model) with the m-step (closest model to
the current completion), both in KL divergence, and both in closed form.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from . import matcore
from .errors import (
    DegenerateDirection,
    DivergedNumerically,
    InvalidInput,
    NotPositiveDefinite,
    OptimizationFailed,
    SingularMatrix,
    SingularProjection,
)
from .models import HarmonicMixture, SpectralModel, spectral_model_from_base

logger = logging.getLogger(__name__)

DEGENERATE_QF = 1e-12
CLAMPED_COEFF = 1e12


@dataclass(frozen=True)
class IncompleteKernel:
    """Observed block ``K_I`` plus the positions of the missing samples.

    ``K_I`` is ordered by ascending original index of the observed samples.
    """

    full_dim: int
    observed: NDArray
    missing_indices: tuple

    def __post_init__(self):
        K_I = matcore.as_symmetric(self.observed, name="observed block")
        missing = tuple(sorted(int(i) for i in self.missing_indices))
        if len(set(missing)) != len(missing):
            raise InvalidInput("duplicate missing indices")
        if missing and (missing[0] < 0 or missing[-1] >= self.full_dim):
            raise InvalidInput(f"missing indices must lie in [0, {self.full_dim})")
        if K_I.shape[0] + len(missing) != self.full_dim:
            raise InvalidInput(
                f"observed block of size {K_I.shape[0]} plus {len(missing)} missing "
                f"samples does not add up to {self.full_dim}"
            )
        if not matcore.is_positive_definite(K_I):
            raise NotPositiveDefinite("observed block is not positive definite")
        object.__setattr__(self, "observed", K_I)
        object.__setattr__(self, "missing_indices", missing)

    @classmethod
    def from_full(cls, K: ArrayLike, missing: Sequence[int]) -> "IncompleteKernel":
        """Mask the rows and columns ``missing`` of a complete kernel."""
        K = np.asarray(K, dtype=float)
        missing = sorted(set(int(i) for i in missing))
        obs = [i for i in range(K.shape[0]) if i not in set(missing)]
        return cls(K.shape[0], K[np.ix_(obs, obs)], tuple(missing))

    @property
    def n_observed(self) -> int:
        return self.observed.shape[0]

    @property
    def n_missing(self) -> int:
        return len(self.missing_indices)

    @property
    def observed_indices(self) -> NDArray:
        miss = set(self.missing_indices)
        return np.array([i for i in range(self.full_dim) if i not in miss], dtype=int)

    @property
    def ordering(self) -> NDArray:
        """Permutation placing observed samples first and missing ones last."""
        return np.concatenate([self.observed_indices, np.array(self.missing_indices, dtype=int)])


@dataclass(frozen=True)
class CompletedKernel:
    matrix: NDArray
    source: IncompleteKernel

    @property
    def observed_block(self) -> NDArray:
        idx = self.source.observed_indices
        return self.matrix[np.ix_(idx, idx)]


@dataclass(frozen=True)
class GammaPrior:
    """Independent Gamma(shape ``nu``, scale ``alpha``) prior on each coefficient."""

    nu: float
    alpha: float

    def __post_init__(self):
        if not (self.nu > 0 and self.alpha > 0):
            raise InvalidInput("Gamma prior needs nu > 0 and alpha > 0")

    @property
    def mean(self) -> float:
        return self.alpha * self.nu

    @property
    def variance(self) -> float:
        return self.alpha**2 * self.nu

    def logpdf(self, b):
        b = np.asarray(b, dtype=float)
        return -b / self.alpha + (self.nu - 1.0) * np.log(b) - math.lgamma(self.nu) - self.nu * math.log(self.alpha)


@dataclass
class EmIteration:
    kl: float
    e_step_ms: float
    m_step_ms: float


@dataclass
class EmTrace:
    iterations: list = field(default_factory=list)
    converged: bool = False
    clamped: bool = False

    @property
    def kl_values(self) -> list:
        return [it.kl for it in self.iterations]

    @property
    def final_kl(self) -> float:
        return self.iterations[-1].kl if self.iterations else math.nan

    def __len__(self):
        return len(self.iterations)


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 500
    rel_tol: float = 1e-9
    prior: Optional[GammaPrior] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidInput("max_iters must be at least 1")
        if not self.rel_tol > 0:
            raise InvalidInput("rel_tol must be positive")


# --- e-step -------------------------------------------------------------------


def _e_step_from_precision(K_I: NDArray, S: NDArray, n: int):
    """e-step blocks plus ``log det S_hh``, which em needs for the divergence."""
    try:
        S_hh_inv, ld_S_hh = matcore.inverse_and_log_det(S[n:, n:])
    except SingularMatrix as exc:
        raise SingularProjection(f"hidden precision block is singular (ratio {exc.ratio:.3g})") from exc
    # P = S_vh S_hh^-1 is n x m
    P = S[:n, n:] @ S_hh_inv
    D_vh = -K_I @ P
    D_hh = S_hh_inv + P.T @ K_I @ P
    return D_vh, 0.5 * (D_hh + D_hh.T), ld_S_hh


def e_step(K_I: ArrayLike, M: ArrayLike, n: int):
    """Closed-form e-projection onto the completions of ``K_I``.

    With ``M^-1`` split into blocks ``S_vv, S_vh, S_hh`` after row ``n``::

        D_vh = -K_I S_vh S_hh^-1
        D_hh = S_hh^-1 + S_hh^-1 S_vh^T K_I S_vh S_hh^-1

    Returns
    -------
    D_vh, D_hh : ndarray
        The unobserved blocks, shapes ``(n, m)`` and ``(m, m)``.
    """
    K_I = np.asarray(K_I, dtype=float)
    M = np.asarray(M, dtype=float)
    if K_I.shape != (n, n) or M.shape[0] <= n:
        raise InvalidInput(f"need K_I of size {n} and M larger than that")
    try:
        S = matcore.inverse(M)
    except SingularMatrix as exc:
        raise NotPositiveDefinite("model matrix is not positive definite", exc.ratio) from exc
    return _e_step_from_precision(K_I, S, n)[:2]


def e_step_statistical(K_I: ArrayLike, M: ArrayLike, n: int):
    """E-step computed from the Gaussian conditional of hidden given visible.

    Under the model ``N(0, M)``, ``h | v`` has mean ``A v`` with
    ``A = -S_hh^-1 S_vh^T`` and covariance ``S_hh^-1``, where ``S = M^-1``.
    The conditional second moments are therefore ``E[v h^T | v] = v v^T A^T``
    and ``E[h h^T | v] = S_hh^-1 + A v v^T A^T``; averaging over the observed
    data replaces ``v v^T`` by ``K_I``.
    """
    K_I = np.asarray(K_I, dtype=float)
    M = np.asarray(M, dtype=float)
    if K_I.shape != (n, n) or M.shape[0] <= n:
        raise InvalidInput(f"need K_I of size {n} and M larger than that")
    ell = M.shape[0]
    try:
        S = scipy.linalg.cho_solve(scipy.linalg.cho_factor(M), np.eye(ell))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("model matrix is not positive definite") from exc
    S = 0.5 * (S + S.T)
    S_vh = S[:n, n:]
    S_hh = S[n:, n:]
    try:
        chol = scipy.linalg.cho_factor(S_hh)
    except np.linalg.LinAlgError as exc:
        raise SingularProjection("hidden precision block is singular") from exc
    cond_cov = scipy.linalg.cho_solve(chol, np.eye(ell - n))
    regression = -scipy.linalg.cho_solve(chol, S_vh.T)  # A, shape (m, n)
    D_vh = K_I @ regression.T
    D_hh = cond_cov + regression @ K_I @ regression.T
    return D_vh, 0.5 * (D_hh + D_hh.T)


# --- m-steps ------------------------------------------------------------------


def _coeffs_from_forms(q: NDArray, prior: Optional[GammaPrior], clamp: bool) -> NDArray:
    bad = q < DEGENERATE_QF
    if np.any(bad) and not clamp:
        i = int(np.flatnonzero(bad)[0])
        raise DegenerateDirection(f"v_{i}^T D v_{i} = {q[i]:.3g} is below {DEGENERATE_QF}", i)
    if prior is None:
        return np.where(bad, CLAMPED_COEFF, 1.0 / np.where(bad, 1.0, q))
    b = prior.nu / (q + 1.0 / prior.alpha)
    return np.where(bad & (b > CLAMPED_COEFF), CLAMPED_COEFF, b)


def m_step_spectral(D: ArrayLike, model: SpectralModel, *, clamp: bool = False) -> SpectralModel:
    """Closed-form m-projection onto the spectral variants: ``b_i = 1 / v_i^T D v_i``.

    With ``clamp=True`` directions whose quadratic form is below ``1e-12`` get
    ``b_i = 1e12`` instead of raising :class:`DegenerateDirection`.
    """
    q = model.quadratic_forms(np.asarray(D, dtype=float))
    return model.with_coeffs(_coeffs_from_forms(q, None, clamp))


def m_step_map(D: ArrayLike, model: SpectralModel, prior: GammaPrior, *, clamp: bool = False) -> SpectralModel:
    """MAP m-step under independent Gamma priors: ``b_i = nu / (v_i^T D v_i + 1/alpha)``."""
    q = model.quadratic_forms(np.asarray(D, dtype=float))
    return model.with_coeffs(_coeffs_from_forms(q, prior, clamp))


def m_step_numeric(
    D: ArrayLike, model: HarmonicMixture, *, tol: float = 1e-8, max_iter: int = 500
) -> HarmonicMixture:
    """m-projection onto a harmonic mixture by damped Newton on the coefficients.

    Solves ``tr(N_i (sum_j b_j N_j)^-1) = tr(N_i D)`` for all ``i``, starting
    from the mixture's current coefficients. The Hessian of the objective is
    ``H_ij = tr(N_i W N_j W)`` with ``W = (sum_j b_j N_j)^-1``.

    Raises
    ------
    OptimizationFailed
        If the residual is still above ``tol`` after ``max_iter`` iterations.
    """
    D = np.asarray(D, dtype=float)
    N = np.stack(model.bases)
    target = np.einsum("kij,ji->k", N, D)
    b = model.coeffs.copy()

    def weighted(coef):
        return np.tensordot(coef, N, axes=1)

    def objective(coef):
        w, U = np.linalg.eigh(weighted(coef))
        if w[0] <= 0:
            return np.inf, None
        return float(coef @ target - np.sum(np.log(w))), (U / w) @ U.T

    f, W = objective(b)
    if W is None:
        raise NotPositiveDefinite("starting mixture is not positive definite")
    def newton_direction(grad, W):
        NW = N @ W
        H = np.einsum("iab,jba->ij", NW, NW)
        try:
            return -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            return -np.linalg.lstsq(H, grad, rcond=None)[0]

    def polished(b, grad, W, res):
        # the residual tolerance is on the gradient, so b can still be off by
        # about res * b^2; one more quadratically convergent step removes that
        cand = b + newton_direction(grad, W)
        f_cand, W_cand = objective(cand)
        if W_cand is not None:
            grad_cand = target - np.einsum("kij,ji->k", N, W_cand)
            if np.max(np.abs(grad_cand)) <= res:
                return cand
        return b

    for it in range(max_iter):
        grad = target - np.einsum("kij,ji->k", N, W)
        res = np.max(np.abs(grad))
        if res < tol:
            return model.with_coeffs(polished(b, grad, W, res) if it else b)
        step = newton_direction(grad, W)
        t = 1.0
        if -(grad @ step) < 1e-12 * max(1.0, abs(f)):
            f_new, W_new = objective(b + step)
            if W_new is not None:
                b, f, W = b + step, f_new, W_new
                continue
        for _ in range(60):
            f_new, W_new = objective(b + t * step)
            if W_new is not None and f_new <= f + 1e-4 * t * (grad @ step):
                break
            t *= 0.5
        else:
            t = 1.0
            f_new, W_new = objective(b + step)
            if W_new is None or f_new > f + 1e-12 * max(1.0, abs(f)):
                raise OptimizationFailed(
                    f"m_step_numeric: line search failed (residual {res:.3g})", it, res
                )
        b, f, W = b + t * step, f_new, W_new
    grad = target - np.einsum("kij,ji->k", N, W)
    res = np.max(np.abs(grad))
    if res < tol:
        return model.with_coeffs(polished(b, grad, W, res))
    raise OptimizationFailed(f"m_step_numeric: residual {res:.3g} after {max_iter} iterations", max_iter, res)


# --- driver ---------------------------------------------------------------------


def init_model(K_B: ArrayLike) -> SpectralModel:
    """Starting model for em: the base matrix itself (``b_i = 1 / lambda_i``)."""
    return spectral_model_from_base(K_B)


def _kl_to_model(D: NDArray, model: SpectralModel) -> float:
    # KL(D, M) = tr(M^-1 D) + log det M - log det D - dim
    try:
        ld = matcore.log_det(D)
    except NotPositiveDefinite:
        return math.nan
    return float(np.sum(model.precision() * D) + model.log_det() - ld - D.shape[0])


def run_em(
    incomplete: IncompleteKernel,
    base: ArrayLike | SpectralModel,
    config: EmConfig | None = None,
):
    """Complete ``incomplete`` by fitting spectral variants of a base kernel.

    Parameters
    ----------
    incomplete : IncompleteKernel
    base : ndarray or SpectralModel
        The complete base kernel over all samples (original ordering), or a
        model already built from it with :func:`init_model`, which avoids
        repeating the eigendecomposition across calls.
    config : EmConfig, optional

    Returns
    -------
    completed : CompletedKernel
        Final point on the data manifold, in the original sample order; the
        observed block is a bit-exact copy of ``incomplete.observed``.
    model : SpectralModel
        Final point on the model manifold. ``model.materialize()`` is the
        estimated matrix.
    trace : EmTrace
        KL divergence after every e/m pair. Iteration stops when the relative
        change drops below ``config.rel_tol`` or after ``config.max_iters``.

    Raises
    ------
    DivergedNumerically
        If the divergence becomes non-finite.
    """
    config = config or EmConfig()
    ell = incomplete.full_dim
    model = base if isinstance(base, SpectralModel) else init_model(base)
    if model.dim != ell:
        raise InvalidInput(f"base covers {model.dim} samples, expected {ell}")

    def m_step(D, current):
        if config.prior is None:
            return m_step_spectral(D, current, clamp=True)
        return m_step_map(D, current, config.prior, clamp=True)

    trace = EmTrace()
    K_I = incomplete.observed
    n = incomplete.n_observed

    if incomplete.n_missing == 0:
        D = K_I.copy()
        t0 = time.perf_counter()
        model = m_step(D, model)
        t1 = time.perf_counter()
        trace.clamped = bool(np.any(model.coeffs == CLAMPED_COEFF))
        kl = _kl_to_model(D, model)
        if not np.isfinite(kl):
            raise DivergedNumerically("non-finite KL divergence")
        trace.iterations.append(EmIteration(kl, 0.0, 1e3 * (t1 - t0)))
        trace.converged = True
        return CompletedKernel(D, incomplete), model, trace

    # missing samples last; the coefficients index eigenvectors, not samples,
    # so only the rows of V move
    order = incomplete.ordering
    inv = matcore.inverse_permutation(order)
    V = model.eigvecs[order]
    b = model.coeffs
    ld_K_I = matcore.log_det(K_I)

    D_perm = np.empty((ell, ell))
    D_perm[:n, :n] = K_I
    prev = None
    for _ in range(config.max_iters):
        t0 = time.perf_counter()
        S = (V * b) @ V.T
        D_vh, D_hh, ld_S_hh = _e_step_from_precision(K_I, 0.5 * (S + S.T), n)
        D_perm[:n, n:] = D_vh
        D_perm[n:, :n] = D_vh.T
        D_perm[n:, n:] = D_hh
        t1 = time.perf_counter()
        q = np.sum(V * (D_perm @ V), axis=0)
        b = _coeffs_from_forms(q, config.prior, clamp=True)
        t2 = time.perf_counter()
        if np.any(b == CLAMPED_COEFF):
            trace.clamped = True
        # the Schur complement of K_I in D is S_hh^-1, so
        # log det D = log det K_I - log det S_hh
        kl = float(b @ q - np.sum(np.log(b)) - (ld_K_I - ld_S_hh) - ell)
        if not np.isfinite(kl):
            raise DivergedNumerically(f"non-finite KL divergence at iteration {len(trace)}")
        trace.iterations.append(EmIteration(kl, 1e3 * (t1 - t0), 1e3 * (t2 - t1)))
        if prev is not None and abs(prev - kl) / max(prev, 1e-12) < config.rel_tol:
            trace.converged = True
            break
        prev = kl

    D = D_perm[np.ix_(inv, inv)]
    # copy the observed block verbatim so it survives the permutation bit-for-bit
    obs = incomplete.observed_indices
    D[np.ix_(obs, obs)] = K_I
    return CompletedKernel(D, incomplete), model.with_coeffs(b), trace

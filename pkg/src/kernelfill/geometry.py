"""KL divergence, geodesics, and a generic convex minimizer on the PD cone.

A positive definite matrix ``P`` is identified with the zero-mean Gaussian
whose covariance is ``P``. The minimizer :func:`numeric_min_kl` deliberately
knows nothing about the closed-form projections in :mod:`kernelfill.completion`;
it only sees the objective and its gradient, so it can be used to check them.
"""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import matcore
from .errors import InvalidInput, NotPositiveDefinite, OptimizationFailed


class GeodesicKind(enum.Enum):
    EXPONENTIAL = "e"
    MIXTURE = "m"


class Objective(enum.Enum):
    """The two convex problems solved by :func:`numeric_min_kl`."""

    E_STEP_OVER_D = "e"
    M_STEP_OVER_B = "m"


def _require_pd(P: NDArray, name: str) -> None:
    if not matcore.is_positive_definite(P):
        raise NotPositiveDefinite(f"{name} is not positive definite")


def kl(P: ArrayLike, Q: ArrayLike) -> float:
    """KL divergence between the Gaussians with covariances ``P`` and ``Q``.

    ``tr(Q^-1 P) + log det Q - log det P - d``, with the log-determinants taken
    from eigenvalues so that large dimensions do not overflow.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.ndim != 2 or P.shape != Q.shape or P.shape[0] != P.shape[1]:
        raise InvalidInput(f"kl: shapes {P.shape} and {Q.shape} do not match")
    ld_p = matcore.log_det(P)
    ld_q = matcore.log_det(Q)
    Qinv = matcore.inverse(Q)
    return float(np.sum(Qinv * P) + ld_q - ld_p - P.shape[0])


def geodesic_point(P1: ArrayLike, P2: ArrayLike, t: float, kind: GeodesicKind) -> NDArray:
    """Point at parameter ``t`` on the e- or m-geodesic from ``P1`` to ``P2``.

    The m-geodesic is linear in the entries, the e-geodesic is linear in the
    inverses.
    """
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    if P1.shape != P2.shape:
        raise InvalidInput("geodesic endpoints differ in shape")
    _require_pd(P1, "P1")
    _require_pd(P2, "P2")
    if not 0.0 <= t <= 1.0:
        raise InvalidInput(f"t must lie in [0, 1], got {t}")
    kind = GeodesicKind(kind)
    if kind is GeodesicKind.MIXTURE:
        return t * (P2 - P1) + P1
    inv1 = matcore.inverse(P1)
    inv2 = matcore.inverse(P2)
    return matcore.inverse(t * (inv2 - inv1) + inv1)


# --- oracle minimizer -------------------------------------------------------


class _EProblem:
    """L_e(D) = tr(D S) - log det D over the free blocks of D."""

    def __init__(self, K_I: NDArray, M: NDArray):
        self.n = K_I.shape[0]
        self.ell = M.shape[0]
        self.m = self.ell - self.n
        self.K_I = K_I
        self.S = matcore.inverse(M)
        self.iu = np.triu_indices(self.m)

    def size(self):
        return self.n * self.m + len(self.iu[0])

    def to_matrix(self, x):
        n, m = self.n, self.m
        vh = x[: n * m].reshape(n, m)
        hh = np.zeros((m, m))
        hh[self.iu] = x[n * m :]
        hh = hh + np.triu(hh, 1).T
        return matcore.assemble(matcore.BlockPartition(self.K_I, vh, hh))

    def to_vector(self, D):
        n = self.n
        return np.concatenate([D[:n, n:].ravel(), D[n:, n:][self.iu]])

    def value(self, x):
        D = self.to_matrix(x)
        w = np.linalg.eigvalsh(D)
        if w[0] <= 0:
            return np.inf
        return float(np.sum(D * self.S) - np.sum(np.log(w)))

    def gradient(self, x):
        D = self.to_matrix(x)
        G = self.S - np.linalg.inv(D)
        n, m = self.n, self.m
        g_vh = 2.0 * G[:n, n:].ravel()
        Ghh = G[n:, n:]
        scale = np.where(self.iu[0] == self.iu[1], 1.0, 2.0)
        return np.concatenate([g_vh, scale * Ghh[self.iu]])

    def result(self, x):
        return self.to_matrix(x)


class _MProblem:
    """L_m(b) = sum_j b_j tr(N_j D) - log det(sum_j b_j N_j)."""

    def __init__(self, D: NDArray, bases: Sequence[NDArray]):
        self.bases = np.stack([np.asarray(N, dtype=float) for N in bases])
        self.q = np.einsum("kij,ji->k", self.bases, D)

    def size(self):
        return self.bases.shape[0]

    def _weighted(self, b):
        return np.tensordot(b, self.bases, axes=1)

    def value(self, b):
        W = self._weighted(b)
        w = np.linalg.eigvalsh(W)
        if w[0] <= 0:
            return np.inf
        return float(b @ self.q - np.sum(np.log(w)))

    def gradient(self, b):
        Winv = np.linalg.inv(self._weighted(b))
        return self.q - np.einsum("kij,ji->k", self.bases, Winv)

    def result(self, b):
        return b.copy()


def _fd_hessian(grad, x, h=1e-6):
    k = x.size
    H = np.empty((k, k))
    for i in range(k):
        step = np.zeros(k)
        step[i] = h * max(1.0, abs(x[i]))
        H[:, i] = (grad(x + step) - grad(x - step)) / (2.0 * step[i])
    return 0.5 * (H + H.T)


def _damped_newton(problem, x0, tol, max_iter):
    x = np.asarray(x0, dtype=float).copy()
    f = problem.value(x)
    if not np.isfinite(f):
        raise InvalidInput("numeric_min_kl: start point is not feasible")
    g = problem.gradient(x)
    for it in range(max_iter):
        gnorm = np.max(np.abs(g))
        if gnorm < tol:
            return x, f
        H = _fd_hessian(problem.gradient, x)
        shift = 0.0
        while True:
            try:
                L = np.linalg.cholesky(H + shift * np.eye(x.size))
                break
            except np.linalg.LinAlgError:
                shift = max(2.0 * shift, 1e-10 * max(1.0, np.max(np.abs(np.diag(H)))))
        direction = -np.linalg.solve(L.T, np.linalg.solve(L, g))
        slope = g @ direction
        step = 1.0
        if -slope < 1e-12 * max(1.0, abs(f)):
            # Newton decrement below rounding in f: the line search cannot
            # discriminate, take the pure Newton step if it stays feasible
            x_new = x + direction
            f_new = problem.value(x_new)
            if np.isfinite(f_new):
                x, f = x_new, f_new
                g = problem.gradient(x)
                continue
        for _ in range(60):
            x_new = x + step * direction
            f_new = problem.value(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            # near the optimum the decrease drops below rounding in f; take the
            # full step if it is feasible and does not increase f beyond rounding
            x_new = x + direction
            f_new = problem.value(x_new)
            if not (np.isfinite(f_new) and f_new <= f + 1e-12 * max(1.0, abs(f))):
                raise OptimizationFailed(
                    f"line search failed at iteration {it} (|grad|_inf = {gnorm:.3g})",
                    iterations=it,
                    grad_norm=gnorm,
                )
        x, f = x_new, f_new
        g = problem.gradient(x)
    gnorm = np.max(np.abs(g))
    if gnorm < tol:
        return x, f
    raise OptimizationFailed(
        f"no convergence after {max_iter} iterations (|grad|_inf = {gnorm:.3g})",
        iterations=max_iter,
        grad_norm=gnorm,
    )


def numeric_min_kl(
    objective: Objective,
    fixed_point: ArrayLike,
    free_parameterization,
    start=None,
    tol: float = 1e-8,
    max_iter: int = 500,
):
    """Minimize one of the two em objectives by damped Newton iteration.

    Gradients are analytic; the Hessian is a central finite difference of the
    gradient, so this is meant for small problems (dimension up to ~10).
    Steps are halved until the new point is positive definite and satisfies
    the Armijo condition.

    Parameters
    ----------
    objective : Objective
        ``E_STEP_OVER_D``: minimize ``tr(D M^-1) - log det D`` over the
        unobserved blocks of ``D``. ``fixed_point`` is ``M`` and
        ``free_parameterization`` is the observed block ``K_I`` (its size fixes
        the split). ``start`` is a full positive definite ``D`` whose leading
        block is ignored; defaults to ``block_diag(K_I, I)``.

        ``M_STEP_OVER_B``: minimize ``sum_j b_j tr(N_j D) - log det(sum_j b_j N_j)``
        over ``b``. ``fixed_point`` is ``D`` and ``free_parameterization`` is
        the list of base matrices ``N_j``. ``start`` is the initial ``b``
        (default all ones).
    tol : float
        Infinity-norm tolerance on the gradient.

    Returns
    -------
    argmin, value
        The full matrix ``D`` (e objective) or the coefficient vector ``b``
        (m objective), and the objective value there.

    Raises
    ------
    OptimizationFailed
        If the line search cannot find a feasible descent step or the
        iteration cap is reached.
    """
    objective = Objective(objective)
    fixed_point = np.asarray(fixed_point, dtype=float)
    if objective is Objective.E_STEP_OVER_D:
        K_I = np.asarray(free_parameterization, dtype=float)
        if K_I.shape[0] >= fixed_point.shape[0]:
            raise InvalidInput("observed block must be smaller than M")
        problem = _EProblem(K_I, fixed_point)
        if start is None:
            start = matcore.block_diag(K_I, np.eye(problem.m))
        x0 = problem.to_vector(np.asarray(start, dtype=float))
    else:
        problem = _MProblem(fixed_point, free_parameterization)
        x0 = np.ones(problem.size()) if start is None else np.asarray(start, dtype=float)
    x, f = _damped_newton(problem, x0, tol, max_iter)
    return problem.result(x), f

"""
KL divergence, geodesics and the two projections
================================================

Positive definite matrices are zero-mean Gaussians. This tour checks the
closed-form e-step against a brute-force convex minimizer.
"""

import numpy as np

from kernelfill import GeodesicKind, Objective, e_step, geodesic_point, kl, numeric_min_kl
from kernelfill import matcore

rng = np.random.default_rng(0)


def random_pd(d):
    A = rng.normal(size=(d, d + 2))
    return A @ A.T / (d + 2) + 0.1 * np.eye(d)


P, Q = random_pd(3), random_pd(3)
# KL is not symmetric
print("KL(P, Q) =", kl(P, Q), " KL(Q, P) =", kl(Q, P))

# m-geodesics move entries linearly, e-geodesics move inverses linearly
A, B = np.eye(2), 3 * np.eye(2)
print("m-midpoint:", np.diag(geodesic_point(A, B, 0.5, GeodesicKind.MIXTURE)))
print("e-midpoint:", np.diag(geodesic_point(A, B, 0.5, GeodesicKind.EXPONENTIAL)))

# e-step: closest completion of K_I to a model M, in closed form ...
K_I, M = random_pd(3), random_pd(5)
D_vh, D_hh = e_step(K_I, M, 3)
D = matcore.assemble(matcore.BlockPartition(K_I, D_vh, D_hh))

# ... and by damped Newton on the free blocks
D_num, value = numeric_min_kl(Objective.E_STEP_OVER_D, M, K_I)
print("closed form vs Newton, max entry gap:", np.abs(D - D_num).max())

# every other completion is farther from M
for _ in range(3):
    E = rng.normal(size=(3, 2)) * 0.05
    other = D.copy()
    other[:3, 3:] += E
    other[3:, :3] += E.T
    if matcore.is_positive_definite(other):
        print(f"  perturbed completion: KL {kl(other, M):.6f} >= {kl(D, M):.6f}")

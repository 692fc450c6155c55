"""
Which base families have a closed-form m-step?
==============================================

The m-step is analytic when the bases are closed under the Jordan product
X * Y = (XY + YX) / 2, up to their span. Rank-one projectors onto
orthonormal vectors pass; a generic matrix does not.
"""

import numpy as np

from kernelfill import check_doubly_autoparallel, jordan_product

rng = np.random.default_rng(1)
V, _ = np.linalg.qr(rng.normal(size=(4, 4)))
projectors = [np.outer(v, v) for v in V.T]

# products of distinct projectors vanish
print("|P0 * P1| =", np.abs(jordan_product(projectors[0], projectors[1])).max())

report = check_doubly_autoparallel(projectors)
print("spectral bases:", report.to_dict())

N1 = np.array([[1.0, 1.0], [1.0, 2.0]])
# N1 * N1 = N1 @ N1 is not a multiple of N1
print("N1 * N1 =\n", jordan_product(N1, N1))
print("single generic base:", check_doubly_autoparallel([N1]).to_dict())

# rescaling a base never changes the verdict
scaled = [s * P for s, P in zip([1e-3, 1.0, 50.0, 7.0], projectors)]
print("rescaled spectral bases:", check_doubly_autoparallel(scaled).is_doubly_autoparallel)

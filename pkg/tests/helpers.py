"""Shared test utilities: spaces, off-block builders, and independent oracles."""

import numpy as np

from curvedflats.algebra import BilinearSpace, SymmetricSpaceSpec, AlgebraElement


def so3_spec():
    return SymmetricSpaceSpec(BilinearSpace(3, 0), (2, 1), rank=1)


def so5_spec():
    return SymmetricSpaceSpec(BilinearSpace(5, 0), (3, 2), rank=2)


def so14_spec(rank=2):
    space = BilinearSpace(1, 4, diag=[1.0, -1.0, -1.0, -1.0, -1.0])
    return SymmetricSpaceSpec(space, (3, 2), rank=rank)


def from_offblock(b, spec):
    """Embed an n2 x n1 off-block as a p-element of so(J)."""
    n, n1 = spec.dim, spec.n1
    j = spec.space.j_diag
    m = np.zeros((n, n))
    m[n1:, :n1] = b
    j1 = j[:n1]
    j2 = j[n1:]
    m[:n1, n1:] = -(j1[:, None] * np.asarray(b).T * j2[None, :])
    return AlgebraElement(m, spec.space)


def random_element(rng, spec, part=None, scale=1.0):
    """Random element of g, optionally projected to k or p, Frobenius scale."""
    raw = rng.standard_normal((spec.dim, spec.dim))
    j = spec.space.j_diag
    m = 0.5 * (raw - j[:, None] * raw.T * j[None, :])
    if part == "k":
        m = spec.k_project(m)
    elif part == "p":
        m = spec.p_project(m)
    norm = np.linalg.norm(m)
    if norm > 0:
        m = m * (scale / norm)
    return AlgebraElement(m, spec.space)


def cartan_oracle(elems, spec, tol=1e-9):
    """Brute-force Cartan test from the definition, on an independent
    numerical path (hand Gram-Schmidt, normal-matrix eigendecomposition)."""
    mats = [np.asarray(e.matrix) for e in elems]
    n = spec.dim
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            comm = mats[i] @ mats[j] - mats[j] @ mats[i]
            if np.max(np.abs(comm)) > tol:
                return False
    # Span dimension by hand Gram-Schmidt on the flattened matrices.
    basis = []
    for m in mats:
        v = m.ravel().astype(float).copy()
        ref = np.linalg.norm(v)
        for b in basis:
            v = v - (v @ b) * b
        if np.linalg.norm(v) > 1e-9 * max(ref, 1.0):
            basis.append(v / np.linalg.norm(v))
    if len(basis) != spec.rank:
        return False
    # Commutant dimension inside p from the normal matrix of the linear system.
    p_basis = []
    n1 = spec.n1
    for b_row in range(spec.n2):
        for a_col in range(n1):
            e = np.zeros((n, n))
            e[n1 + b_row, a_col] = 1.0
            j = spec.space.j_diag
            p_basis.append(e - j[:, None] * e.T * j[None, :])
    rows = []
    for pb in p_basis:
        rows.append(
            np.concatenate([(pb @ m - m @ pb).ravel() for m in mats])
        )
    l_mat = np.stack(rows)
    normal = l_mat @ l_mat.T
    w = np.linalg.eigvalsh(normal)
    cutoff = max(w[-1], 1.0) * 1e-12
    null_dim = int(np.sum(w < cutoff))
    if null_dim != spec.rank:
        return False
    # Nondegenerate trace form on the span.
    ortho = [b.reshape(n, n) for b in basis]
    gram = np.array(
        [[-0.5 * np.trace(x @ y) for y in ortho] for x in ortho]
    )
    return bool(np.min(np.abs(np.linalg.eigvalsh(gram))) > tol)


def fit_order(values, ratios=2.0):
    """Least-squares convergence order from residuals at successively
    refined resolutions (each a factor ``ratios`` finer)."""
    values = np.asarray(values, dtype=float)
    steps = ratios ** -np.arange(len(values))
    slope = np.polyfit(np.log(steps), np.log(values), 1)[0]
    return float(slope)

"""Pseudo-orthogonal matrix Lie algebra kernel.

Everything downstream is built on g = so(J) = {X : X^T J + J X = 0} for a
diagonal metric J with entries +-1, together with the symmetric decomposition
g = k + p induced by conjugation with a diagonal block-signature matrix S.
All operations are pure functions of immutable values.
"""

import numpy as np

from .errors import StructuralError, NumericalError

# Membership / identity tolerance at unit matrix scale.
EPS_ALGEBRA = 1e-12


def _as_matrix(x):
    m = np.asarray(x, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise StructuralError(f"expected a square matrix, got shape {m.shape}")
    return m


class BilinearSpace:
    """R^n with the diagonal metric J, signature (pos, neg).

    The default layout puts the +1 entries first.  Presets whose isotropy
    blocks each carry a negative direction need an interleaved layout, so an
    explicit ``diag`` of +-1 entries is also accepted.
    """

    def __init__(self, pos, neg, diag=None):
        if pos < 0 or neg < 0 or pos + neg < 1:
            raise StructuralError(f"invalid signature ({pos}, {neg})")
        self.pos = int(pos)
        self.neg = int(neg)
        self.dim = self.pos + self.neg
        if diag is None:
            j = np.concatenate([np.ones(self.pos), -np.ones(self.neg)])
        else:
            j = np.asarray(diag, dtype=float)
            if j.shape != (self.dim,) or not np.all(np.abs(j) == 1.0):
                raise StructuralError("metric diagonal must consist of +-1 entries")
            if int(np.sum(j > 0)) != self.pos:
                raise StructuralError("metric diagonal does not match signature")
        self.j_diag = j
        self.j_diag.setflags(write=False)

    @property
    def metric(self):
        return np.diag(self.j_diag)

    @property
    def is_definite(self):
        return self.neg == 0

    def inner(self, u, v):
        """<u, v>_J = sum_i J_ii u_i v_i."""
        return float(np.dot(u, self.j_diag * v))

    def __eq__(self, other):
        return (
            isinstance(other, BilinearSpace)
            and self.pos == other.pos
            and self.neg == other.neg
            and np.array_equal(self.j_diag, other.j_diag)
        )

    def __repr__(self):
        return f"BilinearSpace(pos={self.pos}, neg={self.neg})"


class SymmetricSpaceSpec:
    """Algebraic data of a symmetric space G/K realized in O(J).

    The involution is sigma(X) = S X S with S = diag(+1 x n1, -1 x n2);
    k is the block-diagonal (+1) eigenspace, p the off-block (-1) eigenspace.
    ``rank`` is the dimension of maximal abelian subspaces of p and is stored
    explicitly (min(n1, n2) for the shipped presets).
    """

    def __init__(self, space, split, rank, preset_name=None):
        n1, n2 = int(split[0]), int(split[1])
        if n1 < 1 or n2 < 1 or n1 + n2 != space.dim:
            raise StructuralError(f"split {split} incompatible with dim {space.dim}")
        if rank < 1 or rank > min(n1, n2):
            raise StructuralError(f"rank {rank} impossible for split {split}")
        self.space = space
        self.n1 = n1
        self.n2 = n2
        self.rank = int(rank)
        self.preset_name = preset_name
        s = np.concatenate([np.ones(n1), -np.ones(n2)])
        s.setflags(write=False)
        self.s_diag = s
        # {0,1} masks for the sigma eigenspaces; k = block-diagonal part.
        k_mask = (np.outer(s, s) + 1.0) / 2.0
        k_mask.setflags(write=False)
        self._k_mask = k_mask

    @property
    def dim(self):
        return self.space.dim

    @property
    def split(self):
        return (self.n1, self.n2)

    def involution(self, m):
        """sigma(X) = S X S on a raw matrix."""
        return np.outer(self.s_diag, self.s_diag) * m

    def k_project(self, m):
        return m * self._k_mask

    def p_project(self, m):
        return m * (1.0 - self._k_mask)

    def k_block_definite(self):
        """True when J restricted to both involution blocks is definite."""
        j = self.space.j_diag
        return (
            abs(np.sum(j[: self.n1])) == self.n1
            and abs(np.sum(j[self.n1 :])) == self.n2
        )

    def __repr__(self):
        name = f", preset={self.preset_name!r}" if self.preset_name else ""
        return (
            f"SymmetricSpaceSpec(signature=({self.space.pos},{self.space.neg}), "
            f"split=({self.n1},{self.n2}), rank={self.rank}{name})"
        )


def membership_residual(m, space):
    """max-norm of X^T J + J X; zero iff X is in so(J)."""
    j = space.j_diag
    return float(np.max(np.abs(m.T * j[None, :] + j[:, None] * m)))


class AlgebraElement:
    """A validated element of so(J)."""

    def __init__(self, matrix, space, tol=EPS_ALGEBRA):
        m = _as_matrix(matrix)
        if m.shape[0] != space.dim:
            raise StructuralError(
                f"matrix dim {m.shape[0]} does not match space dim {space.dim}"
            )
        if not np.all(np.isfinite(m)):
            raise StructuralError("matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(m))))
        res = membership_residual(m, space)
        if res > tol * scale:
            raise StructuralError(
                f"matrix is not in so(J): residual {res:.3e} > {tol * scale:.3e}"
            )
        m = m.copy()
        m.setflags(write=False)
        self.matrix = m
        self.space = space

    @property
    def norm(self):
        return float(np.max(np.abs(self.matrix)))

    def __add__(self, other):
        _check_same_space(self, other)
        return AlgebraElement(self.matrix + other.matrix, self.space)

    def __sub__(self, other):
        _check_same_space(self, other)
        return AlgebraElement(self.matrix - other.matrix, self.space)

    def __rmul__(self, scalar):
        return AlgebraElement(float(scalar) * self.matrix, self.space)

    def __repr__(self):
        return f"AlgebraElement(dim={self.space.dim}, norm={self.norm:.3g})"


def _check_same_space(x, y):
    if x.space != y.space:
        raise StructuralError("elements live over different bilinear spaces")


def skew_project(m, space):
    """Project a raw matrix onto so(J): X -> (X - J X^T J)/2."""
    j = space.j_diag
    return 0.5 * (m - j[:, None] * m.T * j[None, :])


def bracket(x, y):
    """Lie bracket [X, Y] = XY - YX."""
    _check_same_space(x, y)
    return AlgebraElement(x.matrix @ y.matrix - y.matrix @ x.matrix, x.space)


def invariant_form(x, y):
    """Ad-invariant trace form <X, Y> = -tr(XY)/2.

    Proportional to the Killing form of so(p, q); the normalization makes
    unit off-block generators have unit length.
    """
    _check_same_space(x, y)
    return -0.5 * float(np.trace(x.matrix @ y.matrix))


def decompose(x, spec):
    """Split X into its k (block-diagonal) and p (off-block) parts."""
    if x.space != spec.space:
        raise StructuralError("element lives over a different bilinear space")
    return (
        AlgebraElement(spec.k_project(x.matrix), x.space),
        AlgebraElement(spec.p_project(x.matrix), x.space),
    )


def is_abelian(elems, tol):
    """True iff all pairwise brackets vanish within tol (max-norm)."""
    if len(elems) == 0:
        raise StructuralError("is_abelian needs a nonempty list")
    for e in elems[1:]:
        _check_same_space(elems[0], e)
    mats = [e.matrix for e in elems]
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            comm = mats[i] @ mats[j] - mats[j] @ mats[i]
            if np.max(np.abs(comm)) > tol:
                return False
    return True


def _p_basis(spec):
    """Elementary basis of p: one matrix per off-block entry (b, a)."""
    n, n1 = spec.dim, spec.n1
    basis = []
    for b in range(spec.n2):
        for a in range(n1):
            e = np.zeros((n, n))
            e[n1 + b, a] = 1.0
            basis.append(skew_project(2.0 * e, spec.space))
    return basis


def is_cartan(basis, spec, tol=1e-9):
    """Test whether span(basis) is a Cartan subspace of p.

    Checks: (a) the span is abelian, (b) its dimension equals spec.rank,
    (c) the commutant {Y in p : [Y, X_i] = 0 for all i} has dimension exactly
    spec.rank (maximality), (d) the invariant form is nondegenerate on the
    span (smallest |eigenvalue| of the Gram matrix on an orthonormalized
    basis exceeds tol).
    """
    if len(basis) == 0:
        raise StructuralError("is_cartan needs a nonempty basis")
    for e in basis:
        if e.space != spec.space:
            raise StructuralError("basis element over the wrong space")
        p_res = np.max(np.abs(spec.k_project(e.matrix)))
        if p_res > max(1.0, e.norm) * 1e-9:
            raise StructuralError(f"basis element not in p (k-part {p_res:.2e})")

    if not is_abelian(basis, tol):
        return False

    n = spec.dim
    vecs = np.stack([e.matrix.ravel() for e in basis])
    sv = np.linalg.svd(vecs, compute_uv=False)
    span_dim = int(np.sum(sv > sv[0] * 1e-9)) if sv[0] > 0 else 0
    if span_dim != spec.rank:
        return False

    # Commutant of the span inside p, as the null space of Y -> ([Y, X_i])_i.
    p_basis = _p_basis(spec)
    rows = []
    for pb in p_basis:
        row = np.concatenate(
            [(pb @ e.matrix - e.matrix @ pb).ravel() for e in basis]
        )
        rows.append(row)
    system = np.stack(rows).T  # (len(basis)*n^2, dim p)
    s = np.linalg.svd(system, compute_uv=False)
    cutoff = (s[0] if s.size and s[0] > 0 else 1.0) * 1e-9
    commutant_dim = len(p_basis) - int(np.sum(s > cutoff))
    if commutant_dim != spec.rank:
        return False

    # Nondegeneracy of the invariant form on the span, at unit scale.
    q, _ = np.linalg.qr(vecs.T[:, :])
    q = q[:, :span_dim]
    ortho = [q[:, i].reshape(n, n) for i in range(span_dim)]
    gram = np.empty((span_dim, span_dim))
    for i in range(span_dim):
        for j in range(span_dim):
            gram[i, j] = -0.5 * np.trace(ortho[i] @ ortho[j])
    eig = np.linalg.eigvalsh(gram)
    return bool(np.min(np.abs(eig)) > tol)


def expm(m):
    """Matrix exponential by scaling-and-squaring with a Taylor core.

    The squaring count is chosen so the scaled norm is <= 0.5, where the
    truncated Taylor series converges to machine precision.
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise NumericalError("expm: non-finite entries")
    norm = np.max(np.abs(m)) * m.shape[0]
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    a = m / (2.0 ** squarings)
    result = np.eye(m.shape[0]) + a
    term = a
    for k in range(2, 24):
        term = term @ a / k
        result = result + term
        if np.max(np.abs(term)) < 1e-18:
            break
    for _ in range(squarings):
        result = result @ result
    return result


def group_exp(x, t=1.0):
    """exp(tX) for X in g; lands in the pseudo-orthogonal group O(J)."""
    return expm(float(t) * x.matrix)


def in_group_residual(g, space):
    """Drift monitor: ||G^T J G - J||_max."""
    g = _as_matrix(g)
    if g.shape[0] != space.dim:
        raise StructuralError("matrix dim does not match space")
    j = space.j_diag
    return float(np.max(np.abs(g.T @ (j[:, None] * g) - np.diag(j))))

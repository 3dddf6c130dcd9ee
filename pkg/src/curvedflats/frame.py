"""Flat connection family and frame integration.

From a grid of Lax states the 1-form A^mu = A0 + mu A1 is read off per
coordinate direction as the degree-0/1 part of pi_+ Vt_r(xi).  The frame
equation F^-1 dF = A^mu is integrated edge by edge with a midpoint
exponential (order 2), re-orthonormalizing in the J-inner product after
every step to stay in O(J).
"""

import itertools

import numpy as np

from .algebra import expm, in_group_residual
from .errors import (
    DegenerateFrameError,
    InternalConsistencyError,
    StructuralError,
)
from .loops import connection_coefficients

# Residual bound for the connection extraction contract.
CONNECTION_TOL = 1e-10


class ConnectionForm:
    """Per node and direction j the pair (A0_j in k, A1_j in p)."""

    def __init__(self, a0, a1, grid, spec):
        self.a0 = a0  # (*nodes, k, n, n)
        self.a1 = a1
        self.grid = grid
        self.spec = spec

    @property
    def dims(self):
        return self.grid.dims

    def a_mu(self, mu):
        """The evaluated family A^mu = A0 + mu A1 as one array."""
        return self.a0 + mu * self.a1

    def __repr__(self):
        return f"ConnectionForm(nodes={self.grid.nodes}, dims={self.dims})"


class FrameField:
    """Group-valued frame per node for one spectral sample mu."""

    def __init__(self, mu, frames, grid, spec, max_drift):
        self.mu = mu
        self.frames = frames  # (*nodes, n, n)
        self.grid = grid
        self.spec = spec
        self.max_drift = max_drift

    def __repr__(self):
        return (
            f"FrameField(mu={self.mu}, nodes={self.grid.nodes}, "
            f"drift={self.max_drift:.2e})"
        )


def connection_from_state(sol):
    """Assemble the connection pair (A0_j, A1_j) at every node.

    The degree-0 coefficient must land in k and the degree-1 coefficient in
    p; a violation signals a broken flow and raises.
    """
    grid, spec, d = sol.grid, sol.spec, sol.d
    n = spec.dim
    k = grid.dims
    a0 = np.empty(grid.nodes + (k, n, n))
    a1 = np.empty(grid.nodes + (k, n, n))
    for index in np.ndindex(*grid.nodes):
        stack = sol.states[index]
        scale = max(1.0, float(np.max(np.abs(stack))))
        for j, r in enumerate(sol.family.powers):
            c0, c1 = connection_coefficients(stack, r, d)
            bad = max(
                float(np.max(np.abs(spec.p_project(c0)))),
                float(np.max(np.abs(spec.k_project(c1)))),
            )
            if bad > CONNECTION_TOL * scale ** max(r, 1):
                raise InternalConsistencyError(
                    f"connection coefficients off the k/p split at node {index},"
                    f" flow r={r}: residual {bad:.3e}"
                )
            a0[index + (j,)] = c0
            a1[index + (j,)] = c1
    return ConnectionForm(a0, a1, grid, spec)


def grid_derivative(field, axis, h):
    """Order-2 derivative along a grid axis (central inside, one-sided at the
    boundary)."""
    out = np.empty_like(field)
    fwd = [slice(None)] * field.ndim
    mid_hi = [slice(None)] * field.ndim
    mid_lo = [slice(None)] * field.ndim
    fwd[axis] = slice(1, -1)
    mid_hi[axis] = slice(2, None)
    mid_lo[axis] = slice(None, -2)
    out[tuple(fwd)] = (field[tuple(mid_hi)] - field[tuple(mid_lo)]) / (2.0 * h)

    def edge(at, s0, s1, s2, sign):
        sl = [slice(None)] * field.ndim
        sl[axis] = at
        g0, g1, g2 = sl.copy(), sl.copy(), sl.copy()
        g0[axis], g1[axis], g2[axis] = s0, s1, s2
        out[tuple(sl)] = sign * (
            -3.0 * field[tuple(g0)] + 4.0 * field[tuple(g1)] - field[tuple(g2)]
        ) / (2.0 * h)

    edge(0, 0, 1, 2, 1.0)
    edge(-1, -1, -2, -3, -1.0)
    return out


def mc_residual(conn, mu0, grid):
    """Max-norm zero-curvature defect of A^mu0 over interior nodes.

    For a coordinate pair (i, j) the defect is
    d_i A_j - d_j A_i + [A_i, A_j]; central differences make it O(h^2) for a
    flat connection.
    """
    if grid.dims < 2:
        raise StructuralError("curvature needs at least two coordinate axes")
    if any(nn < 3 for nn in grid.nodes):
        raise StructuralError("need at least 3 nodes per axis for curvature")
    a = conn.a_mu(mu0)
    h = grid.steps
    k = grid.dims
    interior = tuple(slice(1, -1) for _ in range(k))
    worst = 0.0
    for i in range(k):
        ai = a[..., i, :, :]
        for j in range(i + 1, k):
            aj = a[..., j, :, :]
            res = (
                grid_derivative(aj, i, h[i])
                - grid_derivative(ai, j, h[j])
                + ai @ aj
                - aj @ ai
            )
            worst = max(worst, float(np.max(np.abs(res[interior]))))
    return worst


def abelian_residual(conn):
    """Max-norm of [A1_i, A1_j] over all nodes and direction pairs."""
    k = conn.dims
    worst = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            ai = conn.a1[..., i, :, :]
            aj = conn.a1[..., j, :, :]
            worst = max(worst, float(np.max(np.abs(ai @ aj - aj @ ai))))
    return worst


def j_orthonormalize(g, space, pivot_tol=1e-10):
    """Gram-Schmidt in the J-inner product with column pivoting on |<v,v>_J|.

    For definite J this is classical Gram-Schmidt; the pivot order guards
    against near-null columns in the indefinite case.  Columns keep their
    positions and the output sign pattern must match J.
    """
    j = space.j_diag
    n = g.shape[0]
    cols = g.copy()
    out = np.empty_like(g)
    remaining = list(range(n))
    while remaining:
        quads = [cols[:, i] @ (j * cols[:, i]) for i in remaining]
        pick = int(np.argmax([abs(q) for q in quads]))
        q = quads[pick]
        if abs(q) < pivot_tol:
            raise DegenerateFrameError(
                f"orthonormalization pivot {abs(q):.3e} below {pivot_tol:.1e}"
            )
        i = remaining.pop(pick)
        sign = 1.0 if q > 0 else -1.0
        u = cols[:, i] / np.sqrt(abs(q))
        out[:, i] = u
        ju = j * u
        for c in remaining:
            cols[:, c] -= sign * (cols[:, c] @ ju) * u
    for i in range(n):
        if (out[:, i] @ (j * out[:, i])) * j[i] <= 0:
            raise DegenerateFrameError(
                f"column {i} acquired the wrong causal character"
            )
    return out


def integrate_frame(conn, mu0, grid, axis_priority=None):
    """Integrate F^-1 dF = A^mu0 over the grid with F(origin) = I.

    Each edge applies exp(h * Abar) with Abar the average of the edge's
    endpoint values (midpoint exponential, order 2), followed by
    re-J-orthonormalization.  The sweep matches the grid fill order; passing
    ``axis_priority`` permutes which axis is treated as primary (used to
    quantify path independence).
    """
    spec = conn.spec
    space = spec.space
    n = spec.dim
    a = conn.a_mu(mu0)
    h = grid.steps
    frames = np.zeros(grid.nodes + (n, n))
    frames[(0,) * grid.dims] = np.eye(n)
    priority = list(axis_priority) if axis_priority is not None else list(
        range(grid.dims)
    )
    if sorted(priority) != list(range(grid.dims)):
        raise StructuralError(f"invalid axis priority {axis_priority}")
    max_drift = 0.0
    order = [range(grid.nodes[ax]) for ax in priority]
    for combo in itertools.product(*order):
        index = [0] * grid.dims
        for ax, i in zip(priority, combo):
            index[ax] = i
        index = tuple(index)
        if all(i == 0 for i in index):
            continue
        axis = priority[max(pos for pos, i in enumerate(combo) if i > 0)]
        prev = list(index)
        prev[axis] -= 1
        prev = tuple(prev)
        abar = 0.5 * (a[prev + (axis,)] + a[index + (axis,)])
        step = frames[prev] @ expm(h[axis] * abar)
        step = j_orthonormalize(step, space)
        frames[index] = step
        max_drift = max(max_drift, in_group_residual(step, space))
    return FrameField(mu0, frames, grid, spec, max_drift)

"""Grid integration of the commuting Lax hierarchy.

The state xi lives in the degree 0..d polynomial loops; each flow is the
isospectral ODE dxi/dx_j = [xi, pi_+ Vt_{r_j}(xi)].  The grid is filled by a
lexicographic sweep: flow 1 along the x1-axis from the seed, then flow 2
along x2 from every x1-node, and so on.  Everything is deterministic.
"""

import itertools

import numpy as np

from .errors import BlowUpError, StructuralError
from .loops import LaxState, flow_rhs, spectral_invariants, twist_residual

# Abort integration when the state grows past this factor of the seed norm.
BLOWUP_FACTOR = 1e8


class GridSpec:
    """Rectangular coordinate grid: extents L_j >= 0 sampled at N_j nodes."""

    def __init__(self, extents, nodes):
        extents = tuple(float(v) for v in extents)
        nodes = tuple(int(v) for v in nodes)
        if len(extents) != len(nodes) or not extents:
            raise StructuralError("extents and nodes must have equal length >= 1")
        if any(v <= 0 or not np.isfinite(v) for v in extents):
            raise StructuralError(f"extents must be finite positive: {extents}")
        if any(v < 2 for v in nodes):
            raise StructuralError(f"each axis needs at least 2 nodes: {nodes}")
        self.extents = extents
        self.nodes = nodes

    @property
    def dims(self):
        return len(self.nodes)

    @property
    def steps(self):
        return tuple(l / (n - 1) for l, n in zip(self.extents, self.nodes))

    def coords(self, index):
        return tuple(i * h for i, h in zip(index, self.steps))

    def refine(self):
        """Same extents with doubled resolution (N -> 2N - 1)."""
        return GridSpec(self.extents, tuple(2 * n - 1 for n in self.nodes))

    def __repr__(self):
        return f"GridSpec(extents={self.extents}, nodes={self.nodes})"


class GridSolution:
    """Lax states on every grid node, stored as one coefficient array."""

    def __init__(self, states, grid, family, spec):
        self.states = states  # (*nodes, d+1, n, n)
        self.grid = grid
        self.family = family
        self.spec = spec

    @property
    def d(self):
        return self.family.d

    def state_at(self, index):
        return LaxState(self.states[tuple(index)], self.spec, check=False)

    def max_twist_residual(self):
        res = 0.0
        for index in np.ndindex(*self.grid.nodes):
            res = max(res, twist_residual(self.states[index], 0, self.spec))
        return res

    def __repr__(self):
        return f"GridSolution(nodes={self.grid.nodes}, d={self.d})"


def _rk4(stack, r, d, t, steps, norm0):
    h = t / steps
    y = stack
    for i in range(steps):
        k1 = flow_rhs(y, r, d)
        k2 = flow_rhs(y + 0.5 * h * k1, r, d)
        k3 = flow_rhs(y + 0.5 * h * k2, r, d)
        k4 = flow_rhs(y + h * k3, r, d)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > BLOWUP_FACTOR * norm0:
            raise BlowUpError(
                f"Lax flow r={r} blew up at t={(i + 1) * h:.6g}", last_t=i * h
            )
    return y


def integrate_flow(xi0, r, t, steps):
    """Integrate the r-flow for time t with the given number of RK4 steps."""
    if steps < 1:
        raise StructuralError(f"steps must be >= 1, got {steps}")
    if t == 0.0:
        return LaxState(xi0.stack.copy(), xi0.spec, check=False)
    norm0 = max(1.0, xi0.norm())
    y = _rk4(xi0.stack, r, xi0.d, float(t), int(steps), norm0)
    return LaxState(y, xi0.spec, check=False)


def integrate_grid(xi0, family, grid, substeps=4):
    """Fill the grid with the lexicographic sweep.

    The predecessor of a node is found along its last nonzero axis, so the
    x1-axis is filled first from the seed, then planes are swept upward.
    """
    if family.dims != grid.dims:
        raise StructuralError(
            f"family has {family.dims} flows but grid has {grid.dims} axes"
        )
    if xi0.d != family.d:
        raise StructuralError("state degree does not match family degree")
    n = xi0.spec.dim
    d = family.d
    states = np.zeros(grid.nodes + (d + 1, n, n))
    states[(0,) * grid.dims] = xi0.stack
    norm0 = max(1.0, xi0.norm())
    steps = grid.steps
    for index in itertools.product(*(range(nn) for nn in grid.nodes)):
        if all(i == 0 for i in index):
            continue
        axis = max(j for j, i in enumerate(index) if i > 0)
        prev = list(index)
        prev[axis] -= 1
        try:
            states[index] = _rk4(
                states[tuple(prev)], family.powers[axis], d, steps[axis],
                substeps, norm0,
            )
        except BlowUpError as err:
            raise BlowUpError(
                f"blow-up while filling node {index}: {err}", node=index
            ) from err
    return GridSolution(states, grid, family, xi0.spec)


def commutativity_check(xi0, family, target, steps):
    """Max-norm discrepancy between integrating to ``target`` with axis order
    (1 then 2 then ...) versus (2 then 1 then ...).  Converges at 4th order
    in the substep count."""
    if family.dims < 2:
        raise StructuralError("commutativity check needs at least two flows")
    target = tuple(float(v) for v in target)
    if len(target) != family.dims:
        raise StructuralError("target dimension does not match family")

    def run(order):
        y = xi0.stack
        norm0 = max(1.0, xi0.norm())
        for axis in order:
            if target[axis] != 0.0:
                y = _rk4(y, family.powers[axis], family.d, target[axis], steps,
                         norm0)
        return y

    forward = list(range(family.dims))
    swapped = [1, 0] + forward[2:]
    return float(np.max(np.abs(run(forward) - run(swapped))))


def conservation_report(sol, mu_samples, max_power):
    """Relative drift of tr(xi(mu0)^p) across the grid, per mu0 and power p.

    Returns {"table": {mu0: {p: deviation}}, "max": worst deviation}.
    """
    if not mu_samples:
        raise StructuralError("need at least one mu sample")
    if any(m == 0.0 for m in mu_samples):
        raise StructuralError("mu samples must be nonzero")
    origin = sol.state_at((0,) * sol.grid.dims)
    table = {}
    worst = 0.0
    powers = list(range(2, max_power + 1, 2))
    for mu0 in mu_samples:
        ref = spectral_invariants(origin, mu0, max_power)
        devs = {p: 0.0 for p in powers}
        for index in np.ndindex(*sol.grid.nodes):
            vals = spectral_invariants(sol.state_at(index), mu0, max_power)
            for p, v, v0 in zip(powers, vals, ref):
                dev = abs(v - v0) / (1.0 + abs(v0))
                if dev > devs[p]:
                    devs[p] = dev
        table[mu0] = devs
        worst = max(worst, max(devs.values()))
    return {"table": table, "max": worst}

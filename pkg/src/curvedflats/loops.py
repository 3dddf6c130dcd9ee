"""Twisted loop algebra of matrix Laurent polynomials.

A loop is xi(mu) = sum_k mu^k xi_k with twist condition S xi(mu) S = xi(-mu),
i.e. even-degree coefficients in k and odd-degree ones in p.  The splitting
into nonnegative and negative degrees yields the projections pi_+/pi_- and
the operator R = (pi_+ - pi_-)/2, which generates the commuting flows
X_r(xi) = [xi, pi_+ Vt_r(xi)] with Vt_r(xi)(mu) = mu^(1-d*r) xi(mu)^r.
"""

import warnings

import numpy as np

from .algebra import EPS_ALGEBRA, membership_residual
from .errors import NumericalError, StructuralError


def stack_mul(a, b):
    """Cauchy product of two coefficient stacks (degree-indexed matmul)."""
    la, lb = a.shape[0], b.shape[0]
    prod = a[:, None] @ b[None, :]
    out = np.zeros((la + lb - 1,) + a.shape[1:])
    for i in range(la):
        out[i : i + lb] += prod[i]
    return out


def stack_power(a, r):
    out = a
    for _ in range(r - 1):
        out = stack_mul(out, a)
    return out


def twist_residual(stack, lo, spec):
    """Violation of the twist condition: k-parity of coefficients plus
    membership of each coefficient in g."""
    res = 0.0
    for i in range(stack.shape[0]):
        coeff = stack[i]
        wrong = spec.p_project(coeff) if (lo + i) % 2 == 0 else spec.k_project(coeff)
        res = max(res, float(np.max(np.abs(wrong))))
        res = max(res, membership_residual(coeff, spec.space))
    return res


class LoopElement:
    """Matrix Laurent polynomial with coefficients indexed by degree.

    ``check='twisted'`` validates the twist condition; ``check='none'`` admits
    untwisted products (loop_mul outputs, whose coefficients leave g).
    """

    def __init__(self, stack, lo, spec, check="twisted", tol=EPS_ALGEBRA):
        stack = np.asarray(stack, dtype=float)
        n = spec.dim
        if stack.ndim != 3 or stack.shape[1:] != (n, n):
            raise StructuralError(f"coefficient stack has shape {stack.shape}")
        self.stack = stack
        self.lo = int(lo)
        self.spec = spec
        if check == "twisted":
            scale = max(1.0, float(np.max(np.abs(stack)))) if stack.size else 1.0
            res = twist_residual(stack, self.lo, spec)
            if res > tol * scale:
                raise StructuralError(
                    f"twist condition violated: residual {res:.3e}"
                )

    @classmethod
    def from_coeffs(cls, coeffs, spec, check="twisted", tol=EPS_ALGEBRA):
        """Build from a {degree: matrix} mapping."""
        if not coeffs:
            raise StructuralError("empty coefficient mapping")
        lo, hi = min(coeffs), max(coeffs)
        n = spec.dim
        stack = np.zeros((hi - lo + 1, n, n))
        for k, m in coeffs.items():
            stack[k - lo] = np.asarray(m, dtype=float)
        return cls(stack, lo, spec, check=check, tol=tol)

    @property
    def hi(self):
        return self.lo + self.stack.shape[0] - 1

    def coefficient(self, k):
        if self.lo <= k <= self.hi:
            return self.stack[k - self.lo]
        return np.zeros((self.spec.dim, self.spec.dim))

    def evaluate(self, mu):
        powers = mu ** np.arange(self.lo, self.hi + 1, dtype=float)
        return np.tensordot(powers, self.stack, axes=1)

    def norm(self):
        return float(np.max(np.abs(self.stack))) if self.stack.size else 0.0

    def __repr__(self):
        return f"LoopElement(degrees {self.lo}..{self.hi}, dim={self.spec.dim})"


class LaxState:
    """Polynomial loop of degrees 0..d (d odd), the state space of the flows."""

    def __init__(self, stack, spec, check=True, tol=EPS_ALGEBRA):
        stack = np.asarray(stack, dtype=float)
        d = stack.shape[0] - 1
        if d < 1 or d % 2 == 0:
            raise StructuralError(f"degree d must be odd and positive, got {d}")
        self.inner = LoopElement(stack, 0, spec, check="twisted" if check else "none",
                                 tol=tol)
        self.d = d

    @property
    def stack(self):
        return self.inner.stack

    @property
    def spec(self):
        return self.inner.spec

    def evaluate(self, mu):
        return self.inner.evaluate(mu)

    def norm(self):
        return self.inner.norm()

    def __repr__(self):
        return f"LaxState(d={self.d}, dim={self.spec.dim})"


class FlowFamily:
    """Commuting flows indexed by odd matrix powers r_1 < ... < r_k."""

    def __init__(self, powers, d):
        powers = tuple(int(r) for r in powers)
        if not powers:
            raise StructuralError("flow family needs at least one power")
        if any(r < 1 or r % 2 == 0 for r in powers):
            raise StructuralError(f"powers must be odd and positive: {powers}")
        if any(b <= a for a, b in zip(powers, powers[1:])):
            raise StructuralError(f"powers must be strictly increasing: {powers}")
        if d < 1 or d % 2 == 0:
            raise StructuralError(f"d must be odd and positive, got {d}")
        self.powers = powers
        self.d = int(d)

    @property
    def dims(self):
        return len(self.powers)

    def __repr__(self):
        return f"FlowFamily(powers={self.powers}, d={self.d})"


def loop_mul(xi, eta):
    """Product of loops; the result is generally untwisted."""
    if xi.spec.space != eta.spec.space:
        raise StructuralError("loops over different spaces")
    return LoopElement(
        stack_mul(xi.stack, eta.stack), xi.lo + eta.lo, xi.spec, check="none"
    )


def _slice(xi, keep):
    idx = [i for i in range(xi.stack.shape[0]) if keep(xi.lo + i)]
    if not idx:
        n = xi.spec.dim
        return LoopElement(np.zeros((1, n, n)), 0, xi.spec, check="none")
    stack = np.zeros_like(xi.stack[min(idx) : max(idx) + 1])
    for i in idx:
        stack[i - min(idx)] = xi.stack[i]
    return LoopElement(stack, xi.lo + min(idx), xi.spec, check="none")


def project_plus(xi):
    """pi_+: keep degrees >= 0 (polynomial part)."""
    return _slice(xi, lambda k: k >= 0)


def project_minus(xi):
    """pi_-: keep degrees <= -1 (part vanishing at infinity)."""
    return _slice(xi, lambda k: k <= -1)


def r_matrix(xi):
    """R = (pi_+ - pi_-)/2, coefficient-wise exact."""
    plus = project_plus(xi)
    minus = project_minus(xi)
    coeffs = {}
    for k in range(plus.lo, plus.hi + 1):
        coeffs[k] = 0.5 * plus.coefficient(k)
    for k in range(minus.lo, minus.hi + 1):
        coeffs[k] = coeffs.get(k, 0.0) - 0.5 * minus.coefficient(k)
    return LoopElement.from_coeffs(coeffs, xi.spec, check="none")


def tilde_v(xi, r):
    """Vt_r(xi)(mu) = mu^(1 - d*r) xi(mu)^r for odd r; degrees 1-dr .. 1.

    Even powers break the equivariance that makes the flows well defined on
    the twisted algebra, so they are rejected.
    """
    if r < 1 or r % 2 == 0:
        raise StructuralError(f"flow power must be odd and positive, got {r}")
    d = xi.d
    powered = stack_power(xi.stack, r)
    return LoopElement(powered, 1 - d * r, xi.spec, check="none")


def flow_field(xi, r):
    """X_r(xi) = [xi, pi_+ Vt_r(xi)], truncated to degrees 0..d.

    The bracket a priori reaches degree d+1, but the top coefficient is
    [xi_d, xi_d^r] = 0; coefficients outside 0..d are checked to vanish.
    """
    plus = project_plus(tilde_v(xi, r))
    full = stack_mul(xi.stack, plus.stack) - stack_mul(plus.stack, xi.stack)
    d = xi.d
    tail = full[d + 1 :]
    if tail.size:
        tol = 1e-12 * max(1.0, float(np.max(np.abs(xi.stack))) ** (r + 1))
        tail_norm = float(np.max(np.abs(tail)))
        if tail_norm > tol:
            raise NumericalError(
                f"flow field left the state space: stray coefficient {tail_norm:.3e}"
            )
    return LaxState(full[: d + 1], xi.spec, check=False)


def flow_rhs(stack, r, d):
    """Raw right-hand side of the r-flow on a coefficient stack (hot path).

    Equals flow_field up to dropping the identically-zero degree-(d+1) term.
    """
    powered = stack_power(stack, r)
    b0 = powered[d * r - 1]
    b1 = powered[d * r]
    out = np.empty_like(stack)
    for k in range(d + 1):
        acc = stack[k] @ b0 - b0 @ stack[k]
        if k >= 1:
            acc += stack[k - 1] @ b1 - b1 @ stack[k - 1]
        out[k] = acc
    return out


def connection_coefficients(stack, r, d):
    """Degree-0 and degree-1 coefficients of pi_+ Vt_r: the (A0, A1) pair."""
    powered = stack_power(stack, r)
    return powered[d * r - 1], powered[d * r]


def spectral_invariants(xi, mu0, max_power):
    """[tr(xi(mu0)^2), tr(xi(mu0)^4), ...] up to max_power (even)."""
    if max_power < 2 or max_power % 2 != 0:
        raise StructuralError(f"max_power must be even and >= 2, got {max_power}")
    if mu0 == 0.0:
        warnings.warn("spectral invariants evaluated at mu0 = 0", stacklevel=2)
    m = xi.evaluate(mu0)
    m2 = m @ m
    out = []
    acc = np.eye(m.shape[0])
    for _ in range(max_power // 2):
        acc = acc @ m2
        val = float(np.trace(acc))
        if not np.isfinite(val):
            raise NumericalError("non-finite spectral invariant")
        out.append(val)
    return out

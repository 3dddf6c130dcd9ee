"""Named symmetric-space presets.

Each preset is a Grassmannian-type space O(J)/(O(J1) x O(J2)) hosting the
Gauss maps of isometric immersions M^m -> S between space forms; the four
quadric rows differ by which blocks carry negative metric directions.  The
layout always puts the (m+1)-dimensional tangent-plane block first so the
reconstructed map phi reads off as the frame's first column.
"""

import numpy as np

from .algebra import BilinearSpace, SymmetricSpaceSpec
from .errors import StructuralError


def _spec(name, m, n, block1_neg, block2_neg, swap_blocks=False):
    n1, n2 = m + 1, n + 1 - m
    if n2 < 1:
        raise StructuralError(f"preset needs n >= m, got m={m}, n={n}")
    d1 = np.concatenate([-np.ones(block1_neg), np.ones(n1 - block1_neg)])
    d2 = np.concatenate([-np.ones(block2_neg), np.ones(n2 - block2_neg)])
    if swap_blocks:
        n1, n2, d1, d2 = n2, n1, d2, d1
    diag = np.concatenate([d1, d2])
    neg = int(np.sum(diag < 0))
    space = BilinearSpace(len(diag) - neg, neg, diag=diag)
    return SymmetricSpaceSpec(space, (n1, n2), rank=min(n1, n2), preset_name=name)


def sphere(m=2, n=3):
    """O(n+2) / O(m+1) x O(n+1-m): Gauss maps of M^m(c) in S^{n+1}(c), c > 0."""
    return _spec("sphere", m, n, 0, 0)


def sphere_grassmannian(m=2, n=3):
    """Same group data as ``sphere``; the critical codimension n = 2m - 1
    gives the reconstruction target S^{2m}."""
    return _spec("sphere-grassmannian", m, n, 0, 0)


def de_sitter(m=2, n=3):
    """O(1, n+1) / O(1+m) x O(1, n-m): ambient de Sitter quadric."""
    return _spec("de-sitter", m, n, 0, 1)


def hyperbolic(m=2, n=3):
    """O(1, n+1) / O(1, m) x O(n+1-m): ambient hyperbolic quadric."""
    return _spec("hyperbolic", m, n, 1, 0)


def anti_de_sitter(m=2, n=3):
    """O(2, n) / O(1, m) x O(1, n-m): ambient anti-de Sitter quadric."""
    return _spec("anti-de-sitter", m, n, 1, 1)


def isothermic():
    """O(1, 4) acting on space-like 3-planes in Lorentzian 5-space,
    K = O(3) x O(1, 1); the home of the isothermic-surface reduction."""
    diag = np.array([1.0, 1.0, 1.0, 1.0, -1.0])
    space = BilinearSpace(4, 1, diag=diag)
    return SymmetricSpaceSpec(space, (3, 2), rank=2, preset_name="isothermic")


_PRESETS = {
    "sphere": sphere,
    "de-sitter": de_sitter,
    "hyperbolic": hyperbolic,
    "anti-de-sitter": anti_de_sitter,
    "sphere-grassmannian": sphere_grassmannian,
    "isothermic": isothermic,
}

_DESCRIPTIONS = {
    "sphere": "O(n+2)/O(m+1)xO(n+1-m), definite; spherical quadric",
    "de-sitter": "O(1,n+1)/O(1+m)xO(1,n-m); de Sitter quadric",
    "hyperbolic": "O(1,n+1)/O(1,m)xO(n+1-m); hyperbolic quadric",
    "anti-de-sitter": "O(2,n)/O(1,m)xO(1,n-m); anti-de Sitter quadric",
    "sphere-grassmannian": "O(n+2)/O(m+1)xO(n+1-m), reconstruction target S^{2m}",
    "isothermic": "O(1,4)/O(3)xO(1,1), space-like 3-planes in Lorentz 5-space",
}


def preset_names():
    return list(_PRESETS)


def describe(name):
    return _DESCRIPTIONS[name]


def make_preset(name, m=None, n=None):
    """Instantiate a preset by name; m and n default per preset."""
    if name not in _PRESETS:
        raise StructuralError(
            f"unknown preset {name!r}; known: {', '.join(_PRESETS)}"
        )
    if name == "isothermic":
        if m is not None or n is not None:
            raise StructuralError("the isothermic preset has fixed dimensions")
        return isothermic()
    kwargs = {}
    if m is not None:
        kwargs["m"] = int(m)
    if n is not None:
        kwargs["n"] = int(n)
    return _PRESETS[name](**kwargs)

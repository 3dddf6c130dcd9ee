import numpy as np
import pytest

from curvedflats.algebra import (
    AlgebraElement,
    BilinearSpace,
    SymmetricSpaceSpec,
    bracket,
    decompose,
    group_exp,
    in_group_residual,
    invariant_form,
    is_abelian,
    is_cartan,
)
from curvedflats.errors import StructuralError

from helpers import (
    cartan_oracle,
    from_offblock,
    random_element,
    so3_spec,
    so5_spec,
    so14_spec,
)

RNG = np.random.default_rng(20240311)


def elem(i, j, n):
    m = np.zeros((n, n))
    m[i, j] = 1.0
    return m


def test_bilinear_space_validation():
    s = BilinearSpace(3, 2)
    assert np.allclose(s.metric @ s.metric, np.eye(5))
    assert s.dim == 5
    with pytest.raises(StructuralError):
        BilinearSpace(2, 1, diag=[1.0, 2.0, -1.0])
    with pytest.raises(StructuralError):
        BilinearSpace(2, 1, diag=[1.0, -1.0, -1.0])


def test_symmetric_spec_validation():
    with pytest.raises(StructuralError):
        SymmetricSpaceSpec(BilinearSpace(3, 0), (2, 2), rank=1)
    with pytest.raises(StructuralError):
        SymmetricSpaceSpec(BilinearSpace(3, 0), (2, 1), rank=3)


def test_membership_enforced():
    spec = so3_spec()
    with pytest.raises(StructuralError):
        AlgebraElement(np.eye(3), spec.space)


def test_bracket_antisymmetry_and_zero():
    spec = so3_spec()
    x = random_element(RNG, spec)
    zero = AlgebraElement(np.zeros((3, 3)), spec.space)
    assert bracket(x, x).norm == 0.0
    assert bracket(x, zero).norm == 0.0


def test_bracket_so3_example():
    # [P1, P2] = -(E12 - E21) for P1 = E13 - E31, P2 = E23 - E32 (1-based),
    # frozen against a direct matrix-product oracle.
    spec = so3_spec()
    p1 = AlgebraElement(elem(0, 2, 3) - elem(2, 0, 3), spec.space)
    p2 = AlgebraElement(elem(1, 2, 3) - elem(2, 1, 3), spec.space)
    expected = -(elem(0, 1, 3) - elem(1, 0, 3))
    oracle = p1.matrix @ p2.matrix - p2.matrix @ p1.matrix
    assert np.allclose(oracle, expected)
    assert np.allclose(bracket(p1, p2).matrix, expected)


def test_bracket_dimension_mismatch():
    with pytest.raises(StructuralError):
        bracket(
            random_element(RNG, so3_spec()),
            random_element(RNG, so5_spec()),
        )


def test_invariant_form_values():
    spec = so3_spec()
    p1 = AlgebraElement(elem(0, 2, 3) - elem(2, 0, 3), spec.space)
    zero = AlgebraElement(np.zeros((3, 3)), spec.space)
    assert invariant_form(p1, p1) == pytest.approx(1.0, abs=1e-14)
    assert invariant_form(p1, zero) == 0.0


def test_invariant_form_ad_invariance():
    spec = so5_spec()
    for _ in range(20):
        x = random_element(RNG, spec)
        y = random_element(RNG, spec)
        z = random_element(RNG, spec)
        lhs = invariant_form(bracket(z, x), y) + invariant_form(x, bracket(z, y))
        assert abs(lhs) < 1e-12


def test_invariant_form_definite_on_compact_basis():
    # Gram matrix on the elementary basis of so(4) is positive definite.
    space = BilinearSpace(4, 0)
    basis = [
        AlgebraElement(elem(i, j, 4) - elem(j, i, 4), space)
        for i in range(4)
        for j in range(i + 1, 4)
    ]
    gram = np.array([[invariant_form(x, y) for y in basis] for x in basis])
    assert np.min(np.linalg.eigvalsh(gram)) > 0.5


def test_decompose_identities():
    spec = so5_spec()
    for _ in range(10):
        x = random_element(RNG, spec)
        k_part, p_part = decompose(x, spec)
        assert np.allclose(k_part.matrix + p_part.matrix, x.matrix, atol=1e-14)
        assert np.allclose(spec.involution(k_part.matrix), k_part.matrix)
        assert np.allclose(spec.involution(p_part.matrix), -p_part.matrix)
    block = AlgebraElement(elem(0, 1, 5) - elem(1, 0, 5), spec.space)
    k_part, p_part = decompose(block, spec)
    assert p_part.norm == 0.0
    off = AlgebraElement(elem(0, 2, 3) - elem(2, 0, 3), so3_spec().space)
    k_part, p_part = decompose(off, so3_spec())
    assert k_part.norm == 0.0


def test_decomposition_bracket_relations():
    spec = so5_spec()
    for _ in range(10):
        k1 = random_element(RNG, spec, part="k")
        k2 = random_element(RNG, spec, part="k")
        p1 = random_element(RNG, spec, part="p")
        p2 = random_element(RNG, spec, part="p")
        assert np.max(np.abs(spec.p_project(bracket(k1, k2).matrix))) < 1e-12
        assert np.max(np.abs(spec.k_project(bracket(k1, p1).matrix))) < 1e-12
        assert np.max(np.abs(spec.p_project(bracket(p1, p2).matrix))) < 1e-12


def test_jacobi_identity():
    spec = so5_spec()
    for _ in range(20):
        x = random_element(RNG, spec)
        y = random_element(RNG, spec)
        z = random_element(RNG, spec)
        total = (
            bracket(bracket(x, y), z).matrix
            + bracket(bracket(y, z), x).matrix
            + bracket(bracket(z, x), y).matrix
        )
        assert np.max(np.abs(total)) < 1e-10


def test_is_abelian():
    spec = so5_spec()
    b1 = from_offblock([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]], spec)
    b2 = from_offblock([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]], spec)
    assert is_abelian([b1, b2], tol=1e-12)
    assert is_abelian([b1], tol=1e-12)
    s3 = so3_spec()
    p1 = AlgebraElement(elem(0, 2, 3) - elem(2, 0, 3), s3.space)
    p2 = AlgebraElement(elem(1, 2, 3) - elem(2, 1, 3), s3.space)
    assert not is_abelian([p1, p2], tol=1e-12)
    with pytest.raises(StructuralError):
        is_abelian([], tol=1e-12)


def test_is_cartan_examples():
    spec = so5_spec()
    b1 = from_offblock([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]], spec)
    b2 = from_offblock([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]], spec)
    assert is_cartan([b1, b2], spec, tol=1e-9)
    assert not is_cartan([b1], spec, tol=1e-9)
    assert not is_cartan([b1, b1], spec, tol=1e-9)
    k_elem = AlgebraElement(elem(0, 1, 5) - elem(1, 0, 5), spec.space)
    with pytest.raises(StructuralError):
        is_cartan([k_elem], spec)


def test_is_cartan_agrees_with_oracle_so3_so5():
    s3, s5 = so3_spec(), so5_spec()
    for _ in range(15):
        span3 = [random_element(RNG, s3, part="p")]
        assert is_cartan(span3, s3, tol=1e-9) == cartan_oracle(span3, s3)
        span5 = [random_element(RNG, s5, part="p") for _ in range(2)]
        assert is_cartan(span5, s5, tol=1e-9) == cartan_oracle(span5, s5)


def test_is_cartan_agrees_with_oracle_indefinite():
    spec = so14_spec(rank=2)
    null_spec = so14_spec(rank=1)
    null_elem = from_offblock([[1.0, 1.0, 0.0], [0.0, 0.0, 0.0]], null_spec)
    # Null direction: the trace form degenerates on its span.
    assert invariant_form(null_elem, null_elem) == pytest.approx(0.0, abs=1e-14)
    assert is_cartan([null_elem], null_spec, tol=1e-9) == cartan_oracle(
        [null_elem], null_spec
    )
    assert not is_cartan([null_elem], null_spec, tol=1e-9)
    # A commuting nondegenerate pair is Cartan; both tests agree on it and on
    # random singletons (dimension deficit).
    b1 = from_offblock([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]], spec)
    b2 = from_offblock([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]], spec)
    assert is_cartan([b1, b2], spec, tol=1e-9)
    assert cartan_oracle([b1, b2], spec)
    for _ in range(10):
        span = [random_element(RNG, spec, part="p")]
        assert is_cartan(span, spec, tol=1e-9) == cartan_oracle(span, spec)


def test_group_exp_identity_and_rotation():
    spec = so3_spec()
    zero = AlgebraElement(np.zeros((3, 3)), spec.space)
    assert np.allclose(group_exp(zero), np.eye(3))
    x = AlgebraElement(elem(0, 1, 3) - elem(1, 0, 3), spec.space)
    got = group_exp(x, np.pi / 2)
    expected = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(got, expected, atol=1e-14)


def test_group_exp_inverse_and_group_residual():
    spec = so5_spec()
    for _ in range(10):
        x = random_element(RNG, spec, scale=0.8)
        t = float(RNG.uniform(-1.0, 1.0))
        g = group_exp(x, t)
        assert np.max(np.abs(g @ group_exp(x, -t) - np.eye(5))) < 1e-12
        assert in_group_residual(g, spec.space) < 1e-12


def test_group_exp_indefinite_signature():
    spec = so14_spec()
    x = random_element(RNG, spec, scale=0.7)
    g = group_exp(x, 0.9)
    assert in_group_residual(g, spec.space) < 1e-12


def test_non_finite_entries_rejected():
    from curvedflats.algebra import expm
    from curvedflats.errors import NumericalError

    spec = so3_spec()
    bad = np.zeros((3, 3))
    bad[0, 1], bad[1, 0] = np.inf, -np.inf
    with pytest.raises(StructuralError):
        AlgebraElement(bad, spec.space)
    with pytest.raises(NumericalError):
        expm(bad)


def test_in_group_residual_values():
    space = BilinearSpace(2, 0)
    assert in_group_residual(np.eye(2), space) == 0.0
    assert in_group_residual(2.0 * np.eye(2), space) == pytest.approx(3.0)

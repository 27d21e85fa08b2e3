from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpnbody import (
    ExpansionError,
    FullState,
    MassSystem,
    QuadraticForm,
    RankError,
    bracket,
    casimirs_numeric,
    compose,
    expand,
    project,
    structure_matrix,
    structure_matrix_closed,
    structure_matrix_general,
)
from lpnbody.invariants import (
    REVERSED_PAIRS_N3,
    angular_momentum_sq,
    delta_basis,
    gram_det,
    layout,
    pairs,
)
from lpnbody.lie_poisson import (
    EXPECTED_KERNEL_DIM,
    basis_form,
    basis_forms,
    blocks,
    blocks_closed,
    blocks_general,
    jacobi_residual,
    kinetic_identity_residuals,
    laplacian_unit,
    structure_dump,
    structure_tensor,
)
from lpnbody.oracle import bracket_table

from conftest import random_full_state, random_masses, random_reduced, rel_err

# {Y_a, Y_b} at masses (1, 2, 3), q = ((0,0), (1,0), (0,2)), v = ((0,1), (1,1), (-1,0)),
# i.e. Y = (1, 4, 5, 1, 2, 5, 1, -2, 0, -1); computed with oracle.bracket_table.
_F = Fraction
FROZEN_B_N3 = [
    [0, 0, 0, 6, -4, 4, 3, 0, 1, 2],
    [0, 0, 0, 0, _F(-32, 3), _F(-8, 3), 0, _F(32, 3), _F(8, 3), -8],
    [0, 0, 0, 2, _F(-4, 3), 0, 1, _F(8, 3), _F(25, 3), _F(10, 3)],
    [-6, 0, -2, 0, 0, 0, -3, 2, -2, 5],
    [4, _F(32, 3), _F(4, 3), 0, 0, 0, 2, _F(-16, 3), -2, _F(-20, 3)],
    [-4, _F(8, 3), 0, 0, 0, 0, -2, -2, _F(-25, 3), _F(5, 3)],
    [-3, 0, -1, 3, -2, 2, 0, 1, _F(-1, 2), _F(7, 2)],
    [0, _F(-32, 3), _F(-8, 3), -2, _F(16, 3), 2, -1, 0, _F(1, 3), _F(8, 3)],
    [-1, _F(-8, 3), _F(-25, 3), 2, 2, _F(25, 3), _F(1, 2), _F(-1, 3), 0, _F(-5, 2)],
    [-2, 8, _F(-10, 3), -5, _F(20, 3), _F(-5, 3), _F(-7, 2), _F(-8, 3), _F(5, 2), 0],
]


# --- quadratic forms -----------------------------------------------------------


def test_laplacian_unit():
    np.testing.assert_array_equal(laplacian_unit(3, 1, 2), [[1, -1, 0], [-1, 1, 0], [0, 0, 0]])


def test_basis_form_rho12():
    f = basis_form(3, "rho", (1, 2))
    np.testing.assert_array_equal(f.R, [[1, -1, 0], [-1, 1, 0], [0, 0, 0]])
    assert not f.P.any() and not f.S.any() and not f.D.any()


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_basis_forms_are_block_laplacian(n):
    forms = basis_forms(n)
    assert len(forms) == layout(n).size
    assert all(f.is_block_laplacian() for f in forms)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_basis_forms_evaluate_to_projection(rng, n):
    s = MassSystem.equal(n)
    st_ = random_full_state(rng, n, 3)
    y = project(s, st_).vector
    vals = [f.evaluate(st_.q, st_.v) for f in basis_forms(n)]
    np.testing.assert_allclose(vals, y, rtol=1e-12, atol=1e-12)


def test_basis_form_errors():
    with pytest.raises(ValueError):
        basis_form(3, "rho", (1, 1))
    with pytest.raises(ValueError):
        basis_form(3, "delta", 1)
    with pytest.raises(ValueError):
        basis_form(3, "tau", (1, 2))


def test_hessian_roundtrip(rng):
    R, P, S, D = rng.normal(size=(4, 3, 3))
    A = QuadraticForm(R + R.T, P + P.T, S + S.T, D - D.T)
    B = QuadraticForm.from_hessian(A.hessian)
    for x, y in zip((A.R, A.P, A.S, A.D), (B.R, B.P, B.S, B.D)):
        np.testing.assert_allclose(x, y, atol=1e-15)
    assert np.array_equal(A.hessian, A.hessian.T)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_compose_is_antisymmetric(rng, n):
    s = MassSystem(random_masses(rng, n))
    forms = basis_forms(n)
    for _ in range(10):
        a, b = rng.integers(len(forms), size=2)
        AB = compose(forms[a], forms[b], s)
        BA = compose(forms[b], forms[a], s)
        np.testing.assert_allclose(AB.flat, -BA.flat, atol=1e-14)
        assert not compose(forms[a], forms[a], s).flat.any()


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_compose_closes_on_basis(n):
    s = MassSystem.equal(n)
    forms = basis_forms(n)
    for A in forms:
        for B in forms[:: max(1, len(forms) // 7)]:
            AB = compose(A, B, s)
            assert AB.is_block_laplacian()
            mat = np.array([f.flat for f in forms]).T
            assert np.abs(mat @ expand(AB) - AB.flat).max() <= 1e-12


def test_expand_rejects_non_invariant():
    n = 3
    z = np.zeros((n, n))
    bad = QuadraticForm(np.eye(n), z, z, z)  # |q_1|^2 + ... is not translation invariant
    with pytest.raises(ExpansionError):
        expand(bad)


@pytest.mark.parametrize("m1,m2", [(1.0, 1.0), (1.0, 3.0), (0.7, 2.5)])
def test_two_body_rho_nu_bracket(m1, m2):
    s = MassSystem((m1, m2))
    mu = m1 * m2 / (m1 + m2)
    c = expand(compose(basis_form(2, "rho", (1, 2)), basis_form(2, "nu", (1, 2)), s))
    np.testing.assert_allclose(c, [0.0, 0.0, 4.0 / mu], atol=1e-13)


# --- the structure matrix --------------------------------------------------------


def test_structure_matrix_frozen_n3():
    s = MassSystem((1.0, 2.0, 3.0))
    y = [1, 4, 5, 1, 2, 5, 1, -2, 0, -1]
    ref = np.array(FROZEN_B_N3, dtype=float)
    np.testing.assert_allclose(structure_matrix_closed(s, y), ref, atol=1e-13)
    np.testing.assert_allclose(structure_matrix_general(s, y), ref, atol=1e-13)


@pytest.mark.parametrize("m1,m2", [(1.0, 1.0), (2.0, 5.0)])
def test_two_body_structure_matrix(rng, m1, m2):
    s = MassSystem((m1, m2))
    mu = m1 * m2 / (m1 + m2)
    r, n_, sg = rng.uniform(0.5, 2.0, size=3)
    ref = (2 / mu) * np.array([[0, 2 * sg, r], [-2 * sg, 0, -n_], [-r, n_, 0]])
    for B in (structure_matrix_closed(s, [r, n_, sg]), structure_matrix_general(s, [r, n_, sg])):
        np.testing.assert_allclose(B, ref, rtol=1e-13)
    assert bracket(s, [r, n_, sg], [1, 0, 0], [0, 0, 1]) == pytest.approx(2 * r / mu)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_structure_matrix_matches_oracle(rng, n):
    s = MassSystem(random_masses(rng, n))
    for d in (2, 3, 4):
        for _ in range(10):
            st_ = random_full_state(rng, n, d)
            ref = bracket_table(s, st_)
            B = structure_matrix(s, project(s, st_))
            np.testing.assert_allclose(B, ref, rtol=1e-10, atol=1e-12)


def test_structure_matrix_general_matches_oracle_n5(rng):
    s = MassSystem(random_masses(rng, 5))
    for _ in range(5):
        st_ = random_full_state(rng, 5, 3)
        np.testing.assert_allclose(structure_matrix(s, project(s, st_)), bracket_table(s, st_),
                                   rtol=1e-10, atol=1e-11)


@pytest.mark.parametrize("n", [3, 4])
def test_closed_equals_general(rng, n):
    s = MassSystem(random_masses(rng, n))
    N = layout(n).size
    for _ in range(20):
        y = rng.normal(size=N)
        np.testing.assert_allclose(structure_matrix_closed(s, y), structure_matrix_general(s, y),
                                   atol=1e-12)
    bc, bg = blocks_closed(s), blocks_general(s)
    for a, b in ((bc.TL, bg.TL), (bc.Tv, bg.Tv), (bc.TD, bg.TD), (bc.TS, bg.TS)):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_closed_form_rejects_n5():
    with pytest.raises(ValueError):
        structure_matrix_closed(MassSystem.equal(5), np.zeros(36))


def test_n3_delta_block_explicit_form(rng):
    m = np.array([1.3, 0.6, 2.2])
    s = MassSystem(tuple(m))
    d = 0.7
    D = blocks(s).Delta(np.array([d]))
    # explicit form in pair order (23, 13, 12)
    ref = d * np.array([[0, 1 / m[2], -1 / m[1]], [-1 / m[2], 0, 1 / m[0]],
                        [1 / m[1], -1 / m[0], 0]])
    P = REVERSED_PAIRS_N3
    np.testing.assert_allclose(D[np.ix_(P, P)], ref, rtol=1e-14)


def test_n3_L_of_sigma_equal_masses():
    s = MassSystem.equal(3)
    sg = np.array([0.3, -1.1, 0.8])  # pairs 12, 13, 23
    L = blocks(s).L(sg)
    # diagonal 2 sigma_ij / mu_ij with mu = 1/2
    np.testing.assert_allclose(np.diag(L), 4 * sg)
    # shared index j: (tau_ij + tau_jl - tau_il) / m_j, e.g. pairs 12 and 13 share body 1
    s12, s13, s23 = sg
    assert L[0, 1] == pytest.approx(s12 + s13 - s23)


def test_antisymmetry_and_linearity(rng):
    for n in (2, 3, 4, 5):
        s = MassSystem(random_masses(rng, n))
        y = rng.normal(size=layout(n).size)
        B = structure_matrix(s, y)
        assert np.array_equal(B, -B.T)
        np.testing.assert_allclose(structure_matrix(s, 2.5 * y), 2.5 * B, rtol=1e-14, atol=1e-14)


@given(st.floats(0.2, 5.0))
def test_mass_degree_minus_one(lam):
    base = MassSystem((1.0, 1.5, 0.8, 2.0))
    y = np.linspace(-1, 1, 21)
    np.testing.assert_allclose(structure_matrix(base.scaled(lam), y),
                               structure_matrix(base, y) / lam, rtol=1e-12, atol=1e-13)


def test_dimension_independence(rng):
    # a planar state embedded in higher dimensions and rotated gives the same Y and B
    from scipy.stats import special_ortho_group
    s = MassSystem(random_masses(rng, 3))
    st2 = random_full_state(rng, 3, 2)
    y2 = project(s, st2).vector
    for d in (3, 4, 6):
        R = special_ortho_group.rvs(d, random_state=rng)
        pad = np.zeros((3, d - 2))
        q = np.hstack([st2.q, pad]) @ R.T
        v = np.hstack([st2.v, pad]) @ R.T
        y = project(s, FullState(q, v)).vector
        assert rel_err(y, y2) < 1e-13
        np.testing.assert_allclose(structure_matrix(s, y), structure_matrix(s, y2), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_jacobi_identity(rng, n):
    s = MassSystem(random_masses(rng, n))
    N = layout(n).size
    for _ in range(50):
        y = rng.normal(size=N)
        a, b, c = rng.normal(size=(3, N))
        assert abs(jacobi_residual(s, y, a, b, c)) <= 1e-9


@pytest.mark.parametrize("n", [3, 4])
def test_jacobi_on_basis_triples(n):
    s = MassSystem.equal(n)
    C = structure_tensor(s)
    # c[a,b,k] c[k,c,l] + cyclic = 0 for all basis triples
    J = (np.einsum("abk,kcl->abcl", C, C) + np.einsum("bck,kal->abcl", C, C)
         + np.einsum("cak,kbl->abcl", C, C))
    assert np.abs(J).max() < 1e-10


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_kinetic_gradient_identities(rng, n):
    s = MassSystem(random_masses(rng, n))
    lay = layout(n)
    for _ in range(20):
        r = kinetic_identity_residuals(s, rng.normal(size=lay.n_pairs), rng.normal(size=lay.n_delta))
        assert max(r.values()) <= 1e-13 * 10 ** (n > 4)


# --- Casimirs ----------------------------------------------------------------------


def _fd_grad(f, y, h=1e-6):
    g = np.zeros_like(y)
    for k in range(y.size):
        e = np.zeros_like(y)
        e[k] = h * max(1.0, abs(y[k]))
        g[k] = (f(y + e) - f(y - e)) / (2 * e[k])
    return g


@pytest.mark.parametrize("n", [2, 3, 4])
def test_kernel_dimension_generic(rng, n):
    s = MassSystem(random_masses(rng, n))
    for _ in range(10):
        _, y = random_reduced(rng, s, d=2 * n - 2 if n > 2 else 3)
        K = casimirs_numeric(s, y, expected=EXPECTED_KERNEL_DIM[n])
        assert K.shape == (EXPECTED_KERNEL_DIM[n], layout(n).size)


def test_kernel_dimension_random_vectors(rng):
    for n in (2, 3, 4):
        s = MassSystem.equal(n)
        K = casimirs_numeric(s, rng.normal(size=layout(n).size))
        assert K.shape[0] == EXPECTED_KERNEL_DIM[n]


def test_kernel_rank_error_on_planar_state(rng):
    s = MassSystem.equal(3)
    y = project(s, random_full_state(rng, 3, 1)).vector
    with pytest.raises(RankError):
        casimirs_numeric(s, y, expected=2)


@pytest.mark.parametrize("n", [2, 3])
def test_casimir_gradients_in_kernel(rng, n):
    s = MassSystem(random_masses(rng, n))
    for _ in range(5):
        _, y = random_reduced(rng, s, d=4)
        K = casimirs_numeric(s, y, expected=EXPECTED_KERNEL_DIM[n])
        for f in (lambda z: gram_det(s, z), lambda z: angular_momentum_sq(s, z)):
            g = _fd_grad(f, y)
            resid = g - K.T @ (K @ g)
            assert np.linalg.norm(resid) <= 1e-8 * max(1.0, np.linalg.norm(g))
            # and a Casimir brackets to zero with every coordinate function
            B = structure_matrix(s, y)
            assert np.abs(B @ g).max() <= 1e-8 * np.abs(B).max() * np.abs(g).sum()


def test_two_body_casimir_direction(rng):
    s = MassSystem((1.0, 2.0))
    mu = 2.0 / 3.0
    y = np.array([1.3, 0.9, 0.4])
    K = casimirs_numeric(s, y, expected=1)[0]
    g = mu**2 * np.array([y[1], y[0], -2 * y[2]])
    assert abs(abs(K @ g) / np.linalg.norm(g) - 1) < 1e-12


def test_structure_dump_shapes():
    s = MassSystem.equal(4)
    d = structure_dump(s, np.linspace(0.1, 2.1, 21))
    assert np.array(d["B"]).shape == (21, 21)
    assert np.array(d["Sigma"]).shape == (3, 3)
    assert np.array(d["v_rho"]).shape == (6, 3)
    assert len(d["labels"]) == 21
    assert "Sigma" not in structure_dump(MassSystem.equal(2), [1.0, 1.0, 0.0])


def test_delta_basis_count_matches_kernel_free_dimension():
    # the basis forms are independent, so dim sp(2n-2) = (2n-1)(n-1) for every n
    for n in range(2, 7):
        mat = np.array([f.flat for f in basis_forms(n)])
        assert np.linalg.matrix_rank(mat) == layout(n).size
        assert len(delta_basis(n)) == (n - 1) * (n - 2) // 2
        assert len(pairs(n)) == n * (n - 1) // 2

import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpnbody import (
    KV,
    SCHEMES,
    STRANG,
    VK,
    YOSHIDA4,
    CollisionError,
    FullState,
    MassSystem,
    SplitScheme,
    compose_scheme,
    flow_K,
    flow_V,
    integrate,
    project,
    scale_state,
    strang_step,
    structure_matrix,
)
from lpnbody.integrator import flow_V_direct, iterate, jacobian_K, jacobian_V, step_with_jacobian
from lpnbody.invariants import angular_momentum_sq, gram_det, hamiltonian_rel, harmonic, layout
from lpnbody.oracle import drift_map, kick_map, reference_trajectory

from conftest import random_full_state, random_masses, random_reduced, rel_err


def _fd_jacobian(f, y, step):
    J = np.empty((y.size, y.size))
    for k in range(y.size):
        e = np.zeros_like(y)
        e[k] = step * max(1.0, abs(y[k]))
        J[:, k] = (f(y + e) - f(y - e)) / (2 * e[k])
    return J


# --- schemes --------------------------------------------------------------------


def test_scheme_consistency_check():
    with pytest.raises(ValueError):
        SplitScheme("bad", (("K", 0.5), ("V", 1.0)), 1)
    with pytest.raises(ValueError):
        SplitScheme("bad", (("K", 1.0), ("W", 1.0)), 1)


def test_shipped_schemes():
    assert STRANG.stages == (("K", 0.5), ("V", 1.0), ("K", 0.5))
    assert set(SCHEMES) == {"KV", "VK", "strang", "yoshida4"}
    w1 = 1 / (2 - 2 ** (1 / 3))
    w0 = 1 - 2 * w1
    ks = [c for f, c in YOSHIDA4.stages if f == "K"]
    vs = [c for f, c in YOSHIDA4.stages if f == "V"]
    np.testing.assert_allclose(ks, [w1 / 2, (w1 + w0) / 2, (w0 + w1) / 2, w1 / 2])
    np.testing.assert_allclose(vs, [w1, w0, w1])
    assert YOSHIDA4.order == 4


# --- kinetic flow -----------------------------------------------------------------


def test_flow_K_formula():
    s = MassSystem.equal(2)
    np.testing.assert_allclose(flow_K(s, [1.0, 2.0, 3.0], 0.5), [1 + 3 + 0.5, 2.0, 4.0])
    y = np.arange(1.0, 11.0)
    np.testing.assert_array_equal(flow_K(MassSystem.equal(3), y, 0.0), y)


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_flow_K_group_property(s_, t):
    sys_ = MassSystem.equal(3)
    y = np.linspace(0.5, 3.0, 10)
    a = flow_K(sys_, flow_K(sys_, y, s_), t)
    b = flow_K(sys_, y, s_ + t)
    assert rel_err(a, b) < 1e-13


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("d", [2, 3, 4])
def test_drift_commutes_with_projection(rng, n, d):
    s = MassSystem(random_masses(rng, n))
    st_ = random_full_state(rng, n, d)
    t = rng.uniform(-1, 1)
    lhs = project(s, drift_map(s, st_, t)).vector
    rhs = flow_K(s, project(s, st_), t)
    assert rel_err(lhs, rhs) < 1e-12


# --- potential flow ----------------------------------------------------------------


def test_flow_V_identity_at_zero(rng):
    s = MassSystem.equal(3)
    _, y = random_reduced(rng, s)
    np.testing.assert_array_equal(flow_V(s, y, 0.0), y)


def test_flow_V_two_bodies_closed_form():
    # two unit masses at unit distance at rest: V' = 1/2, mu = 1/2
    s = MassSystem.equal(2)
    mu, g = 0.5, 0.5
    for t in (0.1, 0.3, -0.2):
        r, nu, sg = flow_V(s, [1.0, 0.0, 0.0], t)
        assert r == 1.0
        assert sg == pytest.approx(-2 / mu * t * 1.0 * g)  # = -2t
        assert sg == pytest.approx(-2 * t)
        # nu(t) = nu - 4/mu t sigma V' + 4/mu^2 t^2 rho V'^2
        assert nu == pytest.approx(4 / mu**2 * t * t * g * g)


def test_flow_V_two_bodies_general_state(rng):
    m1, m2 = 0.7, 1.9
    s = MassSystem((m1, m2))
    mu = m1 * m2 / (m1 + m2)
    r, nu, sg = 1.3, 0.8, -0.4
    g = 0.5 * m1 * m2 * r**-1.5
    t = 0.37
    out = flow_V(s, [r, nu, sg], t)
    ref = [r, nu - 4 / mu * t * sg * g + 4 / mu**2 * t * t * r * g * g, sg - 2 / mu * t * r * g]
    np.testing.assert_allclose(out, ref, rtol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("d", [2, 3, 4])
def test_kick_commutes_with_projection(rng, n, d):
    s = MassSystem(random_masses(rng, n))
    for _ in range(3):
        st_, y = random_reduced(rng, s, d)
        t = rng.uniform(-0.5, 0.5)
        lhs = project(s, kick_map(s, st_, t)).vector
        assert rel_err(flow_V(s, y, t), lhs) < 1e-11


@pytest.mark.parametrize("n", [3, 4, 5])
def test_flow_V_linear_and_direct_forms_agree(rng, n):
    s = MassSystem(random_masses(rng, n))
    _, y = random_reduced(rng, s)
    assert rel_err(flow_V(s, y, 0.3), flow_V_direct(s, y, 0.3)) < 1e-13


def test_flow_V_harmonic_potential(rng):
    s = MassSystem(random_masses(rng, 3), potential=harmonic())
    st_, y = random_reduced(rng, s)
    assert rel_err(flow_V(s, y, 0.4), project(s, kick_map(s, st_, 0.4)).vector) < 1e-12


def test_flow_V_collision():
    s = MassSystem.equal(3)
    y = np.array([1.0, 0.0, 1.0, 0, 0, 0, 0, 0, 0, 0])
    with pytest.raises(CollisionError):
        flow_V(s, y, 0.1)


# --- Jacobians ------------------------------------------------------------------------


@pytest.mark.parametrize("n", [2, 3, 4])
def test_jacobians_match_finite_differences(rng, n):
    s = MassSystem(random_masses(rng, n))
    _, y = random_reduced(rng, s)
    t = 0.2
    np.testing.assert_allclose(jacobian_K(s, t), _fd_jacobian(lambda z: flow_K(s, z, t), y, 1e-6),
                               atol=1e-8)
    JV = jacobian_V(s, y, t)
    JF = _fd_jacobian(lambda z: flow_V(s, z, t), y, 1e-6)
    assert np.abs(JV - JF).max() <= 1e-7 * max(1.0, np.abs(JV).max())


def test_jacobian_requires_second_derivative():
    from lpnbody.invariants import PairPotential
    pot = PairPotential("lin", lambda r, mm, G: r, lambda r, mm, G: np.ones_like(r))
    s = MassSystem.equal(2, potential=pot)
    with pytest.raises(ValueError):
        jacobian_V(s, [1.0, 1.0, 0.0], 0.1)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_poisson_map_identity(rng, n):
    s = MassSystem(random_masses(rng, n))
    for scheme in (STRANG, YOSHIDA4):
        _, y = random_reduced(rng, s)
        h = 0.05
        y1, J = step_with_jacobian(s, y, h, scheme)
        np.testing.assert_allclose(y1, compose_scheme(s, y, h, scheme), rtol=1e-14, atol=1e-14)
        B0, B1 = structure_matrix(s, y), structure_matrix(s, y1)
        scale = np.abs(B1).max()
        assert np.abs(J @ B0 @ J.T - B1).max() <= 1e-10 * scale
        Jfd = _fd_jacobian(lambda z: compose_scheme(s, z, h, scheme), y, 1e-5)
        assert np.abs(Jfd @ B0 @ Jfd.T - B1).max() <= 1e-6 * scale


# --- compositions ------------------------------------------------------------------------


def test_strang_equals_compose_scheme(rng):
    s = MassSystem(random_masses(rng, 3))
    _, y = random_reduced(rng, s)
    assert np.array_equal(strang_step(s, y, 0.1), compose_scheme(s, y, 0.1, STRANG))
    np.testing.assert_array_equal(strang_step(s, y, 0.0), y)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_strang_reversibility(rng, n):
    s = MassSystem(random_masses(rng, n))
    for _ in range(10):
        _, y = random_reduced(rng, s)
        back = strang_step(s, strang_step(s, y, 0.04), -0.04)
        assert rel_err(back, y) <= 1e-12


def test_kv_and_vk_differ_at_second_order(rng):
    s = MassSystem(random_masses(rng, 3))
    _, y = random_reduced(rng, s)
    diffs = [np.abs(compose_scheme(s, y, h, KV) - compose_scheme(s, y, h, VK)).max()
             for h in (0.02, 0.01)]
    assert diffs[0] > 0
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=0.1)


# --- scaling -------------------------------------------------------------------------------


def test_scale_state_basics():
    y = np.arange(1.0, 11.0)
    np.testing.assert_array_equal(scale_state(y, 1.0), y)
    z = scale_state(y, 4.0)
    np.testing.assert_allclose(z[:3], 16 * y[:3])
    np.testing.assert_allclose(z[3:6], y[3:6] / 4)
    np.testing.assert_allclose(z[6:], 2 * y[6:])
    with pytest.raises(ValueError):
        scale_state(y, 0.0)


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_scaling_equivariance(rng, lam):
    for n in (2, 3, 4):
        s = MassSystem(random_masses(rng, n))
        _, y = random_reduced(rng, s)
        h = 0.03
        assert hamiltonian_rel(s, scale_state(y, lam)) == pytest.approx(
            hamiltonian_rel(s, y) / lam, rel=1e-12)
        lhs = strang_step(s, scale_state(y, lam), h * lam**1.5)
        rhs = scale_state(strang_step(s, y, h), lam)
        assert rel_err(lhs, rhs) <= 1e-11


# --- trajectories ----------------------------------------------------------------------------


def test_integrate_zero_steps(rng):
    s = MassSystem.equal(3)
    _, y = random_reduced(rng, s)
    tr = integrate(s, y, 0.1, 0)
    assert tr.steps == [0] and len(tr.states) == 1
    np.testing.assert_array_equal(tr.Y[0], y)


def test_integrate_casimirs_per_step(rng):
    s = MassSystem(random_masses(rng, 3))
    _, y = random_reduced(rng, s, d=3)
    tr = integrate(s, y, 0.01, 200)
    for name in ("detG", "Lc2"):
        c = tr.column(name)
        scale = max(1.0, np.abs(c).max())
        assert np.abs(np.diff(c)).max() <= 1e-10 * scale


def test_integrate_stride_and_observers(rng):
    s = MassSystem.equal(2)
    tr = integrate(s, [1.0, 1.0, 0.0], 0.01, 10, stride=4,
                   observers={"rho": lambda sys, y: y[0]})
    assert tr.steps == [0, 4, 8, 10]
    assert list(tr.observables) == ["rho"]
    np.testing.assert_allclose(tr.t, [0.0, 0.04, 0.08, 0.1])
    with pytest.raises(ValueError):
        integrate(s, [1.0, 1.0, 0.0], 0.01, -1)


def test_iterate_generator():
    s = MassSystem.equal(2)
    out = list(iterate(s, [1.0, 1.0, 0.0], 0.01, 3))
    assert len(out) == 4
    np.testing.assert_array_equal(out[-1], integrate(s, [1.0, 1.0, 0.0], 0.01, 3).Y[-1])


def test_csv_format():
    s = MassSystem.equal(2)
    tr = integrate(s, [1.0, 0.5, 0.1], 0.1, 2)
    text = tr.to_csv()
    lines = text.splitlines()
    assert lines[0] == "step,t,rho_12,nu_12,sigma_12,H,detG,Lc2"
    assert len(lines) == 4
    first = lines[1].split(",")
    assert first[:2] == ["0", "0"]
    assert float(first[2]) == 1.0
    # 17 significant digits roundtrip exactly
    assert float(lines[3].split(",")[3]) == tr.Y[2][1]
    buf = io.StringIO()
    tr.to_csv(buf)
    assert buf.getvalue() == text


def test_collision_records_step():
    # head-on approach with rho(t) = (2 - t)^2 reaches contact exactly at t = 2
    from lpnbody.invariants import PairPotential
    free = PairPotential("free", lambda r, mm, G: 0 * r, lambda r, mm, G: 0 * r)
    s = MassSystem.equal(2, potential=free)
    with pytest.raises(CollisionError) as info:
        integrate(s, [4.0, 1.0, -2.0], 1.0, 5, scheme=KV)
    exc = info.value
    assert exc.step == 2
    tr = exc.trajectory
    assert tr.failed_at == 2 and tr.steps == [0, 1]
    assert tr.to_csv().endswith("# failed at step 2\n")


def test_summary_fields(rng):
    s = MassSystem.equal(3)
    _, y = random_reduced(rng, s)
    summ = integrate(s, y, 0.01, 20).summary()
    assert summ["steps"] == 20 and summ["failed_at"] is None
    assert set(summ["H"]) == {"initial", "min", "max", "max_abs_drift"}


def test_second_order_deviation_from_reference(rng):
    s = MassSystem(random_masses(rng, 3))
    st_ = FullState([[1.0, 0.0, 0.1], [-0.5, 0.8, 0.0], [-0.4, -0.9, -0.1]],
                    [[0.0, 0.5, 0.0], [-0.4, -0.2, 0.1], [0.3, -0.3, -0.1]])
    T = 0.8
    ref = project(s, reference_trajectory(s, st_, [T], tol=1e-13)[0]).vector
    errs = []
    for N in (20, 40):
        tr = integrate(s, project(s, st_), T / N, N)
        errs.append(np.abs(tr.Y[-1] - ref).max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


@given(st.floats(0.01, 0.2), st.integers(0, 2**32 - 1))
def test_casimirs_conserved_for_random_steps(h, seed):
    rng = np.random.default_rng(seed)
    s = MassSystem(random_masses(rng, 3))
    _, y = random_reduced(rng, s, d=3)
    y1 = strang_step(s, y, h)
    for f in (gram_det, angular_momentum_sq):
        a, b = f(s, y), f(s, y1)
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a))
    assert layout(3).size == y1.size

"""Full-coordinate reference dynamics.

Everything here works on positions and velocities directly and never touches
the reduced bracket, so it can serve as ground truth for the reduced code:
invariant values and gradients are built term by term from dot products of
difference vectors, brackets use the velocity form of the canonical
structure ``{(q_i)_k, (v_j)_l} = delta_ij delta_kl / m_j``.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .invariants import FullState, MassSystem, delta_basis, pairs

__all__ = [
    "full_rhs",
    "forces",
    "full_energy",
    "total_momentum",
    "angular_momentum_cm_sq",
    "reference_integrate",
    "reference_trajectory",
    "invariant_ids",
    "invariant_value",
    "invariant_gradient",
    "canonical_bracket",
    "bracket_table",
    "drift_map",
    "kick_map",
]


def forces(sys: MassSystem, q: np.ndarray) -> np.ndarray:
    """``-dV/dq_i`` for every body, shape (n, d)."""
    n = sys.n
    F = np.zeros_like(q, dtype=float)
    pot = sys.pair_potential
    for i in range(n):
        for j in range(i + 1, n):
            dq = q[i] - q[j]
            r2 = float(dq @ dq)
            dV = float(pot.d1(np.array([r2]), np.array([sys.m[i] * sys.m[j]]), sys.G)[0])
            f = -2.0 * dV * dq
            F[i] += f
            F[j] -= f
    return F


def full_rhs(sys: MassSystem, s: FullState) -> tuple[np.ndarray, np.ndarray]:
    """Time derivative ``(dq/dt, dv/dt)`` of the full equations of motion."""
    return s.v.copy(), forces(sys, s.q) / sys.m[:, None]


def full_energy(sys: MassSystem, s: FullState) -> float:
    kin = 0.5 * float(np.sum(sys.m[:, None] * s.v**2))
    pot = 0.0
    for i, j in pairs(sys.n):
        dq = s.q[i - 1] - s.q[j - 1]
        pot += float(sys.pair_potential.value(np.array([dq @ dq]),
                                              np.array([sys.m[i - 1] * sys.m[j - 1]]),
                                              sys.G)[0])
    return kin + pot


def total_momentum(sys: MassSystem, s: FullState) -> np.ndarray:
    return sys.m @ s.v


def angular_momentum_cm_sq(sys: MassSystem, s: FullState) -> float:
    """``|L_c|^2`` from the two-form ``sum m_i x_i ^ y_i`` about the centre of mass."""
    M = sys.total_mass
    x = s.q - sys.m @ s.q / M
    y = s.v - sys.m @ s.v / M
    L = np.einsum("i,ik,il->kl", sys.m, x, y)
    L = L - L.T
    return 0.5 * float(np.sum(L * L))


def reference_integrate(sys: MassSystem, s0: FullState, T: float, tol: float = 1e-12,
                        method: str = "DOP853") -> FullState:
    """High-accuracy integration of the full equations to time ``T``."""
    return reference_trajectory(sys, s0, [T], tol=tol, method=method)[-1]


def reference_trajectory(sys: MassSystem, s0: FullState, times, tol: float = 1e-12,
                         method: str = "DOP853") -> list[FullState]:
    n, d = s0.q.shape
    times = np.asarray(times, dtype=float)

    def rhs(_t, z):
        q = z[: n * d].reshape(n, d)
        v = z[n * d:].reshape(n, d)
        a = forces(sys, q) / sys.m[:, None]
        return np.concatenate([v.ravel(), a.ravel()])

    z0 = np.concatenate([s0.q.ravel(), s0.v.ravel()])
    if times.size and np.all(times == 0.0):
        return [s0 for _ in times]
    sol = solve_ivp(rhs, (0.0, float(times.max())), z0, method=method,
                    t_eval=times, rtol=tol, atol=tol * 1e-2)
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    return [FullState(z[: n * d].reshape(n, d), z[n * d:].reshape(n, d)) for z in sol.y.T]


def drift_map(sys: MassSystem, s: FullState, t: float) -> FullState:
    """Free flight ``q += t v``."""
    return FullState(s.q + t * s.v, s.v)


def kick_map(sys: MassSystem, s: FullState, t: float) -> FullState:
    """Velocity kick by the pair forces with positions frozen."""
    return FullState(s.q, s.v + t * forces(sys, s.q) / sys.m[:, None])


# ---------------------------------------------------------------------------
# invariants as explicit sums of dot products

# A term (c, X, (a, b), Y, (e, f)) stands for c * (X_a - X_b) . (Y_e - Y_f)
# with X, Y in {"q", "v"} and 1-based body labels.


def invariant_ids(n: int) -> list[tuple]:
    """Identifiers of the reduced coordinates, in reduced-vector order."""
    ids = [("rho", p) for p in pairs(n)]
    ids += [("nu", p) for p in pairs(n)]
    ids += [("sigma", p) for p in pairs(n)]
    ids += [("C", quad) for quad in delta_basis(n)]
    return ids


def _terms(inv) -> list[tuple]:
    kind, idx = inv
    if kind == "rho":
        return [(1.0, "q", idx, "q", idx)]
    if kind == "nu":
        return [(1.0, "v", idx, "v", idx)]
    if kind == "sigma":
        return [(1.0, "q", idx, "v", idx)]
    if kind == "C":
        i, j, k, l = idx
        return [(1.0, "q", (i, j), "v", (k, l)), (-1.0, "v", (i, j), "q", (k, l))]
    if kind == "dot":
        # generic ("dot", (X, (a, b), Y, (e, f)))
        X, ab, Yk, ef = idx
        return [(1.0, X, ab, Yk, ef)]
    raise ValueError(f"unknown invariant kind {kind!r}")


def invariant_value(s: FullState, inv) -> float:
    z = {"q": s.q, "v": s.v}
    total = 0.0
    for c, X, (a, b), Yk, (e, f) in _terms(inv):
        total += c * float((z[X][a - 1] - z[X][b - 1]) @ (z[Yk][e - 1] - z[Yk][f - 1]))
    return total


def invariant_gradient(s: FullState, inv) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient ``(df/dq, df/dv)``, each of shape (n, d)."""
    z = {"q": s.q, "v": s.v}
    grad = {"q": np.zeros_like(s.q), "v": np.zeros_like(s.v)}
    for c, X, (a, b), Yk, (e, f) in _terms(inv):
        u = z[X][a - 1] - z[X][b - 1]
        w = z[Yk][e - 1] - z[Yk][f - 1]
        grad[X][a - 1] += c * w
        grad[X][b - 1] -= c * w
        grad[Yk][e - 1] += c * u
        grad[Yk][f - 1] -= c * u
    return grad["q"], grad["v"]


def canonical_bracket(sys: MassSystem, s: FullState, f, g) -> float:
    """``{f, g} = sum_i (df/dq_i . dg/dv_i - df/dv_i . dg/dq_i) / m_i``."""
    fq, fv = invariant_gradient(s, f)
    gq, gv = invariant_gradient(s, g)
    w = 1.0 / sys.m[:, None]
    return float(np.sum(w * (fq * gv - fv * gq)))


def bracket_table(sys: MassSystem, s: FullState) -> np.ndarray:
    """All brackets between reduced coordinates at ``s``; the oracle for ``B``."""
    ids = invariant_ids(sys.n)
    grads = [invariant_gradient(s, inv) for inv in ids]
    w = 1.0 / sys.m[:, None]
    N = len(ids)
    out = np.zeros((N, N))
    for a in range(N):
        fq, fv = grads[a]
        for b in range(a + 1, N):
            gq, gv = grads[b]
            out[a, b] = float(np.sum(w * (fq * gv - fv * gq)))
            out[b, a] = -out[a, b]
    return out

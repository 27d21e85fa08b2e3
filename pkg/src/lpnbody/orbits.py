"""Symmetric periodic orbits of the Strang map for three equal masses.

An orbit with the symmetry of the figure eight starts at the collinear
configuration with body 3 at the midpoint of bodies 1 and 2. With both
Casimirs zero that leaves three free numbers (:class:`SymmetricSeed`).
If after ``m`` steps the state is isosceles with body 1 at the apex, the
two reversing symmetries of the map close the orbit after ``6 m`` steps.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CollisionError, NoConvergence, SingularJacobian
from .integrator import STRANG, SplitScheme, compose_scheme, step_with_jacobian
from .invariants import (
    FullState,
    MassSystem,
    _express_cross,
    _vec,
    delta_basis,
    layout,
    n_from_size,
    pairs,
)

__all__ = [
    "SymmetricSeed",
    "FIGURE8_SEED_H3",
    "CONTINUUM_SEED",
    "seed_to_state",
    "seed_full_state",
    "half_symmetry_residual",
    "OrbitResult",
    "find_orbit",
    "orbit_points",
    "permute",
    "time_reversal",
    "symmetric_orbit",
    "monodromy",
    "monodromy_eigenvalues",
    "is_elliptic",
    "reciprocal_pairing_error",
    "scaling_family",
]


@dataclass(frozen=True)
class SymmetricSeed:
    """Free parameters ``(rho_13, nu_13, sigma_13)`` of a symmetric initial condition."""

    rho13: float
    nu13: float
    sigma13: float

    def __iter__(self):
        return iter((self.rho13, self.nu13, self.sigma13))

    def as_array(self) -> np.ndarray:
        return np.array([self.rho13, self.nu13, self.sigma13])


FIGURE8_SEED_H3 = SymmetricSeed(2.33107, 2.35105, 1.28227)
CONTINUUM_SEED = SymmetricSeed(2.34791, 2.3746, 1.28904)


def seed_to_state(seed: SymmetricSeed) -> np.ndarray:
    """Expand a seed to a full reduced vector for n = 3.

    ``rho = (4 r, r, r)``, ``nu = (0, u, u)``, ``sigma = (0, s, -s)``,
    ``delta = 2 s`` in lexicographic pair order (12, 13, 23).
    """
    r, u, s = seed
    return np.array([4 * r, r, r, 0.0, u, u, 0.0, s, -s, 2 * s])


def seed_full_state(seed: SymmetricSeed) -> FullState:
    """A planar collinear configuration realising ``seed`` (unit masses).

    Bodies 1 and 2 sit at ``(+-a, 0)`` with body 3 at the origin; bodies 1 and
    2 share a velocity ``w`` and body 3 moves with ``-2 w``.
    """
    r, u, s = seed
    a = np.sqrt(r)
    wx = s / (3 * a)
    wy2 = u / 9 - wx**2
    if wy2 < -1e-14:
        raise ValueError("seed violates sigma^2 <= rho nu and has no real preimage")
    w = np.array([wx, np.sqrt(max(wy2, 0.0))])
    q = np.array([[a, 0.0], [-a, 0.0], [0.0, 0.0]])
    v = np.array([w, w, -2 * w])
    return FullState(q, v)


def half_symmetry_residual(sys: MassSystem, seed: SymmetricSeed, h: float, m: int,
                           scheme: SplitScheme = STRANG) -> np.ndarray:
    """``(rho_12 - rho_13, nu_12 - nu_13, sigma_12 + sigma_13)`` after ``m`` steps.

    Returns NaNs if the iteration runs into a collision.
    """
    y = seed_to_state(seed)
    try:
        for _ in range(m):
            y = compose_scheme(sys, y, h, scheme)
    except CollisionError:
        return np.full(3, np.nan)
    return np.array([y[0] - y[1], y[3] - y[4], y[6] + y[7]])


@dataclass
class OrbitResult:
    seed: SymmetricSeed
    h: float
    m: int
    iterations: int
    residual: float

    @property
    def period(self) -> int:
        return 6 * self.m

    def to_dict(self) -> dict:
        out = asdict(self)
        out["seed"] = asdict(self.seed)
        out["period"] = self.period
        return out


def find_orbit(sys: MassSystem, guess: SymmetricSeed, h: float, m: int,
               tol: float = 1e-12, max_iter: int = 50, fd_step: float = 1e-7,
               scheme: SplitScheme = STRANG) -> OrbitResult:
    """Newton search for a seed whose ``m``-th iterate is isosceles.

    The Jacobian is a central difference with step ``fd_step`` times the size
    of each seed component; steps are halved until the residual decreases.

    Raises
    ------
    NoConvergence
        If ``tol`` is not reached within ``max_iter`` iterations.
    SingularJacobian
        If the finite-difference Jacobian cannot be inverted.
    """
    if sys.n != 3:
        raise ValueError("symmetric seeds are defined for three bodies")
    x = guess.as_array().astype(float)

    def F(z):
        return half_symmetry_residual(sys, SymmetricSeed(*z), h, m, scheme)

    r = F(x)
    if not np.all(np.isfinite(r)):
        raise NoConvergence("initial guess runs into a collision", 0, np.inf)
    norm = np.abs(r).max()
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return OrbitResult(SymmetricSeed(*x), h, m, it - 1, float(norm))
        J = np.empty((3, 3))
        for k in range(3):
            dk = fd_step * max(1.0, abs(x[k]))
            e = np.zeros(3)
            e[k] = dk
            J[:, k] = (F(x + e) - F(x - e)) / (2 * dk)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e14:
            raise SingularJacobian(f"Newton Jacobian is singular at iteration {it}")
        dx = np.linalg.solve(J, -r)
        lam = 1.0
        while lam > 1e-4:
            x_new = x + lam * dx
            r_new = F(x_new)
            if np.all(np.isfinite(r_new)) and np.abs(r_new).max() < norm:
                break
            lam *= 0.5
        else:
            # no decrease: accept a full step only if we are already at round-off level
            if norm <= 100 * tol:
                return OrbitResult(SymmetricSeed(*x), h, m, it, float(norm))
            raise NoConvergence(f"line search failed at iteration {it}", it, float(norm))
        x, r, norm = x_new, r_new, np.abs(r_new).max()
    if norm <= tol:
        return OrbitResult(SymmetricSeed(*x), h, m, max_iter, float(norm))
    raise NoConvergence(f"no convergence after {max_iter} iterations "
                        f"(residual {norm:.2e})", max_iter, float(norm))


def orbit_points(sys: MassSystem, seed: SymmetricSeed, h: float, n_steps: int,
                 scheme: SplitScheme = STRANG) -> np.ndarray:
    """``n_steps + 1`` consecutive iterates starting from the seed state."""
    out = [seed_to_state(seed)]
    for _ in range(n_steps):
        out.append(compose_scheme(sys, out[-1], h, scheme))
    return np.array(out)


# ---------------------------------------------------------------------------
# discrete symmetries


def _perm_sign(perm) -> int:
    sign = 1
    for a, b in itertools.combinations(range(len(perm)), 2):
        if perm[a] > perm[b]:
            sign = -sign
    return sign


def permute(Y, perm) -> np.ndarray:
    """Relabel bodies: the new body ``a`` is the old body ``perm[a-1]`` (1-based).

    Only meaningful as a symmetry when the permuted masses are equal.
    """
    y = _vec(Y)
    n = n_from_size(y.size)
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(1, n + 1)):
        raise ValueError(f"{perm} is not a permutation of 1..{n}")
    lay = layout(n)
    idx = {p: a for a, p in enumerate(pairs(n))}
    out = np.empty_like(y)
    for a, (i, j) in enumerate(pairs(n)):
        pi, pj = perm[i - 1], perm[j - 1]
        src = idx[(min(pi, pj), max(pi, pj))]
        out[lay.rho][a] = y[lay.rho][src]
        out[lay.nu][a] = y[lay.nu][src]
        out[lay.sigma][a] = y[lay.sigma][src]
    dl = y[lay.delta]
    new_delta = np.empty(lay.n_delta)
    for k, (i, j, kk, ll) in enumerate(delta_basis(n)):
        quad = (perm[i - 1], perm[j - 1], perm[kk - 1], perm[ll - 1])
        new_delta[k] = _express_cross(n, quad) @ dl
    out[lay.delta] = new_delta
    return out


def time_reversal(Y) -> np.ndarray:
    """Velocities reversed: ``sigma, delta -> -sigma, -delta``."""
    y = _vec(Y).copy()
    lay = layout(n_from_size(y.size))
    y[lay.sigma] *= -1
    y[lay.delta] *= -1
    return y


def _S_collinear(y):
    return time_reversal(permute(y, (2, 1, 3)))


def _S_isosceles(y):
    return time_reversal(permute(y, (1, 3, 2)))


def symmetric_orbit(arc: np.ndarray) -> np.ndarray:
    """Whole ``6m``-periodic orbit from the arc ``Y_0, ..., Y_m``.

    Uses ``Y_{-k} = S(Y_k)`` (swap of bodies 1, 2 with time reversal fixing
    ``Y_0``) and ``Y_{2m+k} = S'(S(Y_k))`` (``S'`` swaps bodies 2, 3 and fixes
    ``Y_m``). Returns ``Y_0, ..., Y_{6m-1}``.
    """
    arc = np.asarray(arc)
    m = arc.shape[0] - 1
    base = {k: arc[k] for k in range(m + 1)}
    for k in range(1, m + 1):
        base[-k] = _S_collinear(arc[k])
    out = {}
    for j in range(3):
        for k in range(-m, m):
            y = base[k]
            for _ in range(j):
                y = _S_isosceles(_S_collinear(y))
            out[(2 * m * j + k) % (6 * m)] = y
    return np.array([out[k] for k in range(6 * m)])


# ---------------------------------------------------------------------------
# stability


def monodromy(sys: MassSystem, Y_periodic, h: float, period_steps: int,
              scheme: SplitScheme = STRANG) -> tuple[np.ndarray, np.ndarray]:
    """Product of analytic step Jacobians around the orbit; returns ``(M, Y_end)``."""
    y = _vec(Y_periodic, sys.n)
    M = np.eye(y.size)
    for _ in range(period_steps):
        y, J = step_with_jacobian(sys, y, h, scheme)
        M = J @ M
    return M, y


def monodromy_eigenvalues(sys: MassSystem, Y_periodic, h: float, period_steps: int,
                          scheme: SplitScheme = STRANG) -> np.ndarray:
    M, _ = monodromy(sys, Y_periodic, h, period_steps, scheme)
    return np.linalg.eigvals(M)


def is_elliptic(eigs: np.ndarray, tol: float = 1e-6) -> bool:
    """All eigenvalue moduli within ``tol`` of one."""
    return bool(np.all(np.abs(np.abs(eigs) - 1.0) <= tol))


def reciprocal_pairing_error(eigs: np.ndarray) -> float:
    """Largest distance from ``1/lambda`` to the nearest eigenvalue, over all ``lambda``."""
    eigs = np.asarray(eigs)
    return float(max(np.min(np.abs(eigs - 1.0 / lam)) for lam in eigs))


def scaling_family(seed: SymmetricSeed, h: float, target_h: float = 1.0) -> SymmetricSeed:
    """Map an orbit seed of step ``h`` to the scaled orbit of step ``target_h``.

    The scale is ``lam = (target_h / h)^(2/3)``: ``rho * lam^2``,
    ``nu / lam``, ``sigma * sqrt(lam)``. For ``h = 1/m`` and ``target_h = 1``
    this is ``rho m^(4/3)``, ``nu m^(-2/3)``, ``sigma m^(1/3)``.
    """
    lam = (target_h / h) ** (2.0 / 3.0)
    return SymmetricSeed(seed.rho13 * lam**2, seed.nu13 / lam, seed.sigma13 * np.sqrt(lam))

"""Galilean-invariant coordinates of the n-body problem.

The reduced chart is ``Y = (rho, nu, sigma, delta)`` where, for every pair
``i < j`` of bodies (1-based labels, lexicographic order),

* ``rho_ij   = |q_i - q_j|^2``
* ``nu_ij    = |v_i - v_j|^2``
* ``sigma_ij = (q_i - q_j) . (v_i - v_j)``

and ``delta`` collects ``(n-1)(n-2)/2`` antisymmetric cross products
``C_{ij,kl} = q_ij . v_kl - v_ij . q_kl`` chosen by :func:`delta_basis`.
Reduced vectors are plain float arrays of length ``(2n-1)(n-1)``;
:class:`ReducedState` is a named view over such a vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import CollisionError

__all__ = [
    "PairPotential",
    "gravitational",
    "harmonic",
    "MassSystem",
    "FullState",
    "ReducedState",
    "Layout",
    "layout",
    "pairs",
    "delta_basis",
    "project",
    "kinetic_rel",
    "potential",
    "potential_gradient",
    "hamiltonian_rel",
    "moment_of_inertia",
    "gram_matrix",
    "gram_det",
    "angular_momentum_sq",
    "angular_momentum_sq_closed",
    "REVERSED_PAIRS_N3",
]


# ---------------------------------------------------------------------------
# pair potentials


@dataclass(frozen=True)
class PairPotential:
    """Pair potential ``V_ij`` as a function of the squared distance.

    Each callable receives ``(rho, mimj, G)`` with ``rho`` and ``mimj``
    arrays over the pairs and returns an array of the same shape.
    ``d1`` is ``dV/drho`` (needed by the potential flow) and ``d2`` is
    ``d^2V/drho^2`` (needed only for analytic Jacobians).
    """

    name: str
    value: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    d1: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    d2: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None
    # Exponent k with V(lam^2 rho) = lam^k V(rho); None if not homogeneous.
    homogeneity: float | None = None


def gravitational() -> PairPotential:
    """Newtonian gravity ``V_ij = -G m_i m_j / sqrt(rho_ij)``."""
    return PairPotential(
        name="gravitational",
        value=lambda rho, mm, G: -G * mm / np.sqrt(rho),
        d1=lambda rho, mm, G: 0.5 * G * mm * rho**-1.5,
        d2=lambda rho, mm, G: -0.75 * G * mm * rho**-2.5,
        homogeneity=-1.0,
    )


def harmonic() -> PairPotential:
    """Linear springs ``V_ij = G m_i m_j rho_ij / 2`` (bounded test problem)."""
    return PairPotential(
        name="harmonic",
        value=lambda rho, mm, G: 0.5 * G * mm * rho,
        d1=lambda rho, mm, G: 0.5 * G * mm * np.ones_like(rho),
        d2=lambda rho, mm, G: np.zeros_like(rho),
        homogeneity=2.0,
    )


_NAMED_POTENTIALS = {"gravitational": gravitational, "harmonic": harmonic}


# ---------------------------------------------------------------------------
# index bookkeeping


def pairs(n: int) -> list[tuple[int, int]]:
    """Pairs ``(i, j)``, ``1 <= i < j <= n``, in lexicographic order."""
    return [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]


def delta_basis(n: int) -> list[tuple[int, int, int, int]]:
    """Index quadruples ``(i, j, k, l)`` of the cross products ``C_{ij,kl}``.

    n=3 uses ``C_{23,31}``, n=4 uses ``(C_{12,43}, C_{23,41}, C_{24,31})``
    and larger n use ``C_{1j,jk}`` for ``2 <= j < k <= n``.
    """
    if n < 2:
        raise ValueError(f"need at least two bodies, got n={n}")
    if n == 2:
        return []
    if n == 3:
        return [(2, 3, 3, 1)]
    if n == 4:
        return [(1, 2, 4, 3), (2, 3, 4, 1), (2, 4, 3, 1)]
    return [(1, j, j, k) for j in range(2, n + 1) for k in range(j + 1, n + 1)]


@dataclass(frozen=True)
class Layout:
    """Slices of the four coordinate groups inside a reduced vector."""

    n: int

    @property
    def n_pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def n_delta(self) -> int:
        return (self.n - 1) * (self.n - 2) // 2

    @property
    def size(self) -> int:
        return 3 * self.n_pairs + self.n_delta

    @property
    def rho(self) -> slice:
        return slice(0, self.n_pairs)

    @property
    def nu(self) -> slice:
        return slice(self.n_pairs, 2 * self.n_pairs)

    @property
    def sigma(self) -> slice:
        return slice(2 * self.n_pairs, 3 * self.n_pairs)

    @property
    def delta(self) -> slice:
        return slice(3 * self.n_pairs, self.size)

    def labels(self) -> list[str]:
        """Column names, e.g. ``rho_12 ... delta_1``."""
        names = []
        for kind in ("rho", "nu", "sigma"):
            names += [f"{kind}_{i}{j}" for i, j in pairs(self.n)]
        names += [f"delta_{k + 1}" for k in range(self.n_delta)]
        return names


@lru_cache(maxsize=None)
def layout(n: int) -> Layout:
    return Layout(n)


def n_from_size(size: int) -> int:
    """Invert ``size = (2n-1)(n-1)``."""
    for n in range(2, 64):
        if layout(n).size == size:
            return n
    raise ValueError(f"{size} is not a reduced-state length (2n-1)(n-1)")


# Lexicographic positions of the pairs (23, 13, 12), the order many n=3 formulas use.
REVERSED_PAIRS_N3 = np.array([2, 1, 0])


# ---------------------------------------------------------------------------
# systems and states


@dataclass(frozen=True)
class MassSystem:
    """Masses, coupling constant and pair potential of an n-body problem.

    Parameters
    ----------
    masses : sequence of float
        Positive body masses; ``n = len(masses)``.
    G : float
        Coupling constant (gravitational constant for the default potential).
    potential : str or PairPotential
        ``"gravitational"`` (default), ``"harmonic"``, or a custom
        :class:`PairPotential`.
    collision_floor : float
        The potential and its flow refuse squared distances at or below this.
    """

    masses: tuple[float, ...]
    G: float = 1.0
    potential: PairPotential | str = "gravitational"
    collision_floor: float = 1e-14
    _pot: PairPotential = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        if len(masses) < 2:
            raise ValueError("a MassSystem needs at least two bodies")
        if not all(np.isfinite(m) and m > 0 for m in masses):
            raise ValueError(f"masses must be positive and finite, got {masses}")
        if not self.G > 0:
            raise ValueError(f"G must be positive, got {self.G}")
        object.__setattr__(self, "masses", masses)
        pot = self.potential
        if isinstance(pot, str):
            try:
                pot = _NAMED_POTENTIALS[pot]()
            except KeyError:
                raise ValueError(
                    f"unknown potential {pot!r}; known: {sorted(_NAMED_POTENTIALS)}"
                ) from None
        object.__setattr__(self, "_pot", pot)

    @classmethod
    def equal(cls, n: int, **kwargs) -> "MassSystem":
        """``n`` unit masses."""
        return cls(tuple([1.0] * n), **kwargs)

    @classmethod
    def from_dict(cls, cfg: dict) -> "MassSystem":
        kwargs = {"masses": tuple(cfg["masses"])}
        if "G" in cfg:
            kwargs["G"] = float(cfg["G"])
        if "potential" in cfg:
            kwargs["potential"] = str(cfg["potential"])
        if "collision_floor" in cfg:
            kwargs["collision_floor"] = float(cfg["collision_floor"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "MassSystem":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "masses": list(self.masses),
            "G": self.G,
            "potential": self._pot.name,
            "collision_floor": self.collision_floor,
        }

    @property
    def pair_potential(self) -> PairPotential:
        return self._pot

    @property
    def n(self) -> int:
        return len(self.masses)

    @cached_property
    def m(self) -> np.ndarray:
        return np.array(self.masses)

    @property
    def total_mass(self) -> float:
        return float(self.m.sum())

    @cached_property
    def _pair_idx(self) -> tuple[np.ndarray, np.ndarray]:
        ij = np.array(pairs(self.n)) - 1
        return ij[:, 0], ij[:, 1]

    @cached_property
    def mimj(self) -> np.ndarray:
        """``m_i m_j`` over the pairs."""
        i, j = self._pair_idx
        return self.m[i] * self.m[j]

    @cached_property
    def reduced_masses(self) -> np.ndarray:
        """``mu_ij`` with ``1/mu_ij = 1/m_i + 1/m_j``."""
        i, j = self._pair_idx
        return 1.0 / (1.0 / self.m[i] + 1.0 / self.m[j])

    @cached_property
    def kinetic_gradient(self) -> np.ndarray:
        """Constant gradient of the relative kinetic energy w.r.t. ``nu``."""
        return self.mimj / (2.0 * self.total_mass)

    @property
    def layout(self) -> Layout:
        return layout(self.n)

    def scaled(self, factor: float) -> "MassSystem":
        """Same system with every mass multiplied by ``factor``."""
        return MassSystem(
            tuple(factor * m for m in self.masses),
            G=self.G,
            potential=self._pot,
            collision_floor=self.collision_floor,
        )


@dataclass(frozen=True)
class FullState:
    """Positions and velocities of ``n`` bodies in ``R^d``; arrays of shape (n, d)."""

    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        v = np.array(self.v, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        if v.ndim == 1:
            v = v[:, None]
        if q.shape != v.shape or q.ndim != 2:
            raise ValueError(f"q and v must both be (n, d); got {q.shape} and {v.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise ValueError("state contains non-finite values")
        q.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def d(self) -> int:
        return self.q.shape[1]

    def centre_of_mass(self, sys: MassSystem) -> np.ndarray:
        return sys.m @ self.q / sys.total_mass

    def momentum(self, sys: MassSystem) -> np.ndarray:
        return sys.m @ self.v


@dataclass(frozen=True)
class ReducedState:
    """Named view of a reduced vector ``(rho, nu, sigma, delta)``."""

    rho: np.ndarray
    nu: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        arrs = [np.atleast_1d(np.array(a, dtype=float)) for a in
                (self.rho, self.nu, self.sigma, self.delta)]
        p = arrs[0].size
        n = int(round((1 + np.sqrt(1 + 8 * p)) / 2))
        lay = layout(n)
        if lay.n_pairs != p or arrs[1].size != p or arrs[2].size != p:
            raise ValueError("rho, nu and sigma must all have n(n-1)/2 entries")
        if arrs[3].size != lay.n_delta:
            raise ValueError(f"delta must have {lay.n_delta} entries for n={n}")
        for name, a in zip(("rho", "nu", "sigma", "delta"), arrs):
            a = a.reshape(-1)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_vector(cls, y) -> "ReducedState":
        y = np.asarray(y, dtype=float)
        lay = layout(n_from_size(y.size))
        return cls(y[lay.rho], y[lay.nu], y[lay.sigma], y[lay.delta])

    @property
    def n(self) -> int:
        return int(round((1 + np.sqrt(1 + 8 * self.rho.size)) / 2))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.rho, self.nu, self.sigma, self.delta])

    def __array__(self, dtype=None, copy=None):
        y = self.vector
        return y if dtype is None else y.astype(dtype)

    def __len__(self) -> int:
        return layout(self.n).size

    def in_reversed_pair_order(self) -> dict[str, np.ndarray]:
        """Components in pair order (23, 13, 12)."""
        if self.n != 3:
            raise ValueError("reversed pair order is only defined for n=3")
        return {
            "rho": self.rho[REVERSED_PAIRS_N3],
            "nu": self.nu[REVERSED_PAIRS_N3],
            "sigma": self.sigma[REVERSED_PAIRS_N3],
            "delta": self.delta.copy(),
        }


def _vec(Y, n: int | None = None) -> np.ndarray:
    y = np.asarray(Y, dtype=float)
    if y.ndim != 1:
        raise ValueError(f"reduced state must be one-dimensional, got shape {y.shape}")
    if n is not None and y.size != layout(n).size:
        raise ValueError(
            f"reduced state has length {y.size}, expected {layout(n).size} for n={n}"
        )
    return y


# ---------------------------------------------------------------------------
# projection and functionals


def project(sys: MassSystem, s: FullState) -> ReducedState:
    """Map a full phase-space point to its Galilean invariants."""
    if s.n != sys.n:
        raise ValueError(f"state has {s.n} bodies but the system has {sys.n}")
    i, j = sys._pair_idx
    dq = s.q[i] - s.q[j]
    dv = s.v[i] - s.v[j]
    rho = np.einsum("pk,pk->p", dq, dq)
    nu = np.einsum("pk,pk->p", dv, dv)
    sigma = np.einsum("pk,pk->p", dq, dv)
    delta = np.empty(layout(sys.n).n_delta)
    for a, (ii, jj, kk, ll) in enumerate(delta_basis(sys.n)):
        qij = s.q[ii - 1] - s.q[jj - 1]
        vij = s.v[ii - 1] - s.v[jj - 1]
        qkl = s.q[kk - 1] - s.q[ll - 1]
        vkl = s.v[kk - 1] - s.v[ll - 1]
        delta[a] = qij @ vkl - vij @ qkl
    return ReducedState(rho, nu, sigma, delta)


def kinetic_rel(sys: MassSystem, Y) -> float:
    """Kinetic energy relative to the centre of mass, ``sum m_i m_j nu_ij / 2M``."""
    y = _vec(Y, sys.n)
    return float(sys.kinetic_gradient @ y[sys.layout.nu])


def _checked_rho(sys: MassSystem, Y) -> np.ndarray:
    rho = _vec(Y, sys.n)[sys.layout.rho]
    if np.any(~(rho > sys.collision_floor)):
        k = int(np.argmin(rho))
        raise CollisionError(
            f"rho_{''.join(map(str, pairs(sys.n)[k]))} = {rho[k]:.3e} is at or below "
            f"the collision floor {sys.collision_floor:.1e}"
        )
    return rho


def potential(sys: MassSystem, Y) -> float:
    """Sum of pair potentials ``V_ij(rho_ij)``."""
    rho = _checked_rho(sys, Y)
    return float(np.sum(sys.pair_potential.value(rho, sys.mimj, sys.G)))


def potential_gradient(sys: MassSystem, Y) -> np.ndarray:
    """``dV/drho_ij`` for every pair."""
    rho = _checked_rho(sys, Y)
    return sys.pair_potential.d1(rho, sys.mimj, sys.G)


def hamiltonian_rel(sys: MassSystem, Y) -> float:
    """``H_c = K_c + V``, the generator of the reduced dynamics."""
    return kinetic_rel(sys, Y) + potential(sys, Y)


def moment_of_inertia(sys: MassSystem, Y) -> float:
    """Moment of inertia about the centre of mass."""
    y = _vec(Y, sys.n)
    return float(sys.mimj @ y[sys.layout.rho]) / sys.total_mass


# ---------------------------------------------------------------------------
# Gram matrix and angular momentum


def _antisym_W(n: int, quad: tuple[int, int, int, int]) -> np.ndarray:
    """Coefficient matrix W with ``C_{ij,kl} = sum_ab W_ab q_a . v_b``."""
    i, j, k, l = quad
    eij = np.zeros(n)
    ekl = np.zeros(n)
    eij[i - 1] += 1.0
    eij[j - 1] -= 1.0
    ekl[k - 1] += 1.0
    ekl[l - 1] -= 1.0
    return np.outer(eij, ekl) - np.outer(ekl, eij)


@lru_cache(maxsize=None)
def _delta_expansion(n: int) -> np.ndarray:
    """Least-squares map from a flattened antisymmetric W to delta coefficients."""
    basis = np.array([_antisym_W(n, quad).ravel() for quad in delta_basis(n)]).T
    if basis.size and np.linalg.matrix_rank(basis) != basis.shape[1]:
        raise ValueError(f"delta basis for n={n} is not linearly independent")
    return np.linalg.pinv(basis) if basis.size else np.zeros((0, n * n))


def _express_cross(n: int, quad: tuple[int, int, int, int]) -> np.ndarray:
    """Coefficients of ``C_{ij,kl}`` in the delta basis."""
    W = _antisym_W(n, quad)
    coef = _delta_expansion(n) @ W.ravel()
    if n > 2:
        basis = np.array([_antisym_W(n, qd) for qd in delta_basis(n)])
        resid = np.abs(np.tensordot(coef, basis, axes=1) - W).max()
        if resid > 1e-12:
            raise ValueError(f"C{quad} is not in the span of the delta basis")
    return coef


@lru_cache(maxsize=None)
def _gram_tensor(n: int) -> np.ndarray:
    """Linear map ``Y -> Gram`` as a (2n-2, 2n-2, N) array.

    Basis vectors are ``(q_1n, ..., q_{n-1,n}, v_1n, ..., v_{n-1,n})``.
    """
    lay = layout(n)
    idx = {p: a for a, p in enumerate(pairs(n))}
    m = n - 1
    T = np.zeros((2 * m, 2 * m, lay.size))

    def add_sq(block_r, block_c, base, i, j, w):
        # x_in . x_jn = (tau_in + tau_jn - tau_ij) / 2, tau_nn = 0
        for (a, b), s in (((i, n), 0.5), ((j, n), 0.5), ((i, j), -0.5)):
            if a != b:
                T[block_r + i - 1, block_c + j - 1, base + idx[(min(a, b), max(a, b))]] += s * w

    for i in range(1, n):
        for j in range(1, n):
            add_sq(0, 0, lay.rho.start, i, j, 1.0)
            add_sq(m, m, lay.nu.start, i, j, 1.0)
            # q_in . v_jn: symmetric part from sigma, antisymmetric part C_{in,jn}/2
            add_sq(0, m, lay.sigma.start, i, j, 1.0)
            if i != j:
                T[i - 1, m + j - 1, lay.delta] += 0.5 * _express_cross(n, (i, n, j, n))
    # lower-left block is the transpose of the upper-right one
    T[m:, :m] = np.transpose(T[:m, m:], (1, 0, 2))
    return T


def gram_matrix(sys: MassSystem, Y) -> np.ndarray:
    """Gram matrix of ``(q_in, v_in)``, ``i < n``, written in the invariants."""
    y = _vec(Y, sys.n)
    return _gram_tensor(sys.n) @ y


def gram_det(sys: MassSystem, Y) -> float:
    """Determinant of :func:`gram_matrix` (a Casimir of the reduced bracket)."""
    return float(np.linalg.det(gram_matrix(sys, Y)))


def angular_momentum_sq(sys: MassSystem, Y) -> float:
    """``|L_c|^2`` for any n, via the Gram matrix and centre-of-mass vectors."""
    n = sys.n
    m = sys.m
    G = gram_matrix(sys, Y)
    k = n - 1
    # x_i = q_i - C = q_in - sum_{k<n} (m_k/M) q_kn
    A = np.zeros((n, k))
    A[:k, :k] = np.eye(k)
    A -= m[:k][None, :] / sys.total_mass
    Gxx = A @ G[:k, :k] @ A.T
    Gyy = A @ G[k:, k:] @ A.T
    Gxy = A @ G[:k, k:] @ A.T
    return float(m @ (Gxx * Gyy - Gxy * Gxy.T) @ m)


def angular_momentum_sq_closed(sys: MassSystem, Y) -> float:
    """Closed forms of ``|L_c|^2`` for two and three bodies."""
    y = _vec(Y, sys.n)
    lay = sys.layout
    rho, nu, sigma = y[lay.rho], y[lay.nu], y[lay.sigma]
    if sys.n == 2:
        mu = sys.reduced_masses[0]
        return float(mu**2 * (rho[0] * nu[0] - sigma[0] ** 2))
    if sys.n != 3:
        raise ValueError(f"closed-form |L_c|^2 exists only for n=2,3, not n={sys.n}")
    M = sys.total_mass
    m = sys.m
    mimj = sys.mimj
    # third body for each lexicographic pair (12, 13, 23)
    mk = m[[2, 1, 0]]
    rs, ns, ss = rho.sum(), nu.sum(), sigma.sum()
    two_body = np.sum(mimj**2 / M**2 * (rho * nu - sigma**2))
    mixed = np.sum(mk / M * ((rs - 2 * rho) * (ns - 2 * nu) - (ss - 2 * sigma) ** 2))
    delta = y[lay.delta][0]
    return float(two_body + m.prod() / (2 * M) * (delta**2 + mixed))

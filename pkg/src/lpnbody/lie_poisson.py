"""Quadratic-form algebra and the reduced Poisson structure matrix.

Every reduced coordinate is a quadratic form in ``Z = (q_1..q_n, v_1..v_n)``
(lifted over the ``d`` spatial components). A :class:`QuadraticForm` stores
the coefficient blocks of

    f = q^T R q + v^T P v + q^T (S + D) v

so ``rho_ij``, ``nu_ij`` and ``sigma_ij`` are all represented by the same
Laplacian unit ``E_ij`` in the R, P and S slot respectively. Its Hessian
``A = [[2R, S+D], [S-D, 2P]]`` satisfies ``f = Z^T A Z / 2`` and brackets of
forms are forms again: ``{f_A, f_B} = f_{A*B}`` with the twisted commutator
``A*B = A J B - B J A``, ``J = [[0, Minv], [-Minv, 0]]``.

Two independent routes to ``B(Y)`` are provided: the general one expands
``basis_a * basis_b`` in the invariant basis (any n); the closed one
assembles the closed-form blocks ``L, v, Delta, Sigma`` (n = 2, 3, 4).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ExpansionError, RankError
from .invariants import (
    REVERSED_PAIRS_N3,
    MassSystem,
    _antisym_W,
    _vec,
    delta_basis,
    layout,
    pairs,
)

__all__ = [
    "QuadraticForm",
    "laplacian_unit",
    "basis_form",
    "basis_forms",
    "compose",
    "expand",
    "structure_tensor",
    "structure_matrix",
    "structure_matrix_general",
    "structure_matrix_closed",
    "Blocks",
    "blocks_general",
    "blocks_closed",
    "bracket",
    "casimirs_numeric",
    "EXPECTED_KERNEL_DIM",
    "jacobi_residual",
    "kinetic_identity_residuals",
    "structure_dump",
]

EXPECTED_KERNEL_DIM = {2: 1, 3: 2, 4: 3}


def laplacian_unit(n: int, i: int, j: int) -> np.ndarray:
    """``E_ij``: +1 at (i,i), (j,j), -1 at (i,j), (j,i); 1-based labels."""
    E = np.zeros((n, n))
    a, b = i - 1, j - 1
    E[a, a] = E[b, b] = 1.0
    E[a, b] = E[b, a] = -1.0
    return E


@dataclass(frozen=True)
class QuadraticForm:
    """Shift-invariant quadratic form given by its four n x n coefficient blocks."""

    R: np.ndarray
    P: np.ndarray
    S: np.ndarray
    D: np.ndarray

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @classmethod
    def zero(cls, n: int) -> "QuadraticForm":
        z = np.zeros((n, n))
        return cls(z, z, z, z)

    @classmethod
    def from_hessian(cls, A: np.ndarray) -> "QuadraticForm":
        n = A.shape[0] // 2
        W = A[:n, n:]
        return cls(0.5 * A[:n, :n], 0.5 * A[n:, n:], 0.5 * (W + W.T), 0.5 * (W - W.T))

    @property
    def hessian(self) -> np.ndarray:
        W = self.S + self.D
        return np.block([[2.0 * self.R, W], [W.T, 2.0 * self.P]])

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.R.ravel(), self.P.ravel(), self.S.ravel(), self.D.ravel()])

    def is_block_laplacian(self, tol: float = 1e-12) -> bool:
        ones = np.ones(self.n)
        sym_ok = all(np.allclose(X, X.T, atol=tol, rtol=0) for X in (self.R, self.P, self.S))
        anti_ok = np.allclose(self.D, -self.D.T, atol=tol, rtol=0)
        rows_ok = all(np.abs(X @ ones).max() <= tol for X in (self.R, self.P, self.S, self.D))
        return sym_ok and anti_ok and rows_ok

    def evaluate(self, q: np.ndarray, v: np.ndarray) -> float:
        """Value at positions/velocities of shape (n, d), i.e. ``Z^T (A x 1_d) Z / 2``."""
        A = self.hessian
        Z = np.vstack([q, v])
        return 0.5 * float(np.einsum("ak,ab,bk->", Z, A, Z))

    def __add__(self, other: "QuadraticForm") -> "QuadraticForm":
        return QuadraticForm(self.R + other.R, self.P + other.P,
                             self.S + other.S, self.D + other.D)

    def __rmul__(self, c: float) -> "QuadraticForm":
        return QuadraticForm(c * self.R, c * self.P, c * self.S, c * self.D)


def basis_form(n: int, kind: str, index) -> QuadraticForm:
    """Quadratic form of one reduced coordinate.

    ``kind`` is ``"rho"``, ``"nu"`` or ``"sigma"`` with ``index`` a pair
    ``(i, j)``; or ``"delta"`` with ``index`` either a position in
    :func:`delta_basis` or a quadruple ``(i, j, k, l)`` naming ``C_{ij,kl}``.
    """
    z = np.zeros((n, n))
    if kind in ("rho", "nu", "sigma"):
        i, j = index
        if not (1 <= i <= n and 1 <= j <= n and i != j):
            raise ValueError(f"invalid pair {index} for n={n}")
        E = laplacian_unit(n, i, j)
        return QuadraticForm(
            E if kind == "rho" else z,
            E if kind == "nu" else z,
            E if kind == "sigma" else z,
            z,
        )
    if kind == "delta":
        if isinstance(index, (int, np.integer)):
            quads = delta_basis(n)
            if not 0 <= index < len(quads):
                raise ValueError(f"delta index {index} out of range for n={n}")
            quad = quads[index]
        else:
            quad = tuple(index)
            if len(quad) != 4 or not all(1 <= x <= n for x in quad):
                raise ValueError(f"invalid cross-product indices {index} for n={n}")
        return QuadraticForm(z, z, z, _antisym_W(n, quad))
    raise ValueError(f"unknown invariant kind {kind!r}")


@lru_cache(maxsize=None)
def _basis_forms(n: int) -> tuple[QuadraticForm, ...]:
    forms = [basis_form(n, kind, p) for kind in ("rho", "nu", "sigma") for p in pairs(n)]
    forms += [basis_form(n, "delta", k) for k in range(layout(n).n_delta)]
    return tuple(forms)


def basis_forms(n: int) -> list[QuadraticForm]:
    """Forms of all reduced coordinates in reduced-vector order."""
    return list(_basis_forms(n))


@lru_cache(maxsize=None)
def _basis_pinv(n: int) -> tuple[np.ndarray, np.ndarray]:
    mat = np.array([f.flat for f in _basis_forms(n)]).T
    if np.linalg.matrix_rank(mat) != mat.shape[1]:
        raise ExpansionError(f"invariant basis for n={n} is linearly dependent")
    return mat, np.linalg.pinv(mat)


def expand(form: QuadraticForm, tol: float = 1e-10) -> np.ndarray:
    """Coefficients of ``form`` in the invariant basis.

    Raises
    ------
    ExpansionError
        If the residual of the least-squares fit exceeds ``tol`` relative to
        the size of the form.
    """
    mat, pinv = _basis_pinv(form.n)
    x = form.flat
    c = pinv @ x
    resid = np.abs(mat @ c - x).max()
    if resid > tol * max(1.0, np.abs(x).max()):
        raise ExpansionError(f"form lies outside the invariant span (residual {resid:.2e})")
    return c


def compose(A: QuadraticForm, B: QuadraticForm, sys: MassSystem) -> QuadraticForm:
    """Twisted commutator ``A*B = A J B - B J A``, the bracket of the two forms."""
    if A.n != B.n or A.n != sys.n:
        raise ValueError("forms and system must share the same n")
    n = sys.n
    Minv = np.diag(1.0 / sys.m)
    J = np.block([[np.zeros((n, n)), Minv], [-Minv, np.zeros((n, n))]])
    HA, HB = A.hessian, B.hessian
    return QuadraticForm.from_hessian(HA @ J @ HB - HB @ J @ HA)


@lru_cache(maxsize=64)
def _structure_tensor(masses: tuple[float, ...]) -> np.ndarray:
    sys = MassSystem(masses)
    forms = _basis_forms(sys.n)
    N = len(forms)
    C = np.zeros((N, N, N))
    for a in range(N):
        for b in range(a + 1, N):
            C[a, b] = expand(compose(forms[a], forms[b], sys))
            C[b, a] = -C[a, b]
    C.setflags(write=False)
    return C


def structure_tensor(sys: MassSystem) -> np.ndarray:
    """Structure constants ``c[a, b, k]`` with ``{Y_a, Y_b} = sum_k c[a, b, k] Y_k``."""
    return _structure_tensor(sys.masses)


def structure_matrix_general(sys: MassSystem, Y) -> np.ndarray:
    """``B(Y)`` from expansion of composed basis forms; valid for every n."""
    y = _vec(Y, sys.n)
    B = structure_tensor(sys) @ y
    return 0.5 * (B - B.T)


# ---------------------------------------------------------------------------
# block functions


@dataclass(frozen=True)
class Blocks:
    """Coefficient tensors of the linear block functions.

    ``L(tau) = TL @ tau`` (p x p), ``v(tau) = Tv @ tau`` (p x r),
    ``Delta(delta) = TD @ delta`` (p x p) and ``Sigma(delta) = TS @ delta``
    (r x r), where ``p`` is the number of pairs and ``r`` of deltas.
    """

    TL: np.ndarray
    Tv: np.ndarray
    TD: np.ndarray
    TS: np.ndarray

    def L(self, tau):
        return self.TL @ tau

    def v(self, tau):
        return self.Tv @ tau

    def Delta(self, delta):
        return self.TD @ delta

    def Sigma(self, delta):
        return self.TS @ delta

    def assemble(self, Y) -> np.ndarray:
        """Structure matrix from the block layout

        ::

            [ 0   2(L(s)-D(d))  L(r)   v(r) ]
            [ .   0            -L(n)   v(n) ]
            [ .   .             D(d)   v(s) ]
            [ .   .             .      S(d) ]
        """
        p = self.TL.shape[0]
        r = self.Tv.shape[1]
        lay = layout(int(round((1 + np.sqrt(1 + 8 * p)) / 2)))
        y = np.asarray(Y, dtype=float)
        rho, nu, sg, dl = y[lay.rho], y[lay.nu], y[lay.sigma], y[lay.delta]
        B = np.zeros((lay.size, lay.size))
        Dd = self.Delta(dl) if r else np.zeros((p, p))
        B[lay.rho, lay.nu] = 2.0 * (self.L(sg) - Dd)
        B[lay.rho, lay.sigma] = self.L(rho)
        B[lay.nu, lay.sigma] = -self.L(nu)
        B[lay.sigma, lay.sigma] = Dd
        if r:
            B[lay.rho, lay.delta] = self.v(rho)
            B[lay.nu, lay.delta] = self.v(nu)
            B[lay.sigma, lay.delta] = self.v(sg)
            B[lay.delta, lay.delta] = self.Sigma(dl)
        iu = np.triu_indices(lay.size, 1)
        B[(iu[1], iu[0])] = -B[iu]
        return B


@lru_cache(maxsize=64)
def _blocks_general(masses: tuple[float, ...]) -> Blocks:
    sys = MassSystem(masses)
    lay = sys.layout
    C = structure_tensor(sys)
    TL = np.array(C[lay.rho, lay.sigma][:, :, lay.rho])
    Tv = np.array(C[lay.rho, lay.delta][:, :, lay.rho])
    TD = np.array(C[lay.sigma, lay.sigma][:, :, lay.delta])
    TS = np.array(C[lay.delta, lay.delta][:, :, lay.delta])
    return Blocks(TL, Tv, TD, TS)


def blocks_general(sys: MassSystem) -> Blocks:
    """Block tensors read off the general structure tensor (any n)."""
    return _blocks_general(sys.masses)


def _shared_index_L(m: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """``L(tau)``: ``2 tau_ij / mu_ij`` on the diagonal, ``(tau_ij + tau_jl - tau_il) / m_j``
    where the pairs share the index ``j``, zero for disjoint pairs."""
    n = m.size
    P = pairs(n)
    idx = {p: a for a, p in enumerate(P)}

    def t(a, b):
        return tau[idx[(min(a, b), max(a, b))]]

    L = np.zeros((len(P), len(P)))
    for a, (i, j) in enumerate(P):
        L[a, a] = 2.0 * tau[a] * (1.0 / m[i - 1] + 1.0 / m[j - 1])
        for b in range(a + 1, len(P)):
            k, l = P[b]
            common = {i, j} & {k, l}
            if len(common) != 1:
                continue
            c = common.pop()
            x = ({i, j} - {c}).pop()
            y = ({k, l} - {c}).pop()
            L[a, b] = L[b, a] = (t(x, c) + t(c, y) - t(x, y)) / m[c - 1]
    return L


def _n3_v(m, tau):
    m1, m2, m3 = m
    t23, t13, t12 = tau[REVERSED_PAIRS_N3]
    v_rev = np.array([
        (t23 + t13 - t12) / m2 - (t23 - t13 + t12) / m3,
        (-t23 + t13 + t12) / m3 - (t23 + t13 - t12) / m1,
        (t23 - t13 + t12) / m1 - (-t23 + t13 + t12) / m2,
    ])
    out = np.empty(3)
    out[REVERSED_PAIRS_N3] = v_rev
    return out[:, None]


def _n3_Delta(m, delta):
    m1, m2, m3 = m
    D_rev = delta[0] * np.array([
        [0.0, 1 / m3, -1 / m2],
        [-1 / m3, 0.0, 1 / m1],
        [1 / m2, -1 / m1, 0.0],
    ])
    return D_rev[np.ix_(REVERSED_PAIRS_N3, REVERSED_PAIRS_N3)]


def _n4_v(m, tau):
    m1, m2, m3, m4 = m
    t12, t13, t14, t23, t24, t34 = tau
    mu = lambda a, b: 1.0 / (1.0 / a + 1.0 / b)  # noqa: E731
    return np.array([
        [-(t13 - t14 - t23 + t24) / mu(m1, m2),
         (t12 - t13 + t23) / m1 + (-t12 - t14 + t24) / m2,
         (-t12 - t13 + t23) / m2 + (t12 - t14 + t24) / m1],
        [(t12 + t13 - t23) / m3 + (-t13 + t14 - t34) / m1,
         (t12 - t13 - t23) / m1 + (t13 + t14 - t34) / m3,
         (t12 - t14 - t23 + t34) / mu(m1, m3)],
        [(-t12 - t14 + t24) / m4 + (-t13 + t14 + t34) / m1,
         (t12 - t13 - t24 + t34) / mu(m1, m4),
         (t12 - t14 - t24) / m1 + (t13 + t14 - t34) / m4],
        [(-t12 + t13 - t23) / m3 + (t23 - t24 + t34) / m2,
         -(t12 - t13 - t24 + t34) / mu(m2, m3),
         (-t12 + t13 + t23) / m2 + (-t23 - t24 + t34) / m3],
        [(t12 - t14 + t24) / m4 + (t23 - t24 - t34) / m2,
         (-t12 + t14 + t24) / m2 + (-t23 - t24 + t34) / m4,
         -(t12 - t14 - t23 + t34) / mu(m2, m4)],
        [(t13 - t14 - t23 + t24) / mu(m3, m4),
         (t13 - t14 - t34) / m3 + (t23 - t24 + t34) / m4,
         (-t13 + t14 - t34) / m4 + (-t23 + t24 + t34) / m3],
    ])


def _n4_Delta(m, delta):
    m1, m2, m3, m4 = m
    d1, d2, d3 = delta
    a = d1 + d2 + d3
    b = -d1 + d2 + d3
    c = d1 + d2 - d3
    e = d1 - d2 + d3
    U = np.array([
        [0, -a / (2 * m1), -b / (2 * m1), a / (2 * m2), b / (2 * m2), 0],
        [0, 0, c / (2 * m1), -a / (2 * m3), 0, -c / (2 * m3)],
        [0, 0, 0, 0, -b / (2 * m4), c / (2 * m4)],
        [0, 0, 0, 0, -e / (2 * m2), e / (2 * m3)],
        [0, 0, 0, 0, 0, -e / (2 * m4)],
        [0, 0, 0, 0, 0, 0],
    ], dtype=float)
    return U - U.T


def _n4_Sigma(m, delta):
    m1, m2, m3, m4 = m
    d1, d2, d3 = delta
    a = d1 + d2 + d3
    b = -d1 + d2 + d3
    c = d1 + d2 - d3
    e = d1 - d2 + d3
    s12 = e / (2 * m1) - c / (2 * m2) + b / (2 * m3) + a / (2 * m4)
    s13 = e / (2 * m1) - c / (2 * m2) - b / (2 * m3) - a / (2 * m4)
    s23 = e / (2 * m1) + c / (2 * m2) - b / (2 * m3) + a / (2 * m4)
    U = np.array([[0, s12, s13], [0, 0, s23], [0, 0, 0]], dtype=float)
    return U - U.T


def _linear_tensor(fn, m, dim_in):
    """Coefficient tensor of a matrix-valued linear function by evaluation on unit vectors."""
    cols = [fn(m, np.eye(dim_in)[k]) for k in range(dim_in)]
    return np.stack(cols, axis=-1)


@lru_cache(maxsize=64)
def _blocks_closed(masses: tuple[float, ...]) -> Blocks:
    m = np.array(masses)
    n = m.size
    lay = layout(n)
    p, r = lay.n_pairs, lay.n_delta
    TL = _linear_tensor(_shared_index_L, m, p)
    if n == 2:
        return Blocks(TL, np.zeros((p, 0, p)), np.zeros((p, p, 0)), np.zeros((0, 0, 0)))
    if n == 3:
        Tv = _linear_tensor(_n3_v, m, p)
        TD = _linear_tensor(_n3_Delta, m, r)
        return Blocks(TL, Tv, TD, np.zeros((1, 1, 1)))
    if n == 4:
        return Blocks(TL, _linear_tensor(_n4_v, m, p), _linear_tensor(_n4_Delta, m, r),
                      _linear_tensor(_n4_Sigma, m, r))
    raise ValueError(f"closed-form blocks exist only for n = 2, 3, 4, not n={n}")


def blocks_closed(sys: MassSystem) -> Blocks:
    """Closed-form block tensors (n = 2, 3, 4)."""
    return _blocks_closed(sys.masses)


def blocks(sys: MassSystem) -> Blocks:
    """Closed-form blocks where available, otherwise the general expansion."""
    return blocks_closed(sys) if sys.n <= 4 else blocks_general(sys)


def structure_matrix_closed(sys: MassSystem, Y) -> np.ndarray:
    """``B(Y)`` assembled from the closed-form blocks (n = 2, 3, 4)."""
    y = _vec(Y, sys.n)
    return blocks_closed(sys).assemble(y)


def structure_matrix(sys: MassSystem, Y) -> np.ndarray:
    """Best available ``B(Y)``: closed form for n <= 4, general expansion otherwise."""
    if sys.n <= 4:
        return structure_matrix_closed(sys, Y)
    return structure_matrix_general(sys, Y)


def bracket(sys: MassSystem, Y, f_grad, g_grad) -> float:
    """``{f, g} = grad f . B(Y) grad g``."""
    B = structure_matrix(sys, Y)
    return float(np.asarray(f_grad) @ B @ np.asarray(g_grad))


def casimirs_numeric(sys: MassSystem, Y, tol: float = 1e-10,
                     expected: int | None = None) -> np.ndarray:
    """Orthonormal basis of ``ker B(Y)``, one row per Casimir gradient direction.

    Singular values below ``tol * max(1, sigma_max)`` count as zero. When
    ``expected`` is given and the kernel dimension differs, :class:`RankError`
    is raised.
    """
    B = structure_matrix(sys, Y)
    _, s, Vt = np.linalg.svd(B)
    null = s <= tol * max(1.0, s[0])
    kernel = Vt[null]
    if expected is not None and kernel.shape[0] != expected:
        raise RankError(
            f"kernel of B has dimension {kernel.shape[0]}, expected {expected} "
            f"(singular values {np.array2string(s[-expected - 2:], precision=2)})"
        )
    return kernel


def jacobi_residual(sys: MassSystem, Y, a, b, c) -> float:
    """Cyclic sum ``{{f,g},h} + {{g,h},f} + {{h,f},g}`` for linear ``f = a.Y`` etc.

    For a linear bracket ``grad {f, g} = C[a, b]``, so the sum is exact
    algebra on the structure tensor evaluated at ``Y``.
    """
    y = _vec(Y, sys.n)
    C = structure_tensor(sys)
    B = structure_matrix(sys, y)
    a, b, c = (np.asarray(x, dtype=float) for x in (a, b, c))

    def grad_bracket(f, g):
        return np.einsum("i,j,ijk->k", f, g, C)

    return float(grad_bracket(a, b) @ B @ c + grad_bracket(b, c) @ B @ a
                 + grad_bracket(c, a) @ B @ b)


def kinetic_identity_residuals(sys: MassSystem, tau, delta) -> dict[str, float]:
    """Largest entries of ``L(tau) K' - tau``, ``v(tau)^T K'`` and ``Delta(delta) K'``.

    ``K'`` is the gradient of the kinetic energy in ``nu``. All three vanish
    identically, which is what makes the potential flow solvable in closed form.
    """
    bl = blocks(sys)
    k = sys.kinetic_gradient
    tau = np.asarray(tau, dtype=float)
    out = {
        "L": float(np.abs(bl.L(tau) @ k - tau).max()),
        "v": float(np.abs(bl.v(tau).T @ k).max()) if bl.v(tau).size else 0.0,
        "Delta": float(np.abs(bl.Delta(delta) @ k).max()),
    }
    return out


def structure_dump(sys: MassSystem, Y) -> dict:
    """``B(Y)`` and its blocks as plain lists, for inspection outside Python."""
    y = _vec(Y, sys.n)
    lay = sys.layout
    bl = blocks(sys)
    out = {
        "n": sys.n,
        "masses": list(sys.masses),
        "labels": lay.labels(),
        "Y": y.tolist(),
        "B": structure_matrix(sys, y).tolist(),
        "L_rho": bl.L(y[lay.rho]).tolist(),
        "L_nu": bl.L(y[lay.nu]).tolist(),
        "L_sigma": bl.L(y[lay.sigma]).tolist(),
    }
    if lay.n_delta:
        dl = y[lay.delta]
        out["Delta"] = bl.Delta(dl).tolist()
        out["Sigma"] = bl.Sigma(dl).tolist()
        out["v_rho"] = bl.v(y[lay.rho]).tolist()
        out["v_nu"] = bl.v(y[lay.nu]).tolist()
        out["v_sigma"] = bl.v(y[lay.sigma]).tolist()
    return out

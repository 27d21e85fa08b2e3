"""Splitting integrators on the reduced phase space.

Both parts of ``H_c = K_c(nu) + V(rho)`` generate flows that are polynomial
in time and can be written down exactly, so every composition of them is a
Poisson map that keeps the Casimirs (Gram determinant, ``|L_c|^2``) fixed up
to round-off. All functions take and return flat reduced vectors.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import CollisionError
from .invariants import (
    MassSystem,
    _vec,
    angular_momentum_sq,
    gram_det,
    hamiltonian_rel,
    layout,
    n_from_size,
)
from .lie_poisson import blocks

__all__ = [
    "SplitScheme",
    "KV",
    "VK",
    "STRANG",
    "YOSHIDA4",
    "SCHEMES",
    "flow_K",
    "flow_V",
    "flow_V_direct",
    "jacobian_K",
    "jacobian_V",
    "strang_step",
    "compose_scheme",
    "step_with_jacobian",
    "scale_state",
    "Trajectory",
    "integrate",
    "DEFAULT_OBSERVERS",
]


@dataclass(frozen=True)
class SplitScheme:
    """Ordered stages ``(flow, coefficient)``; stage ``("K", c)`` applies ``phi_K^{c h}``.

    Stages are applied left to right.
    """

    name: str
    stages: tuple[tuple[str, float], ...]
    order: int

    def __post_init__(self):
        for flow, _ in self.stages:
            if flow not in ("K", "V"):
                raise ValueError(f"unknown flow {flow!r} in scheme {self.name}")
        for part in ("K", "V"):
            total = sum(c for f, c in self.stages if f == part)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"{part} coefficients of {self.name} sum to {total}, not 1")


KV = SplitScheme("KV", (("K", 1.0), ("V", 1.0)), 1)
VK = SplitScheme("VK", (("V", 1.0), ("K", 1.0)), 1)
STRANG = SplitScheme("strang", (("K", 0.5), ("V", 1.0), ("K", 0.5)), 2)


def _triple_jump(base: SplitScheme, name: str) -> SplitScheme:
    w1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
    w0 = 1.0 - 2.0 * w1
    stages: list[tuple[str, float]] = []
    for w in (w1, w0, w1):
        for flow, c in base.stages:
            if stages and stages[-1][0] == flow:
                stages[-1] = (flow, stages[-1][1] + w * c)
            else:
                stages.append((flow, w * c))
    return SplitScheme(name, tuple(stages), base.order + 2)


YOSHIDA4 = _triple_jump(STRANG, "yoshida4")

SCHEMES = {s.name: s for s in (KV, VK, STRANG, YOSHIDA4)}


# ---------------------------------------------------------------------------
# exact sub-flows


def flow_K(sys: MassSystem, Y, t: float) -> np.ndarray:
    """Exact flow of the relative kinetic energy: free flight."""
    y = _vec(Y, sys.n)
    lay = sys.layout
    rho, nu, sg = y[lay.rho], y[lay.nu], y[lay.sigma]
    out = y.copy()
    out[lay.rho] = rho + 2.0 * t * sg + t * t * nu
    out[lay.sigma] = sg + t * nu
    return out


def _rho_derivs(sys: MassSystem, rho: np.ndarray, second: bool = False):
    if np.any(~(rho > sys.collision_floor)):
        k = int(np.argmin(rho))
        raise CollisionError(f"rho[{k}] = {rho[k]:.3e} at or below collision floor")
    pot = sys.pair_potential
    g = pot.d1(rho, sys.mimj, sys.G)
    if not second:
        return g
    if pot.d2 is None:
        raise ValueError(f"potential {pot.name!r} has no second derivative")
    return g, pot.d2(rho, sys.mimj, sys.G)


def flow_V(sys: MassSystem, Y, t: float) -> np.ndarray:
    """Exact flow of the potential: positions frozen, velocities kicked.

    With ``g = V'(rho)``, ``a = -L(rho) g`` and ``b = -v(rho)^T g``::

        sigma <- sigma + t a
        delta <- delta + t b
        nu    <- nu - (L(2t sigma + t^2 a) + Delta(2t delta + t^2 b)) g
    """
    y = _vec(Y, sys.n)
    lay = sys.layout
    bl = blocks(sys)
    rho, nu, sg, dl = y[lay.rho], y[lay.nu], y[lay.sigma], y[lay.delta]
    g = _rho_derivs(sys, rho)
    a = -bl.L(rho) @ g
    b = -bl.v(rho).T @ g
    out = y.copy()
    out[lay.nu] = nu - (bl.L(2 * t * sg + t * t * a) + bl.Delta(2 * t * dl + t * t * b)) @ g
    out[lay.sigma] = sg + t * a
    out[lay.delta] = dl + t * b
    return out


def flow_V_direct(sys: MassSystem, Y, t: float) -> np.ndarray:
    """Same map as :func:`flow_V` using the unexpanded two-term form for ``nu``."""
    y = _vec(Y, sys.n)
    lay = sys.layout
    bl = blocks(sys)
    rho, nu, sg, dl = y[lay.rho], y[lay.nu], y[lay.sigma], y[lay.delta]
    g = _rho_derivs(sys, rho)
    a = -bl.L(rho) @ g
    b = -bl.v(rho).T @ g
    out = y.copy()
    out[lay.nu] = (nu - 2 * t * (bl.L(sg) + bl.Delta(dl)) @ g
                   - t * t * (bl.L(a) + bl.Delta(b)) @ g)
    out[lay.sigma] = sg + t * a
    out[lay.delta] = dl + t * b
    return out


def jacobian_K(sys: MassSystem, t: float) -> np.ndarray:
    """Constant Jacobian of :func:`flow_K`."""
    lay = sys.layout
    p = lay.n_pairs
    J = np.eye(lay.size)
    I = np.eye(p)
    J[lay.rho, lay.nu] = t * t * I
    J[lay.rho, lay.sigma] = 2 * t * I
    J[lay.sigma, lay.nu] = t * I
    return J


def jacobian_V(sys: MassSystem, Y, t: float) -> np.ndarray:
    """Analytic Jacobian of :func:`flow_V` at ``Y``."""
    y = _vec(Y, sys.n)
    lay = sys.layout
    bl = blocks(sys)
    rho, sg, dl = y[lay.rho], y[lay.sigma], y[lay.delta]
    g, gp = _rho_derivs(sys, rho, second=True)

    Lr = bl.L(rho)
    vr = bl.v(rho)
    # d(L(x) g)/dx = Ag and d(Delta(e) g)/de = Dg for fixed g
    Ag = np.einsum("abc,b->ac", bl.TL, g)
    Dg = np.einsum("abk,b->ak", bl.TD, g)
    a = -Lr @ g
    b = -vr.T @ g
    da = -(Ag + Lr * gp[None, :])
    db = -(np.einsum("akc,a->kc", bl.Tv, g) + vr.T * gp[None, :])

    s = 2 * t * sg + t * t * a
    e = 2 * t * dl + t * t * b
    J = np.eye(lay.size)
    J[lay.nu, lay.rho] = -(t * t * (Ag @ da + Dg @ db) + (bl.L(s) + bl.Delta(e)) * gp[None, :])
    J[lay.nu, lay.sigma] = -2 * t * Ag
    J[lay.nu, lay.delta] = -2 * t * Dg
    J[lay.sigma, lay.rho] = t * da
    J[lay.delta, lay.rho] = t * db
    return J


# ---------------------------------------------------------------------------
# compositions


def strang_step(sys: MassSystem, Y, h: float) -> np.ndarray:
    """``phi_K^{h/2} o phi_V^h o phi_K^{h/2}``: second order and reversible."""
    return flow_K(sys, flow_V(sys, flow_K(sys, Y, 0.5 * h), h), 0.5 * h)


def compose_scheme(sys: MassSystem, Y, h: float, scheme: SplitScheme = STRANG) -> np.ndarray:
    y = _vec(Y, sys.n)
    for flow, c in scheme.stages:
        y = flow_K(sys, y, c * h) if flow == "K" else flow_V(sys, y, c * h)
    return y


def step_with_jacobian(sys: MassSystem, Y, h: float,
                       scheme: SplitScheme = STRANG) -> tuple[np.ndarray, np.ndarray]:
    """One step together with its analytic Jacobian."""
    y = _vec(Y, sys.n)
    J = np.eye(y.size)
    for flow, c in scheme.stages:
        if flow == "K":
            J = jacobian_K(sys, c * h) @ J
            y = flow_K(sys, y, c * h)
        else:
            J = jacobian_V(sys, y, c * h) @ J
            y = flow_V(sys, y, c * h)
    return y, J


def scale_state(Y, lam: float) -> np.ndarray:
    """Gravitational scaling ``(lam^2 rho, nu / lam, sqrt(lam) sigma, sqrt(lam) delta)``.

    Pairs with a step size scaled by ``lam**1.5``.
    """
    if not lam > 0:
        raise ValueError(f"scaling factor must be positive, got {lam}")
    y = _vec(Y)
    lay = layout(n_from_size(y.size))
    out = y.copy()
    out[lay.rho] *= lam**2
    out[lay.nu] /= lam
    out[lay.sigma] *= np.sqrt(lam)
    out[lay.delta] *= np.sqrt(lam)
    return out


# ---------------------------------------------------------------------------
# trajectories

Observer = Callable[[MassSystem, np.ndarray], float]

DEFAULT_OBSERVERS: dict[str, Observer] = {
    "H": hamiltonian_rel,
    "detG": gram_det,
    "Lc2": angular_momentum_sq,
}


@dataclass
class Trajectory:
    """Sampled states and observables of one run."""

    sys: MassSystem
    h: float
    steps: list[int] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    observables: dict[str, list[float]] = field(default_factory=dict)
    failed_at: int | None = None

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.steps, dtype=float) * self.h

    @property
    def Y(self) -> np.ndarray:
        return np.array(self.states)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.observables[name])

    def to_csv(self, fh: io.TextIOBase | None = None) -> str:
        """CSV with columns step, t, reduced coordinates, then observables.

        Numbers are written with 17 significant digits. A failed run ends
        with a marker row ``# failed at step k``.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.observables)
        w.writerow(["step", "t", *layout(self.sys.n).labels(), *names])
        for r, (k, y) in enumerate(zip(self.steps, self.states)):
            row = [str(k), f"{k * self.h:.17g}"]
            row += [f"{x:.17g}" for x in y]
            row += [f"{self.observables[nm][r]:.17g}" for nm in names]
            w.writerow(row)
        if self.failed_at is not None:
            buf.write(f"# failed at step {self.failed_at}\n")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def summary(self) -> dict:
        out = {"h": self.h, "steps": self.steps[-1] if self.steps else 0,
               "failed_at": self.failed_at}
        for name, vals in self.observables.items():
            arr = np.asarray(vals)
            if arr.size == 0:
                continue
            out[name] = {
                "initial": float(arr[0]),
                "min": float(arr.min()),
                "max": float(arr.max()),
                "max_abs_drift": float(np.max(np.abs(arr - arr[0]))),
            }
        return out


def integrate(sys: MassSystem, Y0, h: float, n_steps: int,
              scheme: SplitScheme = STRANG,
              observers: Mapping[str, Observer] | None = None,
              stride: int = 1) -> Trajectory:
    """Iterate ``scheme`` ``n_steps`` times, recording every ``stride``-th state.

    Raises
    ------
    CollisionError
        With ``.step`` set to the failing step and ``.trajectory`` holding
        everything recorded before the failure.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    obs = DEFAULT_OBSERVERS if observers is None else dict(observers)
    traj = Trajectory(sys, h, observables={k: [] for k in obs})

    def record(k, y):
        traj.steps.append(k)
        traj.states.append(y)
        for name, f in obs.items():
            traj.observables[name].append(float(f(sys, y)))

    y = _vec(Y0, sys.n).copy()
    record(0, y)
    for k in range(1, n_steps + 1):
        try:
            y = compose_scheme(sys, y, h, scheme)
        except CollisionError as exc:
            traj.failed_at = k
            err = CollisionError(f"step {k}: {exc}", step=k)
            err.trajectory = traj
            raise err from exc
        if k % stride == 0 or k == n_steps:
            record(k, y)
    return traj


def iterate(sys: MassSystem, Y0, h: float, n_steps: int,
            scheme: SplitScheme = STRANG) -> Iterable[np.ndarray]:
    """Yield ``Y0`` and the following ``n_steps`` states."""
    y = _vec(Y0, sys.n)
    yield y
    for _ in range(n_steps):
        y = compose_scheme(sys, y, h, scheme)
        yield y

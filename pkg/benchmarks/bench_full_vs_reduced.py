"""Reduced-coordinate Strang steps against drift/kick steps on full coordinates.

Both integrate the figure-8 seed for 25 periods at h = 0.04 and report wall
time per step, energy fluctuation and the drift of the Casimirs (reduced) or
of the angular momentum and momentum (full). Usage::

    python3 benchmarks/bench_full_vs_reduced.py [--rounds 25]
"""

import argparse
import time

import numpy as np

from lpnbody import MassSystem, project
from lpnbody.integrator import STRANG, compose_scheme
from lpnbody.invariants import angular_momentum_sq, gram_det, hamiltonian_rel
from lpnbody.oracle import angular_momentum_cm_sq, drift_map, full_energy, kick_map, total_momentum
from lpnbody.orbits import CONTINUUM_SEED, seed_full_state


def run_reduced(sys, y, h, steps):
    H, C = [], []
    start = time.perf_counter()
    for _ in range(steps):
        y = compose_scheme(sys, y, h, STRANG)
        H.append(hamiltonian_rel(sys, y))
        C.append((gram_det(sys, y), angular_momentum_sq(sys, y)))
    return time.perf_counter() - start, np.array(H), np.array(C)


def run_full(sys, s, h, steps):
    H, C = [], []
    start = time.perf_counter()
    for _ in range(steps):
        s = drift_map(sys, kick_map(sys, drift_map(sys, s, h / 2), h), h / 2)
        H.append(full_energy(sys, s))
        C.append((np.linalg.norm(total_momentum(sys, s)), angular_momentum_cm_sq(sys, s)))
    return time.perf_counter() - start, np.array(H), np.array(C)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=25)
    ap.add_argument("--h", type=float, default=0.04)
    args = ap.parse_args()
    sys_ = MassSystem.equal(3)
    s0 = seed_full_state(CONTINUUM_SEED)
    steps = args.rounds * 150
    tr, Hr, Cr = run_reduced(sys_, project(sys_, s0).vector, args.h, steps)
    tf, Hf, Cf = run_full(sys_, s0, args.h, steps)
    print(f"{steps} steps at h = {args.h}")
    print(f"{'':10s}{'us/step':>10s}{'H range':>12s}{'invariant drift':>18s}")
    print(f"{'reduced':10s}{1e6 * tr / steps:10.1f}{np.ptp(Hr):12.3e}"
          f"{np.abs(Cr - Cr[0]).max():18.3e}")
    print(f"{'full':10s}{1e6 * tf / steps:10.1f}{np.ptp(Hf):12.3e}"
          f"{np.abs(Cf - Cf[0]).max():18.3e}")


if __name__ == "__main__":
    main()

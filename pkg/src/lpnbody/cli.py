"""Command-line interface: ``lpnbody {simulate,find-orbit,verify,sweep}``.

A config file is JSON with the system and an optional initial condition::

    {
      "masses": [1, 1, 1],
      "G": 1.0,
      "potential": "gravitational",
      "initial": {"seed": {"rho13": 2.348, "nu13": 2.374, "sigma13": 1.289}}
    }

``initial`` holds exactly one of ``seed``, ``Y`` (reduced vector in the
column order of the CSV output) or ``q`` and ``v`` (n x d arrays).

Exit codes: 0 success, 1 numerical failure, 2 usage or input error.
Tolerances can be overridden through ``LPNBODY_*`` environment variables,
see :data:`TOLERANCE_ENV`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import oracle
from .errors import CollisionError, LPNBodyError, NoConvergence, RankError, SingularJacobian
from .integrator import SCHEMES, integrate
from .invariants import (
    FullState,
    MassSystem,
    angular_momentum_sq,
    gram_det,
    hamiltonian_rel,
    layout,
    project,
)
from .lie_poisson import (
    EXPECTED_KERNEL_DIM,
    casimirs_numeric,
    jacobi_residual,
    kinetic_identity_residuals,
    structure_dump,
    structure_matrix,
    structure_matrix_closed,
    structure_matrix_general,
)
from .orbits import (
    FIGURE8_SEED_H3,
    SymmetricSeed,
    find_orbit,
    is_elliptic,
    monodromy_eigenvalues,
    reciprocal_pairing_error,
    seed_to_state,
)

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2

TOLERANCE_ENV = {
    "newton_tol": ("LPNBODY_NEWTON_TOL", 1e-12),
    "bracket_rtol": ("LPNBODY_BRACKET_RTOL", 1e-10),
    "bracket_atol": ("LPNBODY_BRACKET_ATOL", 1e-12),
    "jacobi_tol": ("LPNBODY_JACOBI_TOL", 1e-9),
    "identity_tol": ("LPNBODY_IDENTITY_TOL", 1e-13),
    "kernel_tol": ("LPNBODY_KERNEL_TOL", 1e-10),
    "elliptic_tol": ("LPNBODY_ELLIPTIC_TOL", 1e-6),
}


class UsageError(Exception):
    pass


def tolerance(name: str) -> float:
    var, default = TOLERANCE_ENV[name]
    raw = os.environ.get(var)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise UsageError(f"{var}={raw!r} is not a number") from None


def _num(x: float) -> str:
    return f"{x:.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _dump_json(obj, path: str | None):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _parse_step(text: str) -> float:
    """Accept ``0.04`` as well as ``1/3``."""
    try:
        val = float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid step size {text!r}") from None
    if not val > 0:
        raise argparse.ArgumentTypeError("step size must be positive")
    return val


def _parse_guess(text: str) -> SymmetricSeed:
    parts = text.split(",")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"guess must be three numbers, got {text!r}") from None
    if len(vals) != 3 or not all(np.isfinite(vals)):
        raise argparse.ArgumentTypeError(f"guess must be three finite numbers, got {text!r}")
    return SymmetricSeed(*vals)


def _positive_int(text: str) -> int:
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return k


def _nonneg_int(text: str) -> int:
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if k < 0:
        raise argparse.ArgumentTypeError("expected a non-negative integer")
    return k


# ---------------------------------------------------------------------------
# configs


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def system_from_config(cfg: dict, default_n: int = 3) -> MassSystem:
    cfg = dict(cfg)
    cfg.setdefault("masses", [1.0] * default_n)
    try:
        return MassSystem.from_dict(cfg)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"bad system in config: {exc}") from None


def initial_state(cfg: dict, msys: MassSystem) -> np.ndarray:
    """Reduced initial vector from the ``initial`` block of a config."""
    init = cfg.get("initial")
    if not isinstance(init, dict):
        raise UsageError("config has no 'initial' object")
    forms = [k for k in ("seed", "Y", "q") if k in init]
    if len(forms) != 1:
        raise UsageError("'initial' needs exactly one of 'seed', 'Y' or 'q'/'v'")
    try:
        if "seed" in init:
            if msys.n != 3:
                raise UsageError("a symmetric seed needs three bodies")
            s = init["seed"]
            seed = SymmetricSeed(*s) if isinstance(s, list) else SymmetricSeed(**s)
            return seed_to_state(seed)
        if "Y" in init:
            y = np.asarray(init["Y"], dtype=float)
            if y.shape != (layout(msys.n).size,):
                raise UsageError(f"'Y' must have {layout(msys.n).size} entries for n = {msys.n}")
            return y
        q = np.asarray(init["q"], dtype=float)
        v = np.asarray(init["v"], dtype=float)
        if q.ndim != 2 or q.shape[0] != msys.n:
            raise UsageError(f"'q' must be an n x d array with n = {msys.n}")
        return project(msys, FullState(q, v)).vector
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"bad initial condition: {exc}") from None


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    msys = system_from_config(cfg)
    y0 = initial_state(cfg, msys)
    h = args.h if args.h is not None else float(Fraction(str(cfg.get("h", "0.04"))))
    steps = args.steps if args.steps is not None else int(cfg.get("steps", 150))
    scheme = SCHEMES[args.scheme]
    code = EXIT_OK
    try:
        traj = integrate(msys, y0, h, steps, scheme, stride=args.stride)
    except CollisionError as exc:
        traj = exc.trajectory
        print(f"collision: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    if steps == 0:
        # nothing was stepped, so the CSV carries the header only
        traj.steps.clear()
        traj.states.clear()
        for vals in traj.observables.values():
            vals.clear()
    if args.out in (None, "-"):
        traj.to_csv(sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            traj.to_csv(fh)
    summary = traj.summary()
    summary["scheme"] = scheme.name
    summary["n"] = msys.n
    if args.summary:
        _dump_json(summary, args.summary)
    return code


# ---------------------------------------------------------------------------
# find-orbit


def _orbit_report(msys: MassSystem, guess: SymmetricSeed, h: float, m: int,
                  with_monodromy: bool = True) -> dict:
    res = find_orbit(msys, guess, h, m, tol=tolerance("newton_tol"))
    y0 = seed_to_state(res.seed)
    out = res.to_dict()
    out["H"] = hamiltonian_rel(msys, y0)
    out["casimirs"] = {"detG": gram_det(msys, y0), "Lc2": angular_momentum_sq(msys, y0)}
    if with_monodromy:
        eigs = monodromy_eigenvalues(msys, y0, h, res.period)
        order = np.lexsort((eigs.imag, eigs.real))
        eigs = eigs[order]
        out["eigenvalues"] = [[float(e.real), float(e.imag)] for e in eigs]
        out["eigenvalue_moduli"] = [float(abs(e)) for e in eigs]
        out["elliptic"] = is_elliptic(eigs, tolerance("elliptic_tol"))
        out["pairing_error"] = reciprocal_pairing_error(eigs)
    return out


def cmd_find_orbit(args) -> int:
    cfg = load_config(args.config)
    msys = system_from_config(cfg)
    if msys.n != 3:
        raise UsageError("find-orbit works on three-body systems")
    m = args.m
    h = args.h if args.h is not None else 1.0 / m
    guess = args.guess or FIGURE8_SEED_H3
    try:
        out = _orbit_report(msys, guess, h, m)
    except (NoConvergence, SingularJacobian) as exc:
        print(f"orbit search failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    s = out["seed"]
    print(f"h = {_num(h)}  m = {m}  period = {out['period']} steps")
    print(f"seed rho13 = {_num(s['rho13'])}  nu13 = {_num(s['nu13'])}  "
          f"sigma13 = {_num(s['sigma13'])}")
    print(f"residual = {out['residual']:.3e}  iterations = {out['iterations']}  "
          f"H = {_num(out['H'])}")
    print("eigenvalue moduli: " + " ".join(f"{x:.9f}" for x in out["eigenvalue_moduli"]))
    print(f"elliptic: {out['elliptic']}  (pairing error {out['pairing_error']:.2e})")
    if args.out:
        _dump_json(out, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _random_state(msys: MassSystem, d: int, rng: np.random.Generator) -> FullState:
    return FullState(rng.normal(size=(msys.n, d)), rng.normal(size=(msys.n, d)))


def verify_suite(msys: MassSystem, samples: int, seed: int, d: int = 3) -> list[dict]:
    """Run the oracle cross-checks; one result row per check."""
    rng = np.random.default_rng(seed)
    n = msys.n
    lay = layout(n)
    rows = []

    def row(name, worst, tol, detail=""):
        rows.append({"check": name, "worst": float(worst), "tol": float(tol),
                     "pass": bool(worst <= tol), "detail": detail})

    states = [_random_state(msys, d, rng) for _ in range(samples)]
    ys = [project(msys, s).vector for s in states]

    rtol, atol = tolerance("bracket_rtol"), tolerance("bracket_atol")
    worst = 0.0
    for s, y in zip(states, ys):
        ref = oracle.bracket_table(msys, s)
        B = structure_matrix(msys, y)
        scale = np.maximum(np.abs(ref), atol / rtol)
        worst = max(worst, float(np.max(np.abs(B - ref) / scale)))
    row("B vs canonical bracket", worst, rtol, "relative, absolute floor on zeros")

    worst = max((float(np.abs(structure_matrix(msys, y) + structure_matrix(msys, y).T).max())
                 for y in ys), default=0.0)
    row("antisymmetry", worst, 0.0)

    worst = 0.0
    for y in ys:
        a, b, c = rng.normal(size=(3, lay.size))
        worst = max(worst, abs(jacobi_residual(msys, y, a, b, c)))
    row("Jacobi identity", worst, tolerance("jacobi_tol"))

    worst = 0.0
    for _ in range(samples):
        r = kinetic_identity_residuals(msys, rng.normal(size=lay.n_pairs),
                                       rng.normal(size=lay.n_delta))
        worst = max(worst, *r.values())
    row("kinetic gradient identities", worst, tolerance("identity_tol"))

    if n <= 4:
        worst = 0.0
        for y in ys:
            Bc = structure_matrix_closed(msys, y)
            Bg = structure_matrix_general(msys, y)
            worst = max(worst, float(np.abs(Bc - Bg).max() / max(1.0, np.abs(Bc).max())))
        row("closed vs general assembly", worst, 1e-12)

    expected = EXPECTED_KERNEL_DIM.get(n)
    if expected is not None:
        # kernel checks need states that fill enough dimensions
        dk = max(d, 2 * n - 2)
        bad = 0
        dims = set()
        for _ in range(samples):
            y = project(msys, _random_state(msys, dk, rng)).vector
            k = casimirs_numeric(msys, y, tol=tolerance("kernel_tol")).shape[0]
            dims.add(k)
            bad += k != expected
        row("kernel dimension", bad, 0, f"expected {expected}, seen {sorted(dims)}")
    return rows


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    if args.masses:
        msys = MassSystem(tuple(args.masses))
    elif "masses" in cfg:
        msys = system_from_config(cfg)
    else:
        msys = MassSystem.equal(args.n)
    if args.samples == 0:
        warnings.warn("no samples requested; every check passes vacuously", stacklevel=1)
        print("warning: --samples 0, nothing checked", file=sys.stderr)
    rows = verify_suite(msys, args.samples, args.seed, args.d)
    width = max(len(r["check"]) for r in rows)
    for r in rows:
        mark = "PASS" if r["pass"] else "FAIL"
        print(f"{mark}  {r['check']:<{width}}  worst {r['worst']:.3e}  tol {r['tol']:.1e}"
              + (f"  ({r['detail']})" if r["detail"] else ""))
    if args.out:
        _dump_json({"n": msys.n, "samples": args.samples, "seed": args.seed, "checks": rows},
                   args.out)
    if args.dump:
        y = project(msys, _random_state(msys, args.d, np.random.default_rng(args.seed))).vector
        _dump_json(structure_dump(msys, y), args.dump)
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# sweep


def _sweep_job(job):
    masses, G, h, m, guess = job
    msys = MassSystem(tuple(masses), G=G)
    try:
        out = _orbit_report(msys, SymmetricSeed(*guess), h, m)
        out["ok"] = True
    except (NoConvergence, SingularJacobian, CollisionError) as exc:
        out = {"h": h, "m": m, "ok": False, "error": str(exc)}
    return out


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    msys = system_from_config(cfg)
    if msys.n != 3:
        raise UsageError("sweep works on three-body systems")
    guess = tuple(args.guess or FIGURE8_SEED_H3)
    hs = args.h or [None]
    jobs = [(msys.masses, msys.G, 1.0 / m if h is None else h, m, guess)
            for h in hs for m in args.m]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    for r in results:
        if r["ok"]:
            s = r["seed"]
            print(f"h = {r['h']:.6g}  m = {r['m']:>4d}  seed = ({s['rho13']:.8f}, "
                  f"{s['nu13']:.8f}, {s['sigma13']:.8f})  H = {r['H']:.8f}  "
                  f"elliptic = {r['elliptic']}")
        else:
            print(f"h = {r['h']:.6g}  m = {r['m']:>4d}  failed: {r['error']}")
    if args.out:
        _dump_json(results, args.out)
    return EXIT_OK if all(r["ok"] for r in results) else EXIT_NUMERIC


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lpnbody", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate in reduced coordinates, write CSV")
    s.add_argument("config", help="JSON config with system and initial condition")
    s.add_argument("--h", type=_parse_step, help="step size (default from config or 0.04)")
    s.add_argument("--steps", type=_nonneg_int, help="number of steps (default from config or 150)")
    s.add_argument("--scheme", choices=sorted(SCHEMES), default="strang")
    s.add_argument("--stride", type=_positive_int, default=1, help="record every k-th step")
    s.add_argument("--out", help="CSV path, '-' for stdout (default)")
    s.add_argument("--summary", help="summary JSON path, '-' for stdout")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("find-orbit", help="Newton search for a symmetric periodic orbit")
    f.add_argument("--config", help="JSON config (default: three unit masses)")
    f.add_argument("--m", type=_positive_int, default=3, help="steps per sixth of the period")
    f.add_argument("--h", type=_parse_step, help="step size (default 1/m)")
    f.add_argument("--guess", type=_parse_guess, help="rho13,nu13,sigma13")
    f.add_argument("--out", help="result JSON path")
    f.set_defaults(func=cmd_find_orbit)

    v = sub.add_parser("verify", help="cross-check the structure matrix against the oracle")
    v.add_argument("--config", help="JSON config providing masses")
    v.add_argument("--n", type=_positive_int, default=3, help="number of unit masses")
    v.add_argument("--masses", type=float, nargs="+", help="explicit masses")
    v.add_argument("--samples", type=_nonneg_int, default=100)
    v.add_argument("--seed", type=int, default=0, help="random seed")
    v.add_argument("--d", type=_positive_int, default=3, help="spatial dimension of samples")
    v.add_argument("--out", help="result JSON path")
    v.add_argument("--dump", help="write B and its blocks at one sample state to this JSON path")
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="orbit searches over a grid of step counts")
    w.add_argument("--config", help="JSON config (default: three unit masses)")
    w.add_argument("--m", type=_positive_int, nargs="+", default=[3, 6, 12, 25])
    w.add_argument("--h", type=_parse_step, nargs="+", help="step sizes (default 1/m each)")
    w.add_argument("--guess", type=_parse_guess)
    w.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    w.add_argument("--out", help="results JSON path")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NoConvergence, SingularJacobian, CollisionError, RankError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LPNBodyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

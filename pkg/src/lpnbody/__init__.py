"""Galilean-reduced n-body dynamics on invariant coordinates.

The state of an n-body system modulo translations, rotations and boosts is
described by mutual squared distances ``rho``, squared relative speeds
``nu``, position-velocity products ``sigma`` and antisymmetric cross
products ``delta``. These carry a linear (Lie-Poisson) bracket, and the
kinetic and potential parts of the Hamiltonian have exact flows on them,
which gives splitting integrators that conserve the Casimirs exactly.
"""

from .errors import (
    CollisionError,
    ExpansionError,
    LPNBodyError,
    NoConvergence,
    RankError,
    SingularJacobian,
)
from .integrator import (
    KV,
    SCHEMES,
    STRANG,
    VK,
    YOSHIDA4,
    SplitScheme,
    Trajectory,
    compose_scheme,
    flow_K,
    flow_V,
    integrate,
    scale_state,
    strang_step,
)
from .invariants import (
    FullState,
    MassSystem,
    ReducedState,
    angular_momentum_sq,
    gram_det,
    hamiltonian_rel,
    layout,
    project,
)
from .lie_poisson import (
    QuadraticForm,
    bracket,
    casimirs_numeric,
    compose,
    expand,
    structure_matrix,
    structure_matrix_closed,
    structure_matrix_general,
)
from .orbits import SymmetricSeed, find_orbit, monodromy, scaling_family, seed_to_state

__version__ = "0.1.0"

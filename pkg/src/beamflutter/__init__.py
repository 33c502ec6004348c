"""Flutter of a clamped-free extensible beam under piston-theoretic loading.

Library layout:

- ``model``     parameters, energies, cantilever modes, dispersion relation
- ``fem``       Hermite-cubic discretization and the static nonlinear solver
- ``modal``     eigenfunction-Galerkin oracle discretization
- ``integrate`` RK4 time stepping, trajectories, energy-identity diagnostic
- ``analysis``  stability classification, U_crit search, LCO metrics, sweeps
- ``cli``       batch front-end (configs, presets, CSV/manifest emission)
"""

from .model import (
    BC_NAIVE_LINEAR,
    BC_PHYSICAL,
    BeamConfig,
    EnergyPair,
    InitialCondition,
    cantilever_mode,
    check_energy_comparison,
    dispersion_omega,
    total_energy,
)
from .fem import (
    FemSpace,
    OperatorMatrices,
    assemble,
    assemble_gram,
    build_space,
    dump_matrix,
    nonlinear_force,
    static_solve,
)
from .modal import ModalBasis, build_modal_basis, modal_rhs
from .integrate import (
    SemidiscreteSystem,
    StateVector,
    Trajectory,
    energy_identity_residual,
    rk4_step,
    simulate,
    write_trajectory_csv,
)
from .analysis import (
    LcoMetrics,
    StabilityReport,
    classify,
    energy_max,
    find_critical_damping,
    find_ucrit,
    lco_extract,
    sweep,
)

__version__ = "0.1.0"

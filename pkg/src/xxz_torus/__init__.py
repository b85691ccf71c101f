"""Twisted-boundary ferromagnetic XXZ chain: spectra, Bethe roots, and the
closed-form energies that describe them at large N."""

from .model import (
    BetheRootSet,
    EnergyValue,
    ModelParams,
    excited_energy_formula,
    excited_string_seed,
    gap_formula,
    gap_limit,
    ground_energy_formula,
    ground_string_seed,
    ising_limit_excited,
    ising_limit_ground,
    periodic_ground_energy,
    string_deviations,
    twisted_boundary_energy,
    twisted_boundary_energy_limit,
)
from .exact_diag import (
    OperatorHandle,
    SpectrumResult,
    build_hamiltonian,
    dense_spectrum,
    iterative_lowest,
    low_cluster,
    lowest_eigenvalues,
    parity_check,
)
from .bae import (
    BaeResidual,
    SolveReport,
    bae_residual,
    energy_from_roots,
    multi_start_near_degenerate,
    solve,
)
from .integrability import (
    MonodromyMatrix,
    RMatrix,
    hamiltonian_identity_check,
    monodromy,
    r_matrix,
    rtt_residual,
    transfer_commutator,
    transfer_matrix,
)

__version__ = "0.1.0"

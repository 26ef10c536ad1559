"""Shadow-constrained variational reconstruction of 2-RDMs.

Pipeline: build or ingest an electronic Hamiltonian, solve full CI for the
target states, sample randomized orbital-rotation shadows of the exact
2-RDM, and reconstruct the 2-RDM by semidefinite programming under the
particle-particle / hole-hole / particle-hole positivity conditions plus
the shadow constraints.
"""

from .fci import (
    CIState,
    DeterminantBasis,
    DeterminantSpaceError,
    EigensolverError,
    select_singlets,
    solve_fci,
)
from .fcidump import FcidumpError, parse_fcidump, read_fcidump_file, write_fcidump, write_fcidump_file
from .hamiltonians import (
    GeometryHChain,
    Hamiltonian,
    HamiltonianError,
    ScfConvergenceError,
    build_h_chain,
)
from .rdms import (
    HoleRDM,
    OneRDM,
    ParticleHoleRDM,
    RdmError,
    TwoRDM,
    compute_2rdm,
    energy_from_rdm,
    frobenius_error,
    map_D_to_G,
    map_D_to_Q,
    natural_occupations,
    one_rdm_from_two,
    von_neumann_entropy,
)
from .sdp import (
    ConvergenceRecord,
    ProblemTooLargeError,
    SDPProblem,
    SDPSolution,
    SdpError,
    SolverOptions,
    SweepResult,
    assemble,
    convergence_sweep,
    solve,
    suggest_epsilon,
)
from .shadows import (
    OrbitalRotation,
    Shadow,
    ShadowError,
    measure_shadow,
    rotate_2rdm,
    sample_rotation,
    sample_shadows,
    shadow_constraint_rows,
    shadows_from_json,
    shadows_to_json,
)

__version__ = "0.1.0"

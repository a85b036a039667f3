"""Set-oriented analysis of 2-D incompressible flows.

The package approximates the transfer operator of a parameter-dependent
planar flow by a sparse row-stochastic matrix over a box grid, reversibilizes
the resulting Markov chain, extracts almost-invariant sets from the sign
structure of the dominant eigenvectors, and tracks eigenvalue branches across
parameter sweeps to detect and pre-signal the splitting of those sets.

Typical pipeline::

    field -> FlowMap -> BoxPartition -> build_ulam -> strip_sink
          -> reversibilize -> dominant_spectrum -> sign_partition
          -> run_sweep -> detect_crossings / classify_signature
"""

from .errors import (
    AssemblyError,
    ConfigError,
    ConvergenceError,
    DegeneracyError,
    DomainError,
    IntegrationError,
    NumericsError,
    PartitionError,
    ToolkitError,
)
from .dynamics import (
    DEFAULT_DOMAINS,
    DEFAULT_DOMINANT_COUNT,
    FlowMap,
    VectorField,
    divergence,
    double_gyre_stream,
    duffing_hamiltonian,
    eval_field,
    integrate,
    make_field,
    register_field,
)
from .partition import SINK, BoxPartition, SamplePlan, build_partition, sample_points
from .markov import (
    ReversibleChain,
    StationaryDistribution,
    StochasticMatrix,
    conditional_transition,
    invariance_ratio,
    reversibilize,
    stationary,
    weighted_inner,
)
from .ulam import StrippedChain, UlamBuild, UlamConfig, build_ulam, strip_sink
from .spectral import (
    DENSE_EIGH_LIMIT,
    LabeledPartition,
    MatchResult,
    SpectralSet,
    dominant_spectrum,
    localization_score,
    match_eigenpairs,
    reflection_score,
    sign_partition,
    symmetry_adapt,
    truncate_states,
)
from .toychains import (
    BlockChainSpec,
    MorphFamily,
    build_block_chain,
    morph_snapshot,
    perturb_chain,
)
from .bifurcation import (
    CrossingEvent,
    EigenCurve,
    RegionSpec,
    SignatureReport,
    StepSummary,
    SweepConfig,
    SweepResult,
    UlamSource,
    check_dominance_constraint,
    classify_signature,
    detect_crossings,
    morph_reversible_chain,
    run_sweep,
    spectrum_dominance,
    ulam_reversible_chain,
    uniform_weight,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

"""Min-entropy certification for dimension-bounded prepare-and-measure devices."""

__version__ = "0.1.0"

from .scenario import (
    GenerationSet,
    Scenario,
    ScenarioError,
    binarize,
    default_generation_set,
    eval_T,
    make_qrac_scenario,
)
from .strategy import (
    ClassicalStrategy,
    Strategy,
    behavior_of,
    classical_optimum,
    eigenvector_attack_strategy,
    guessing_probability,
    ideal_qrac_strategy,
    seesaw_attack,
    seesaw_max_T,
)
from .certifier import (
    EntropyBound,
    MomentBasis,
    bound_assignment,
    build_moment_basis,
    certify,
    critical_T,
    entropy_curve,
    min_entropy,
)
from .ingest import CountsTable, estimate_behavior, estimate_T, parse_counts
from .protocol_sim import ProtocolConfig, noisy_strategy, simulate_rounds

"""Compile single-agent, tree-structured agent-based models into chain event
graphs and score their stagings with conjugate Dirichlet inference."""

from importlib import resources

from .abm_spec import (
    AbmError, AbmSpec, AbmValidationError, Condition, clause_for, dump_abm, load_abm, parse_abm,
    validate_partition,
)
from .ceg import Ceg, Position, build_ceg, compute_positions, export_dot
from .event_tree import EventTree, build_tree, context_of, floret
from .inference import (
    DataError, PriorConfig, StagePosterior, TrajectoryDataset, allocate_priors, compare_models,
    count_stage_outcomes, log_marginal_likelihood, posterior_update,
)
from .simulate import SimConfig, empirical_check, simulate
from .staging import (
    StagedTree, derive_staging, enumerate_coarsenings, extract_independencies, saturated_staging,
)

__version__ = "0.1.0"


def example_path() -> str:
    """Filesystem path of the bundled migration example model."""
    return str(resources.files(__package__) / "data" / "example_migration.abm.json")

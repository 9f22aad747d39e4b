"""Differentially private isotonic regression over total orders and posets."""

from .core import (CapExceeded, Dataset, LossSpec, PiecewiseLinearFunction,
                   PrivacyParams, StepFunction, ValidationError, clip,
                   clipped_loss, custom_loss, l1_loss, l2sq_loss, risk,
                   total_risk)
from .isotonic import (BlockDecomposition, brute_force_isotonic, clip_solution,
                       isotonic_fit, prefix_clipped_isotonic, prefix_isotonic)
from .mechanism import (ScoredCandidates, exact_probabilities, sample,
                        utility_gap_bound)
from .total_order import RecursionState, fit_dp, stage_count, threshold_scores
from .posets import AntichainSet, Poset, enumerate_antichains
from .poset_fit import antichain_scores, fit_dp_poset
from .constrained import (StructuredInterval, constrained_opt, fit_dp_constrained,
                          partition_candidates)
from .baseline import (baseline_fit_poset, baseline_fit_total_order,
                       baseline_grid_choice)
from .generators import (decode_antichain_hard, decode_grid_hard,
                         gen_antichain_hard, gen_grid_hard, gen_packing_hard,
                         gen_random_monotone, packing_neighbors)
from .io import (read_dataset_csv, read_function_json, read_poset_json,
                 write_dataset_csv, write_function_json, write_poset_json)
from .bench import (AuditResult, ExperimentConfig, TrialResult, parse_config,
                    privacy_audit, run_experiment, threshold_events)

__all__ = [
    "CapExceeded", "Dataset", "LossSpec", "PiecewiseLinearFunction",
    "PrivacyParams", "StepFunction", "ValidationError", "clip", "clipped_loss",
    "custom_loss", "l1_loss", "l2sq_loss", "risk", "total_risk",
    "BlockDecomposition", "brute_force_isotonic", "clip_solution",
    "isotonic_fit", "prefix_clipped_isotonic", "prefix_isotonic",
    "ScoredCandidates", "exact_probabilities", "sample", "utility_gap_bound",
    "RecursionState", "fit_dp", "stage_count", "threshold_scores",
    "AntichainSet", "Poset", "enumerate_antichains",
    "antichain_scores", "fit_dp_poset",
    "StructuredInterval", "constrained_opt", "fit_dp_constrained",
    "partition_candidates",
    "baseline_fit_poset", "baseline_fit_total_order", "baseline_grid_choice",
    "decode_antichain_hard", "decode_grid_hard", "gen_antichain_hard",
    "gen_grid_hard", "gen_packing_hard", "gen_random_monotone",
    "packing_neighbors",
    "read_dataset_csv", "read_function_json", "read_poset_json",
    "write_dataset_csv", "write_function_json", "write_poset_json",
    "AuditResult", "ExperimentConfig", "TrialResult", "parse_config",
    "privacy_audit", "run_experiment", "threshold_events",
]

__version__ = "0.1.0"

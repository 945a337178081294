from ctvae.evaluation.accuracy import AccuracyReport, eval_causal_accuracy
from ctvae.evaluation.sequences import SequenceCurve, eval_repeated_actions
from ctvae.evaluation.exports import (
    apply_action_to_codes,
    export_intervention_grid,
    export_structure_maps,
    adjacency_diagonal_stats,
)

__all__ = [
    "AccuracyReport",
    "eval_causal_accuracy",
    "SequenceCurve",
    "eval_repeated_actions",
    "apply_action_to_codes",
    "export_intervention_grid",
    "export_structure_maps",
    "adjacency_diagonal_stats",
]

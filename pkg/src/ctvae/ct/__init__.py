from ctvae.ct.layer import (
    AttributionResult,
    CausalTransitionLayer,
    CtConfig,
    NoiseConfig,
    TransitionPrediction,
)
from ctvae.ct.structure import CausalGraphSample, bernoulli_straight_through
from ctvae.ct.regularizers import kl_graph, graph_regularizers
from ctvae.ct.positional import sinusoidal_positions

__all__ = [
    "AttributionResult",
    "CausalTransitionLayer",
    "CtConfig",
    "NoiseConfig",
    "TransitionPrediction",
    "CausalGraphSample",
    "bernoulli_straight_through",
    "kl_graph",
    "graph_regularizers",
    "sinusoidal_positions",
]

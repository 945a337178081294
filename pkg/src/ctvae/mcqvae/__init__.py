from ctvae.mcqvae.quantizer import CodeGrid, MultiCodebookQuantizer
from ctvae.mcqvae.model import Encoder, Decoder, McqVae, McqVaeConfig
from ctvae.mcqvae.losses import VqLossReport, vq_losses

__all__ = [
    "CodeGrid",
    "MultiCodebookQuantizer",
    "Encoder",
    "Decoder",
    "McqVae",
    "McqVaeConfig",
    "VqLossReport",
    "vq_losses",
]

"""Fingerprint presentation-attack detection at desk scale: a
depthwise-separable CNN feature extractor with a hinge-loss SVC head,
plus a synthetic corpus generator and an ISO-30107-style evaluation
stack (APCER/BPCER/ACE, DET curves)."""

__version__ = "0.1.0"

from .model import (LIVE, SPOOF, ModelConfig, Network, build_model, classify,
                    hinge_loss, load_checkpoint, normalize_scores,
                    save_checkpoint, toy_config)
from .nn import ConvKernel, CostReport, MacCounter, flop_cost, speedup_ratio
from .training import TrainConfig, encode_label, train

__all__ = [
    "LIVE", "SPOOF", "ModelConfig", "Network", "build_model", "classify",
    "hinge_loss", "load_checkpoint", "normalize_scores", "save_checkpoint",
    "toy_config", "ConvKernel", "CostReport", "MacCounter", "flop_cost",
    "speedup_ratio", "TrainConfig", "encode_label", "train", "__version__",
]

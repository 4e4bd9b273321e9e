"""Error exponents of randomised list decoding over discrete memoryless channels."""

__version__ = "0.1.0"

from .metrics import MetricKind, MetricSpec, eval_metric, metric_gap, parse_metric
from .probability import (Alphabet, Dist, Dmc, JointDist, TypeDist, binary_divergence, entropy,
                          enumerate_joint_types, kl, kl_to_channel, mutual_information,
                          quantize_to_type)

__all__ = [
    "Alphabet", "Dist", "Dmc", "JointDist", "MetricKind", "MetricSpec", "TypeDist",
    "binary_divergence", "entropy", "enumerate_joint_types", "eval_metric", "kl", "kl_to_channel",
    "metric_gap", "mutual_information", "parse_metric", "quantize_to_type",
]

"""Dual-stream RGB/TIR tracking with spatial + frequency-domain prompt
tuning on a frozen transformer encoder, at desk scale.

Library layout mirrors the pipeline: core numerics (tensor, ops, kernels),
Fourier prompt machinery (fourier, prompts), the frozen dual encoder and
its fusion block (encoder, mfpg), prediction and objective (head, loss),
and the surrounding tooling (training, tracker, data_synth, metrics, cli).
"""

__version__ = "0.1.0"

from .backend import active_backend  # noqa: F401
from .tensor import Param, Tensor, backward  # noqa: F401

"""From-scratch reverse-mode autodiff and transformer building blocks.

Everything runs on float64 numpy.  The hot paths are matmuls, which numpy
already hands to BLAS; the graph bookkeeping on top is cheap at the model
sizes this package trains.
"""

from .tensor import Tensor, concat
from .layers import (
    MLP,
    LayerNorm,
    Linear,
    MultiHeadSelfAttention,
    ParamStore,
    TransformerLayer,
    attention,
    causal_mask,
    positional_encoding,
    softmax,
)
from .optim import Adam, adam_step
from .gradcheck import gradcheck

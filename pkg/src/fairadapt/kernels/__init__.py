"""Sorting-network kernel backends.

The compiled Cython extension is used when it was built; otherwise the
numpy reference implementation takes over.  Set FAIRADAPT_PURE=1 to force
the reference backend (useful for benchmarking and debugging).  Both
backends implement the same three functions with identical semantics:

    soft_permutation(scores, beta)            -> (perm, smoothed)
    fused_forward(scores, beta, relevance, b) -> (w, rhat, ctx)
    fused_backward(ctx, grad_w, grad_rhat)    -> grad_scores
"""

import os

from . import reference

if os.environ.get("FAIRADAPT_PURE"):
    _impl = reference
    BACKEND = "python"
else:
    try:
        from . import _sortnet as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = reference
        BACKEND = "python"

soft_permutation = _impl.soft_permutation
fused_forward = _impl.fused_forward
fused_backward = _impl.fused_backward
layer_pairs = reference.layer_pairs

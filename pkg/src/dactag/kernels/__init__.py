"""Hot kernels: GRU scan (forward/BPTT) and linear-chain CRF dynamic programs.

The compiled Cython build is used when it imports; otherwise the numpy
reference takes over. Set ``DACTAG_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _reference as reference

compiled = None
if not os.environ.get("DACTAG_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

backend = compiled if compiled is not None else reference
BACKEND = backend.NAME

gru_scan_forward = backend.gru_scan_forward
gru_scan_backward = backend.gru_scan_backward
crf_forward = backend.crf_forward
crf_marginals = backend.crf_marginals
crf_viterbi = backend.crf_viterbi

__all__ = [
    "BACKEND",
    "backend",
    "compiled",
    "reference",
    "gru_scan_forward",
    "gru_scan_backward",
    "crf_forward",
    "crf_marginals",
    "crf_viterbi",
]

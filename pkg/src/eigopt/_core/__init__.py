"""Hot element-level kernels.

The compiled Cython module ``_kernels`` is used when it was built; otherwise
the numpy implementations in ``_fallback`` are selected.  Set the environment
variable ``EIGOPT_PURE_PYTHON=1`` to force the fallback.

``element_energies`` always uses the numpy version: its einsum reduces to a
BLAS product that beats the compiled loop (see benchmarks/bench_kernels.py).
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("EIGOPT_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

filter_triplets = _impl.filter_triplets
element_energies = _fallback.element_energies

__all__ = ["BACKEND", "filter_triplets", "element_energies"]

"""Hot kernels: compiled Cython core with a pure-Python fallback.

The compiled module is used when it has been built and
``SPIRALBW_PURE_PYTHON`` is not set to a truthy value.
"""
import os

from . import _fallback as fallback

compiled = None
if os.environ.get("SPIRALBW_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _compiled as compiled
    except ImportError:  # extension not built
        compiled = None

impl = compiled if compiled is not None else fallback
BACKEND = "compiled" if compiled is not None else "python"

poisson_sample = impl.poisson_sample
jacobi_eigh = impl.jacobi_eigh
overlap_sum = impl.overlap_sum
tomo_probabilities = impl.tomo_probabilities
tomo_nll = impl.tomo_nll
stream_key = impl.stream_key
uniform = impl.uniform
nelder_mead = impl.nelder_mead

__all__ = [
    "BACKEND",
    "compiled",
    "fallback",
    "impl",
    "jacobi_eigh",
    "nelder_mead",
    "overlap_sum",
    "poisson_sample",
    "stream_key",
    "tomo_nll",
    "tomo_probabilities",
    "uniform",
]

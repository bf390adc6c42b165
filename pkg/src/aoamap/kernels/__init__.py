"""Backend selection for the compiled kernels.

Set AOAMAP_BACKEND=numpy to force the pure-numpy kernels, AOAMAP_BACKEND=numba
to require the compiled ones (import error if numba is unavailable). By
default numba is used when importable, numpy otherwise. Both backends consume
identical RNG streams, so results agree across backends up to floating-point
association in the distance sums; grown trees agree bit-for-bit on data
without duplicated feature values.
"""

import os

_ENV_VAR = "AOAMAP_BACKEND"
_VALID = ("numba", "numpy")

_requested = os.environ.get(_ENV_VAR, "").strip().lower()
if _requested and _requested not in _VALID:
    raise ImportError(
        f"{_ENV_VAR} must be one of {', '.join(_VALID)}; got {_requested!r}"
    )

if _requested == "numpy":
    from . import numpy_backend as _impl

    BACKEND = "numpy"
else:
    try:
        from . import numba_backend as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import numpy_backend as _impl

        BACKEND = "numpy"

pairwise_mean_distance = _impl.pairwise_mean_distance
min_distances = _impl.min_distances
min_distances_excluding = _impl.min_distances_excluding
grow_forest = _impl.grow_forest
predict_trees = _impl.predict_trees
oob_permutation_mse = _impl.oob_permutation_mse


def set_threads(n_threads: int) -> int:
    """Cap the compiled backend's thread pool; no-op for the numpy backend.

    Returns the thread count actually in effect.
    """
    if n_threads < 1:
        raise ValueError(f"thread count must be >= 1, got {n_threads}")
    if BACKEND != "numba":
        return 1
    import numba

    effective = min(n_threads, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(effective)
    return effective


__all__ = [
    "BACKEND",
    "pairwise_mean_distance",
    "min_distances",
    "min_distances_excluding",
    "grow_forest",
    "predict_trees",
    "oob_permutation_mse",
    "set_threads",
]

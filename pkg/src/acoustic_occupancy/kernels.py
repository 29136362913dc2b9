"""Backend selection for the numerical hot loops.

The compiled Cython extension is used when it was built; otherwise the numpy
implementation takes over. Setting ``ACOUSTIC_OCCUPANCY_PURE_PYTHON=1``
forces the fallback, which is how the test-suite and the benchmark compare
the two.
"""

import os

from . import _kernels_py

_FORCE_PURE = os.environ.get("ACOUSTIC_OCCUPANCY_PURE_PYTHON", "").lower() in {"1", "true", "yes"}

_compiled = None
if not _FORCE_PURE:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py

#: Name of the active backend, ``"cython"`` or ``"python"``.
BACKEND = "cython" if _compiled is not None else "python"

viterbi_log = _impl.viterbi_log
forward_log = _impl.forward_log
backward_log = _impl.backward_log
gmm_log_joint = _impl.gmm_log_joint


def available_backends():
    """Return ``{name: module}`` for every backend importable in this process."""
    backends = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        backends["cython"] = _kernels
    return backends

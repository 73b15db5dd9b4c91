"""Numerical kernels with a compiled fast path.

The Cython extension ``_fast`` is used when it was built; otherwise the
pure-Python ``_pure`` module is used. Set ``FILIPPOV_PURE_PYTHON=1`` to
force the fallback.
"""

import os

from . import _pure
from ._errors import KernelError, NonFiniteStateError, StepUnderflowError

_backend = _pure
if os.environ.get("FILIPPOV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _fast as _backend  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _backend = _pure

BACKEND = "compiled" if _backend is not _pure else "pure"

jacobi_eigh = _backend.jacobi_eigh
sym_max_eig = _backend.sym_max_eig
mu1 = _backend.mu1
muinf = _backend.muinf
mu2 = _backend.mu2
norm1 = _backend.norm1
norminf = _backend.norminf
norm2 = _backend.norm2
ProgramSet = _backend.ProgramSet
FieldEvaluator = _backend.FieldEvaluator

MODE_PLUS = _pure.MODE_PLUS
MODE_MINUS = _pure.MODE_MINUS
MODE_SLIDING = _pure.MODE_SLIDING
MODE_REGULARIZED = _pure.MODE_REGULARIZED
PHI_SAT = _pure.PHI_SAT
PHI_CUBIC = _pure.PHI_CUBIC


def available_backends():
    """Backend modules importable in this environment, pure first."""
    out = {"pure": _pure}
    try:
        from . import _fast

        out["compiled"] = _fast
    except ImportError:
        pass
    return out


__all__ = [
    "BACKEND",
    "KernelError",
    "NonFiniteStateError",
    "StepUnderflowError",
    "available_backends",
    "jacobi_eigh",
    "sym_max_eig",
    "mu1",
    "muinf",
    "mu2",
    "norm1",
    "norminf",
    "norm2",
    "ProgramSet",
    "FieldEvaluator",
]

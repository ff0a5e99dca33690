"""Selection between the compiled step kernels and the pure-Python path.

The compiled extension accelerates the benchmark's small implicit solves
(the certified sweep performs on the order of a million of them).  It is
optional: every public result is also computable by the pure-Python code
in :mod:`phcosim.models` and :mod:`phcosim.coupling`, and the test suite
checks that both paths agree.

Selection happens once, at first use, from ``PHCOSIM_BACKEND``:

* ``auto`` (default): use the extension when importable;
* ``native``: require it, raise if the import fails;
* ``python``: never use it.
"""

from __future__ import annotations

import os

_ENV_VAR = "PHCOSIM_BACKEND"
_resolved = False
_kernels = None


def _resolve():
    global _resolved, _kernels
    if _resolved:
        return
    mode = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if mode not in ("auto", "native", "python"):
        raise ValueError(f"{_ENV_VAR} must be 'auto', 'native' or 'python', got {mode!r}")
    if mode == "python":
        _kernels = None
    else:
        try:
            from . import _kernels as mod
            _kernels = mod
        except ImportError:
            if mode == "native":
                raise ImportError(
                    "PHCOSIM_BACKEND=native but the compiled kernels are not "
                    "available; rebuild the package or use 'auto'/'python'"
                )
            _kernels = None
    _resolved = True


def get_kernels():
    """The compiled kernel module, or ``None`` for the pure-Python path."""
    _resolve()
    return _kernels


def backend_name() -> str:
    """'native' when the compiled kernels are active, else 'python'."""
    return "native" if get_kernels() is not None else "python"


def reset_backend_cache():
    """Forget the resolved backend (test hook; selection re-reads the env)."""
    global _resolved, _kernels
    _resolved = False
    _kernels = None

"""Build script: compiles the optional native kernel extension.

The package is fully functional without the extension (a pure-Python
fallback is selected at import time), so any failure to compile is
downgraded to a warning rather than aborting the install.
"""

import warnings

from setuptools import setup


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:  # pragma: no cover - build environment dependent
        warnings.warn(f"native kernels skipped ({exc}); pure-Python backend only")
        return []
    try:
        return cythonize(
            ["src/phcosim/_kernels.pyx"],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
            include_path=[numpy.get_include()],
        )
    except Exception as exc:  # pragma: no cover - build environment dependent
        warnings.warn(f"native kernels skipped ({exc}); pure-Python backend only")
        return []


def _include_dirs():
    try:
        import numpy

        return [numpy.get_include()]
    except ImportError:  # pragma: no cover
        return []


setup(ext_modules=_extensions(), include_dirs=_include_dirs())

"""Build script for the compiled reduction-kernel extension.

The extension is optional: when Cython is unavailable the package installs
without it and falls back to the pure-Python kernels at import time.
-ffp-contract=off keeps the compiler from fusing multiply-adds, so the
compiled kernels produce bit-identical results to the Python fallback.
"""

from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "iproj._kernels_cy",
                ["src/iproj/_kernels_cy.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)

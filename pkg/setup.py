"""Build hook for the optional compiled kernel core.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the extension is built only when Cython and the
numpy headers are available.  Set MRWS_NO_EXT=1 to force a pure build.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("MRWS_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "mrws._core._kernels",
                    ["src/mrws/_core/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

"""Build script for the compiled rasterization kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile degrades gracefully rather than blocking
installation.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "motiongs._kernels._rasterize",
        ["src/motiongs/_kernels/_rasterize.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))

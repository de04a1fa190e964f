"""Build script for the optional compiled kernel extension.

The package works without the extension: crtkit.kernels falls back to the
pure NumPy implementation when crtkit._kernels is not importable.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extension = Extension(
    "crtkit._kernels",
    ["src/crtkit/_kernels.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([extension], language_level=3))

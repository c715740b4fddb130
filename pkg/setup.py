import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("SATSTACK_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "satstack._kernels",
                    ["src/satstack/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # No Cython available: the package falls back to the numpy kernels
        # selected at import time in satstack.kernels.
        ext_modules = []

setup(ext_modules=ext_modules)

import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None and os.path.exists("src/reorient/env/_kernel_cy.pyx"):
    extensions = cythonize(
        [
            Extension(
                "reorient.env._kernel_cy",
                sources=["src/reorient/env/_kernel_cy.pyx"],
                include_dirs=[numpy.get_include()],
                # No -ffast-math / -march=native: the compiled lane must produce
                # the same IEEE-754 double sequence as the pure-Python lane.
                extra_compile_args=["-O2", "-ffp-contract=off", "-fno-builtin"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=extensions)

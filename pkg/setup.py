import os

import numpy as np
from setuptools import Extension, setup

PYX = "src/gridlock/solvers/_kernels.pyx"

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-Python install: the solvers fall back to the interpreted kernels.
    ext_modules = []
else:
    ext_modules = [] if not os.path.exists(PYX) else cythonize(
        [
            Extension(
                "gridlock.solvers._kernels",
                [PYX],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)

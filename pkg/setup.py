import os

import numpy as np
from setuptools import setup

ext_modules = []
PYX = "src/altsddip/_simplex_core.pyx"
if not os.environ.get("ALTSDDIP_NO_EXT") and os.path.exists(PYX):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "altsddip._simplex_core",
                    [PYX],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        # pure-Python kernel is used at import time
        ext_modules = []

setup(ext_modules=ext_modules)

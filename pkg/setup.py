import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MMCTOP_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # fall back to the numpy kernels at runtime
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "mmctop._kernels",
                    ["src/mmctop/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)

import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; _backend falls back to _core_py
    cythonize = None

# STABLEMV_PORTABLE=1 drops -march=native for redistributable wheels.
compile_args = ["-O3", "-ffast-math"]
if not os.environ.get("STABLEMV_PORTABLE"):
    compile_args.append("-march=native")

ext_modules = []
if cythonize is not None and not os.environ.get("STABLEMV_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "stablemv._core",
                ["src/stablemv/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=compile_args,
                extra_link_args=["-lmvec", "-lm"],
            )
        ],
        compiler_directives={"language_level": 3},
        quiet=True,
    )

setup(ext_modules=ext_modules)

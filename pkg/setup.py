import os

from setuptools import Extension, setup

# The compiled kernels are optional: the package falls back to the pure-NumPy
# implementation at import time if the extension is absent.  Set NHSLICE_NO_EXT=1
# to skip building it.
ext_modules = []
if os.environ.get("NHSLICE_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "nhslice._kernels._core",
                    ["src/nhslice/_kernels/_core.pyx"],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

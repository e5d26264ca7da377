"""Build script: compiles the optional Cython kernel extension.

Set TORUSLAB_NO_EXT=1 to force the pure-numpy backend (no compiler needed).
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("TORUSLAB_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "toruslab._kernels._impl_cy",
                    ["src/toruslab/_kernels/_impl_cy.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except Exception:
        ext_modules = []

setup(ext_modules=ext_modules)

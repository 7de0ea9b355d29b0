"""Builds the optional compiled kernels; the package falls back to numpy when absent."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("DUALMAPPER_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "dualmapper._kernels_cy",
                    ["src/dualmapper/_kernels_cy.pyx"],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    optional=True,
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)

"""Builds the optional compiled kernels; the package works without them."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("RSDQN_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension("rsdqn._sumtree", ["src/rsdqn/_sumtree.pyx"], extra_compile_args=["-O3"]),
                Extension("rsdqn._optim", ["src/rsdqn/_optim.pyx"], extra_compile_args=["-O3"]),
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

"""Build script for the optional compiled tree kernel.

The package works without the extension: ``nebsde._kernels`` falls back to a
pure-numpy twin when the compiled module is absent or when
``NEBSDE_PURE_PYTHON=1`` is set.
"""
from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # plain install without build toolchain
    numpy = None
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "nebsde._kernels._tree_cy",
                ["src/nebsde/_kernels/_tree_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)

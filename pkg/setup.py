"""Build script for the compiled statevector kernels.

The extension is optional: if it fails to build (or is absent at runtime),
qistack.emulator.kernels falls back to the pure-numpy implementation.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    import numpy

    ext_modules = cythonize(
        [
            Extension(
                "qistack.emulator._kernels_cy",
                ["src/qistack/emulator/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
        },
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)

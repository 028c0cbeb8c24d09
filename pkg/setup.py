"""Build the compiled MM-pass kernel.

Without Cython (or a C compiler) the package installs pure-Python and falls
back to ``ramec._mmpass_py`` at import time.
"""
from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ramec._mmpass",
                ["src/ramec/_mmpass.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)

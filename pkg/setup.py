"""Build script for the optional compiled slot-loop kernel.

The package works without the extension (a pure-Python twin is selected at
import time), so a failed compile only costs speed, not functionality.
"""
import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("RISBANDIT_PURE_PYTHON"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "risbandit._kernels",
        ["src/risbandit/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        library_dirs=[os.path.join(os.path.dirname(numpy.random.__file__), "lib")],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions())

"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure numpy fallback is selected
at import time), so a missing compiler or Cython only costs speed.
"""

from setuptools import setup

extensions = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "fedalign._kernels",
                sources=["src/fedalign/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
    )
except ImportError:
    pass

setup(ext_modules=extensions)

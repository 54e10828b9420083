"""Build script: compiles the optional sampling kernel extension.

The package works without the extension (a pure-Python kernel is selected at
import time), so the extension is marked optional and build failures are not
fatal.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "meetgist._kernel._ckernel",
                ["src/meetgist/_kernel/_ckernel.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level="3",
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)

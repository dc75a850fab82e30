import os

from setuptools import Extension, setup

# The compiled kernels are an optional speedup: if Cython or a C compiler is
# missing, the package installs anyway and falls back to the numpy kernels.
ext_modules = []
if os.environ.get("ZKNOCK_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "zknock._kernels_cy",
                    ["src/zknock/_kernels_cy.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)

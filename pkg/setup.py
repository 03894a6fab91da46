"""Build script: compiles the optional Cython hot-loop extension.

If Cython or a C compiler is unavailable the package installs pure-Python;
the sampler then uses the NumPy backend selected at import time.
"""

from setuptools import Extension, setup


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "paretodiff._speedups",
        ["src/paretodiff/_speedups.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=_extensions())

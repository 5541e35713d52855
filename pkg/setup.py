import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "bowreid._scan",
                ["src/bowreid/_scan.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-funroll-loops"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # pure-python fallback in bowreid.kernels covers the missing extension
    ext_modules = []

setup(ext_modules=ext_modules)

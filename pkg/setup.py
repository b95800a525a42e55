import numpy
from setuptools import setup
from setuptools.extension import Extension


def extensions():
    # The package works without the compiled core (numpy fallback at import),
    # so a missing Cython just skips the extension instead of failing.
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "ofcl._kernels._core",
        sources=["src/ofcl/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-funroll-loops"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions())

"""Build the optional compiled kernel; the package works without it."""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension('overlapctl._kernels', ['src/overlapctl/_kernels.pyx'],
                   include_dirs=[np.get_include()], extra_compile_args=['-O3'])],
        compiler_directives={'language_level': '3'},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)

"""Build script for the compiled integrator kernels.

The extension is optional: if Cython or a C compiler is unavailable the
package installs anyway and falls back to the pure-numpy kernels in
``shuttlekit._kernels.reference``.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext = Extension(
        "shuttlekit._kernels._fastpath",
        sources=["src/shuttlekit/_kernels/_fastpath.pyx"],
        include_dirs=[numpy.get_include()],
        # -ffp-contract=off keeps the C arithmetic bit-compatible with the
        # numpy fallback (no FMA contraction, even under -march=native).
        extra_compile_args=["-O3", "-march=native", "-ffp-contract=off", "-fopenmp"],
        extra_link_args=["-fopenmp"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext.optional = True
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)

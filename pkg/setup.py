# Builds the optional compiled kernel core. The package works without it
# (cxrnet.kernels falls back to the numpy implementations), so the extension
# is skipped rather than failing when Cython is unavailable.
#
# In-place build for development checkouts:
#   python3 setup.py build_ext --inplace

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "cxrnet.kernels._ext",
                ["src/cxrnet/kernels/_ext.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)

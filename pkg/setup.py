# Builds the optional compiled message-passing kernels. The package works
# without them (a numpy fallback is selected at import), so a failed extension
# build should not block installation:
#
#   pip install -e . --no-build-isolation
#   python setup.py build_ext --inplace   # force an in-place kernel build

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "pavegraph._kernels._ckernels",
                ["src/pavegraph/_kernels/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)

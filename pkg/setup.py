# Builds the compiled clique-enumeration kernels.  The package works without
# them (pure-Python fallback is selected at import), but the simulation
# pipelines are much faster with the extension.
import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

ext = Extension(
    "grainlab._fastkern",
    ["src/grainlab/_fastkern.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level=3))

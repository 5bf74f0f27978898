import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        f"catcoupon._core.{name}",
        [f"src/catcoupon/_core/{name}.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    for name in ("_tree_core", "_enet_core")
]

setup(ext_modules=cythonize(extensions, language_level=3))

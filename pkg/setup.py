from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "svlab.kernels._core",
        ["src/svlab/kernels/_core.pyx"],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))

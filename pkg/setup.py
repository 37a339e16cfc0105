"""Build the optional compiled contraction kernel.

If Cython or a C compiler is missing the package still installs and runs
on the numpy fallback.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "certopt._contract",
                ["src/certopt/_contract.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a missing Cython or C compiler degrades gracefully.
"""

from pathlib import Path

from setuptools import Extension, setup

ext_modules = []
pyx = Path(__file__).parent / "src" / "lvqkit" / "_ckernels.pyx"
if pyx.exists():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "lvqkit._ckernels",
                    [str(pyx.relative_to(Path(__file__).parent))],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )

setup(ext_modules=ext_modules)

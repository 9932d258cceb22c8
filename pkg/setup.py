from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("marketq._kernel", ["src/marketq/_kernel.pyx"])],
        language_level="3",
    )
except ImportError:
    # Cython unavailable: install pure-Python only, the engine falls back at import.
    ext_modules = []

setup(ext_modules=ext_modules)

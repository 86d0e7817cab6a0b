"""Build script for the optional compiled push kernel.

The package works without the extension (a pure-Python kernel is selected
at import time), so a failed Cython build degrades gracefully to a slower
but semantically identical implementation.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [Extension("pushnet._pushcore", ["src/pushnet/_pushcore.pyx"])],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)

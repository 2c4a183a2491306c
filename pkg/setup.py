"""Build the optional compiled kernel; the package still installs without it."""
import os

from setuptools import setup
from setuptools.command.build_ext import build_ext

ext_modules = []
if not os.environ.get("GAGA_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "gaga._ckernels",
                    ["src/gaga/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            print(f"warning: compiled kernel not built ({exc}); using the numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); using the numpy fallback")


setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})

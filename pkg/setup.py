import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


class optional_build_ext(build_ext):
    """Build the kernel if possible; the package falls back to pure Python."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"warning: compiled kernel not built ({exc}); using pure Python")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: {ext.name} not built ({exc}); using pure Python")


extensions = []
if cythonize is not None and not os.environ.get("QBVSCHED_NO_EXT"):
    try:
        extensions = cythonize(
            [Extension("qbvsched._gridsearch", ["src/qbvsched/_gridsearch.pyx"],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )
    except Exception as exc:
        print(f"warning: cythonize failed ({exc}); using pure Python")

setup(ext_modules=extensions, cmdclass={"build_ext": optional_build_ext})

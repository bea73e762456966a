import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        extdir = Path(self.get_ext_fullpath(ext.name)).parent.resolve()
        build_temp = Path(self.build_temp) / ext.name
        build_temp.mkdir(parents=True, exist_ok=True)
        config = "Debug" if self.debug else "Release"
        source = Path(__file__).parent.resolve()
        subprocess.run(
            [
                "cmake",
                "-S", str(source),
                "-B", str(build_temp),
                f"-DCMAKE_BUILD_TYPE={config}",
                f"-DCMAKE_LIBRARY_OUTPUT_DIRECTORY={extdir}",
                f"-DPYTHON_EXECUTABLE={sys.executable}",
                "-DMETASTRAT_PYTHON=ON",
            ],
            check=True,
        )
        subprocess.run(
            [
                "cmake",
                "--build", str(build_temp),
                "--target", "_metastrat",
                f"-j{os.cpu_count() or 2}",
            ],
            check=True,
        )


setup(
    ext_modules=[CMakeExtension("metastrat._metastrat")],
    cmdclass={"build_ext": CMakeBuild},
)

import shutil
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
        source_dir = Path(__file__).parent.resolve()
        build_dir = Path(self.build_temp) / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)
        subprocess.check_call(
            [
                "cmake",
                "-S", str(source_dir),
                "-B", str(build_dir),
                "-DCMAKE_BUILD_TYPE=Release",
                "-DR2UPP_BUILD_PYTHON=ON",
                f"-Dpybind11_DIR={self.pybind11_cmake_dir()}",
            ]
        )
        subprocess.check_call(["cmake", "--build", str(build_dir), "--target", "_core"])
        built = next(build_dir.glob("_core*.so"))
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, dest)

    @staticmethod
    def pybind11_cmake_dir():
        import pybind11

        return pybind11.get_cmake_dir()


setup(
    ext_modules=[CMakeExtension("r2upp._core")],
    cmdclass={"build_ext": CMakeBuild},
)

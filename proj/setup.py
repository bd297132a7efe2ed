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
        import pybind11

        source_dir = Path(__file__).parent.resolve()
        ext_path = Path(self.get_ext_fullpath(ext.name)).resolve()
        ext_path.parent.mkdir(parents=True, exist_ok=True)
        build_temp = Path(self.build_temp).resolve() / ext.name
        build_temp.mkdir(parents=True, exist_ok=True)

        subprocess.run(
            [
                "cmake",
                str(source_dir),
                "-DCMBPO_BUILD_PYTHON=ON",
                "-DCMAKE_BUILD_TYPE=Release",
                f"-DCMAKE_LIBRARY_OUTPUT_DIRECTORY={ext_path.parent}",
                f"-Dpybind11_DIR={pybind11.get_cmake_dir()}",
                f"-DPYTHON_EXECUTABLE={sys.executable}",
            ],
            cwd=build_temp,
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", ".", "--target", "_cmbpo"],
            cwd=build_temp,
            check=True,
        )


setup(
    ext_modules=[CMakeExtension("cmbpo._cmbpo")],
    cmdclass={"build_ext": CMakeBuild},
)

import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
compile_args = ["-O3", "-ffast-math"]
# HSS_SIM_PORTABLE=1 builds without host-specific instructions
if not os.environ.get("HSS_SIM_PORTABLE"):
    compile_args.append(os.environ.get("HSS_SIM_ARCH_FLAGS", "-march=native"))
if not os.environ.get("HSS_SIM_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "hss_sim.rl._ckernels",
                ["src/hss_sim/rl/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=compile_args,
                libraries=["mvec", "m"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

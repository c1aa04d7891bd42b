"""Smoke test for the eqg_py extension.

Builds the extension with cargo if needed, copies it next to this script and exercises
a handful of bindings. Exits 0 with a note when no toolchain or library is available.
"""

import cmath
import json
import shutil
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent


def locate_library():
    for name in ("libeqg_py.so", "libeqg_py.dylib", "eqg_py.dll"):
        lib = ROOT / "target" / "release" / name
        if lib.exists():
            return lib
    return None


def build():
    if shutil.which("cargo") is None:
        return None
    subprocess.run(["cargo", "build", "--release", "-p", "eqg-py"], cwd=ROOT, check=True)
    return locate_library()


def main():
    lib = locate_library() or build()
    if lib is None:
        print("SKIP: eqg_py library not built and cargo unavailable")
        return 0
    suffix = ".pyd" if lib.suffix == ".dll" else ".so"
    shutil.copy(lib, HERE / f"eqg_py{suffix}")
    sys.path.insert(0, str(HERE))
    import eqg_py

    params = eqg_py.Params()
    z = 0.21 + 0.05j
    t = eqg_py.theta(z, params)
    assert abs(eqg_py.theta(-z, params) + t) < 1e-12, "theta is odd"
    assert abs(eqg_py.theta(z + 1, params) + t) < 1e-12, "theta(z+1) = -theta(z)"
    shifted = eqg_py.theta(z + params.tau, params)
    factor = -cmath.exp(-1j * cmath.pi * params.tau - 2j * cmath.pi * z)
    assert abs(shifted - factor * t) < 1e-12 * (1 + abs(shifted))

    r = eqg_py.r_matrix(2, 0.3 + 0.1j, [0.1, -0.2], params)
    assert len(r) == 2 and len(r[0][0][0]) == 2
    assert eqg_py.dybe_residual(3, 0.3 + 0.1j, -0.2 + 0.05j, [0.1, 0.0, -0.15], params) < 1e-10

    terms = eqg_py.qchar(3, [2, 1, 0], "0")
    assert sum(c for _, c in terms) == 8

    assert eqg_py.tsystem(2, 1, 2, 1)

    report = json.loads(eqg_py.run_check(["dybe", "--N", "2", "--samples", "5"], seed=7))
    assert report["passed"] and report["seed"] == 7

    try:
        eqg_py.Params(tau=-1j)
    except ValueError:
        pass
    else:
        raise AssertionError("negative Im(tau) accepted")

    print(f"eqg_py {eqg_py.__version__}: smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())

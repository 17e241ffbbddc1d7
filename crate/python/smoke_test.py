"""Builds the extension with cargo, imports it from a scratch directory and exercises the API.

Usage: python3 python/smoke_test.py [--release]
"""

import json
import math
import os
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def build(release: bool) -> pathlib.Path:
    cmd = ["cargo", "build", "-p", "merotherm-py", "--features", "extension-module"]
    if release:
        cmd.append("--release")
    target = ROOT / "target" / "python"
    subprocess.run(cmd, cwd=ROOT, check=True, env={**os.environ, "CARGO_TARGET_DIR": str(target)})
    lib = target / ("release" if release else "debug") / "libmerotherm_py.so"
    if not lib.exists():
        sys.exit(f"extension not found at {lib}")
    return lib


def check(m) -> None:
    tan = m.MapSpec.tangent(0.5)
    assert tan.eval(0j) == 0j
    assert tan.eval(math.pi / 2) is None
    assert abs(m.chordal_distance(0j, 1 + 0j) - math.pi / 4) < 1e-15

    sq = m.MapSpec.monomial(2)
    for t, p, _ in m.pressure_curve(sq, [0.0, 0.5, 1.0, 1.5, 2.0]):
        assert abs(p - (1 - t) * math.log(2)) < 1e-6, (t, p)
    s, _ = m.poincare_exponent(sq)
    assert abs(s - 1) < 1e-3, s

    it = m.itinerary(tan, math.pi / 2, 8)
    assert it["terminator"] == "infinity" and it["symbols"] == [1], it

    try:
        m.itinerary(sq, 0.5 + 0j, 4)
    except m.HypothesisError:
        pass
    else:
        raise AssertionError("coding z^2 should be refused")

    with tempfile.TemporaryDirectory() as out:
        status = m.run("pressure", json.dumps({"map": json.loads(sq.to_json())}), out)
        assert status == 0
        lines = pathlib.Path(out, "pressure.csv").read_text().splitlines()
        assert lines[0] == "t,P,residual,depth,tail_bound_log" and len(lines) == 6
        assert json.loads(pathlib.Path(out, "manifest.json").read_text())["command"] == "pressure"


def main() -> None:
    lib = build("--release" in sys.argv)
    with tempfile.TemporaryDirectory() as tmp:
        shutil.copy(lib, pathlib.Path(tmp) / "merotherm_py.so")
        sys.path.insert(0, tmp)
        import merotherm_py

        check(merotherm_py)
        print(f"merotherm_py {merotherm_py.__version__}: smoke test passed")


if __name__ == "__main__":
    main()

"""Smoke test for the Python bindings.

Build first with `cargo build --release -p langevin-error-py`, then run
`python3 python/smoke_test.py`. Set LANGEVIN_ERROR_LIB to point at a
different shared library. Without a built library the installed
`langevin_error` package is used.
"""

import importlib.util
import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    lib = os.environ.get("LANGEVIN_ERROR_LIB")
    if lib is None:
        candidates = [ROOT / "target" / "release" / name for name in ("liblangevin_error_py.so", "liblangevin_error_py.dylib")]
        lib = next((c for c in candidates if c.exists()), None)
        if lib is None:
            try:
                import langevin_error
            except ImportError:
                sys.exit("shared library not found; run `cargo build --release -p langevin-error-py`")
            return langevin_error
    tmp = Path(tempfile.mkdtemp())
    target = tmp / "langevin_error.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("langevin_error", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    le = load()

    w = le.w2_sq([1.0], [[4.0]], [0.0], [[1.0]])
    assert math.isclose(w, 1.0 + (2.0 - 1.0) ** 2, rel_tol=1e-12), w

    b = le.expected_pipeline_error([1.0, 0.5], sigma=0.8, tau=1e-3, gamma=1e-2, n=1000)
    parts = b["term0"] + b["term_tau"] + b["term_tauN"] + b["term_N"]
    assert math.isclose(parts, b["total"], rel_tol=1e-12), b
    assert b["term_tauN"] < 0.0

    plus = le.expected_pipeline_error([1.0, 0.5], 0.8, 1e-3, 1e-2, 1000, tau_n_sign="plus")
    assert math.isclose(plus["term_tauN"], -b["term_tauN"], rel_tol=1e-12)

    try:
        le.expected_pipeline_error([1.0], 1.0, 5.0, 1e-2, 100)
    except ValueError as e:
        assert "stepsize" in str(e), e
    else:
        raise AssertionError("unstable tau accepted")

    grid = [0.05 * (100.0 ** (k / 39)) for k in range(40)]
    scan = le.sigma_scan([1.0, 0.5, 0.25], 1e-3, 1e-2, 1000, grid)
    assert scan["interior"], scan["grid_argmin"]
    assert 0.05 < scan["sigma_star"] < 5.0
    assert len(scan["rows"]) == 40

    assert math.isclose(le.tau_bound(1.0, 1.0), 1.0)

    report = json.loads(le.run_config('mode = "theory"\nspectrum = [1.0]\n'))
    assert report["tables"][0]["columns"][-1] == "total"

    print("python smoke test: ok")


if __name__ == "__main__":
    main()

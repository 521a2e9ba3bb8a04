"""Smoke test for the Python bindings.

    pip install --no-build-isolation -e crates/py
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys

import fcsched

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "fixtures")


def check(cond, what):
    if not cond:
        sys.exit(f"smoke test failed: {what}")
    print(f"ok  {what}")


def main():
    scene = fcsched.Scene(h_sg=86.0, d0=0.005 * 162.7, pfr_mw=50.1, disturbance_mw=37.0)
    nadir = scene.nadir()
    check(abs(nadir + 0.77) <= 0.02, f"closed-form nadir {nadir:.4f} Hz")
    trace = scene.simulate(dt=0.01, horizon=60.0)
    check(abs(trace.nadir_hz - nadir) < 0.01, "simulated nadir agrees")
    check(math.isclose(scene.rocof(), -37.0 / 172.0), "rocof")

    check(math.isclose(fcsched.xi(0.95), math.sqrt(19.0)), "cantelli multiplier")
    check(len(fcsched.pwl_coefficients()) == 8, "eight nadir pieces")

    case = fcsched.Case.load(os.path.join(FIXTURES, "six-bus.json"))
    check(case.diagnostics() == [], "six-bus case validates")
    scenarios = fcsched.Scenarios.load(os.path.join(FIXTURES, "six-bus-6x2.csv"), case)
    scenarios = scenarios.truncated(2)
    check(scenarios.horizon == 2 and scenarios.num_scenarios == 2, "scenarios truncated")

    model = fcsched.build(case, scenarios, mode="case-ii")
    check(model.num_binaries > 0, f"model with {model.num_binaries} binaries")
    check(model.conic_text().startswith("FCSCHED-CONIC 1"), "conic export")
    solution = model.solve(gap=1e-3)
    check(solution.status == "optimal", f"solve status {solution.status}")
    check(math.isclose(solution.costs()["total"], solution.objective, rel_tol=1e-6),
          f"objective {solution.objective:.1f}")
    again = fcsched.Solution.from_json(solution.to_json())
    check(json.loads(again.to_json()) == json.loads(solution.to_json()), "solution round trip")

    report = fcsched.certify(solution, case, scenarios)
    check(report.all_passed, f"certified {report.num_periods} periods")

    base = fcsched.build(case, scenarios, mode="base").solve(gap=1e-3)
    check(base.objective <= solution.objective * 1.001, "base is no dearer than case II")

    try:
        fcsched.certify(solution, case, scenarios, rule="worst")
    except ValueError:
        check(True, "bad rule rejected")
    else:
        check(False, "bad rule rejected")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Smoke test for the epipool_py extension module.

Builds nothing itself: run `cargo build -p epipool-py --release` first, then
`python3 python/smoke_test.py`. Locates the compiled cdylib under target/,
links it into a temp directory under the importable name, and exercises the
main entry points against known values.
"""

import json
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    candidates = [
        os.path.join(ROOT, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libepipool_py.so", "libepipool_py.dylib", "epipool_py.dll")
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        sys.exit("build the extension first: cargo build -p epipool-py --release")
    stage = tempfile.mkdtemp(prefix="epipool_py_")
    suffix = ".pyd" if built.endswith(".dll") else ".so"
    shutil.copy2(built, os.path.join(stage, "epipool_py" + suffix))
    sys.path.insert(0, stage)
    import epipool_py

    return epipool_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol * max(1.0, abs(a), abs(b)), f"{a} != {b}"


def main():
    ep = load_module()
    print(f"loaded epipool_py {ep.__version__}")

    # Static cost calculus against hand-checked values.
    approx(ep.dorfman_cost_per_person(11, 0.01), 1 / 11 + 1 - 0.99**11)
    approx(ep.quarantine_cost_per_person(2, 0.1, 1.3), 0.117)
    approx(ep.combined_cost_per_person(2, 0.1, 1.3, 2.0), 0.924)
    approx(ep.expected_infected_in_contaminated_group(2, 0.5), 4 / 3)
    approx(
        ep.quarantine_cost_brute_force(7, 0.03, 1.5),
        ep.quarantine_cost_per_person(7, 0.03, 1.5),
        tol=1e-12,
    )
    assert ep.optimal_group_size(0.01, 1000) == 11
    assert ep.optimal_group_size(0.01, 1000, a=1.3, alpha=2.0) < 11

    prev = ep.estimate_next_day_prevalence([2, 1, 1, 1], 0.012, 0.0004)
    approx(prev[0], 1 - 0.988**2 * 0.9996**3)

    # Horizon optimizer: known pipeline values and plan structure.
    series = ep.expected_pipeline(1000.0, 0.1, [4, 4, 4])
    approx(series[1], 656.1)
    assert abs(series[2] - 649.98) < 0.01
    plan = ep.optimize_backward(1000.0, 0.12, 20, 30)
    static = ep.static_plan(1000.0, 0.12, 20, 30)
    assert plan.group_sizes[-1] == static.group_sizes[0] == 4
    assert any(s != 4 for s in plan.group_sizes)
    assert plan.expected_total_tests < static.expected_total_tests
    small = ep.brute_force_horizon(1000.0, 0.12, 3, 12)
    assert small.group_sizes == ep.optimize_backward(1000.0, 0.12, 3, 12).group_sizes
    approx(
        ep.expected_total_tests(1000.0, 0.12, plan.group_sizes),
        plan.expected_total_tests,
    )

    # Non-adaptive pieces.
    assert ep.cca_budget(1000, 20.0, 0.02, "mu_log", 1.6) == 601
    assert ep.cca_budget(1000, 35.0, 0.035, "pn_log", 0.8) == 526
    assert ep.dd_decode([[1, 2], [2]], [True, False]) == [1]
    assert ep.dd_decode([[1, 2]], [True]) == []

    # A small simulation batch: valid summary, deterministic under the seed.
    config = {
        "model": {
            "type": "sbm",
            "n": 200,
            "community_size": 20,
            "q1": 0.012,
            "q2": 0.0004,
            "p_init": 0.05,
            "r": 0.1,
        },
        "protocol": {"type": "dorfman", "policy": "quarantine"},
        "horizon": 15,
        "trajectories": 20,
        "seed": 7,
    }
    summary = json.loads(ep.run_batch_json(json.dumps(config)))
    assert summary["n_traj"] == 20 and summary["seed"] == 7
    assert 0.0 <= summary["mean_final_infected_frac"] <= 1.0
    assert summary["q10"] <= summary["q50"] <= summary["q90"]
    again = json.loads(ep.run_batch_json(json.dumps(config)))
    assert summary == again, "same config and seed must reproduce bit-identically"

    trajectory = json.loads(ep.run_trajectory_json(json.dumps(config), 0))
    days = trajectory["days"]
    assert len(days) == 15 + 3  # day 0 plus horizon plus two trailing mornings
    assert all(d["cum_infected"] <= 200 for d in days)
    assert trajectory["audit"] == {
        "false_positive_isolations": 0,
        "late_detections": 0,
    }

    # Bad configs surface as ValueError.
    bad = dict(config, model={"type": "sbm", "n": 1000, "community_size": 30,
                              "q1": 0.012, "q2": 0.0004, "p_init": 0.02, "r": 0.1})
    try:
        ep.run_batch_json(json.dumps(bad))
    except ValueError as e:
        assert "divide" in str(e)
    else:
        sys.exit("expected a validation error for community_size = 30")

    print("smoke test passed")


if __name__ == "__main__":
    main()

"""Exact-model refereeing: feasibility reports, the eavesdropper scan,
baseline strategies and the uncertainty sweep."""

from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import clone_solution
from secrelay.evaluate import (
    STRATEGIES,
    baseline_pins,
    exact_secrecy_objective,
    feasibility_report,
    run_baseline,
    sweep_uncertainty,
    worst_case_eve_scan,
)
from secrelay.model import EveRegion, Position3, ground_range

FAMILIES = ("trajectory", "bandwidth", "uplink_rate", "reliability",
            "causality", "eve_qos", "power")


# ---------------------------------------------------------------------------
# feasibility report


def test_feasibility_report_accepts_solver_output(tiny, tiny_solution):
    rep = feasibility_report(tiny_solution, tiny)
    assert set(rep.residuals) == set(FAMILIES)
    assert rep.passed, rep.residuals
    name, value = rep.worst()
    assert name in FAMILIES and value <= rep.tolerance


def test_feasibility_report_tolerance_is_adjustable(tiny, tiny_solution):
    strict = feasibility_report(tiny_solution, tiny, tolerance=1e-30)
    assert not strict.passed  # solver output is never exactly on the surface


@pytest.mark.parametrize("family, corrupt", [
    ("trajectory", lambda sol, s: sol.q.__setitem__((2, 0),
                                                    sol.q[2, 0] + 2 * s.max_step_m)),
    ("trajectory", lambda sol, s: sol.q.__setitem__((slice(None), 2),
                                                    s.altitude_m + 1.0)),
    ("trajectory", lambda sol, s: sol.q.__setitem__((-1, 0), sol.q[-1, 0] + 5.0)),
    ("bandwidth", lambda sol, s: sol.b1.__setitem__(0, sol.b1[0]
                                                    + 0.1 * s.bandwidth_hz)),
    ("bandwidth", lambda sol, s: sol.b1.__setitem__(0, -0.01 * s.bandwidth_hz)),
    ("uplink_rate", lambda sol, s: sol.r_ub.__setitem__(0, 10 * s.bandwidth_hz)),
    ("reliability", lambda sol, s: sol.r_b.__setitem__(
        int(np.flatnonzero(sol.rho == 1)[0]), 10 * s.bandwidth_hz)),
    ("reliability", lambda sol, s: sol.r_e.__setitem__(
        int(np.flatnonzero(sol.rho == 0)[0]), 10 * s.bandwidth_hz)),
    ("eve_qos", lambda sol, s: sol.r_e.fill(0.0)),
    ("power", lambda sol, s: sol.p_a.__setitem__(0, 2.0 * s.p_alice_max)),
    ("power", lambda sol, s: sol.p_e.__setitem__(0, -0.01)),
])
def test_feasibility_report_flags_corruption(tiny, tiny_solution, family, corrupt):
    bad = clone_solution(tiny_solution)
    corrupt(bad, tiny)
    rep = feasibility_report(bad, tiny)
    assert not rep.passed
    assert rep.residuals[family] > rep.tolerance, rep.residuals


def test_feasibility_report_flags_causality(tiny, tiny_solution):
    bad = clone_solution(tiny_solution)
    i = int(np.flatnonzero(bad.rho == 1)[0])
    bad.r_b[i] += 10 * tiny.bandwidth_hz
    rep = feasibility_report(bad, tiny)
    assert rep.residuals["causality"] > rep.tolerance


# ---------------------------------------------------------------------------
# exact secrecy objective and the eavesdropper scan


def test_exact_secrecy_objective_matches_solution_total(tiny, tiny_solution):
    got = exact_secrecy_objective(tiny_solution, tiny)
    assert got == pytest.approx(tiny_solution.secrecy_total, rel=1e-9)
    assert got > 0.0

    service_only = clone_solution(tiny_solution)
    service_only.rho.fill(0)
    assert exact_secrecy_objective(service_only, tiny) == 0.0


def test_worst_case_eve_scan(tiny, tiny_solution):
    with pytest.raises(ValueError):
        worst_case_eve_scan(tiny_solution, tiny, grid_res=4)

    res = worst_case_eve_scan(tiny_solution, tiny)
    assert res.max_leakage > 0.0
    # the worst position lies inside the uncertainty disc
    c = tiny.eve.center
    assert math.hypot(res.argmax_xy[0] - c.x,
                      res.argmax_xy[1] - c.y) <= tiny.eve.radius * (1 + 1e-9)
    if res.bound_applies:
        assert res.max_leakage <= res.bound_total * (1 + 1e-9) + 1e-12


def test_worst_case_eve_scan_no_confidential_slots(tiny, tiny_solution):
    silent = clone_solution(tiny_solution)
    silent.p_b.fill(0.0)
    res = worst_case_eve_scan(silent, tiny)
    assert res.max_leakage == 0.0 and res.bound_total == 0.0


# ---------------------------------------------------------------------------
# baselines


def test_baseline_pins(tiny):
    assert baseline_pins(tiny, "joint") is None

    fb = baseline_pins(tiny, "fixed_bandwidth")
    assert fb.b1_hz == 0.5 * tiny.bandwidth_hz
    assert fb.bob_only is None and fb.eve_only is None

    ft = baseline_pins(tiny, "fixed_timeslot")
    assert ft.b1_hz is None
    assert np.all(ft.bob_only ^ ft.eve_only)       # disjoint, covering
    assert ft.bob_only[0] and ft.eve_only[1]

    with pytest.raises(ValueError, match="unknown strategy"):
        baseline_pins(tiny, "genie")


def test_run_baseline_fixed_bandwidth(tiny):
    sol = run_baseline(tiny, "fixed_bandwidth")
    assert sol.converged
    assert np.all(np.abs(sol.b1 - 0.5 * tiny.bandwidth_hz)
                  <= 1e-3 * tiny.bandwidth_hz)
    assert sol.eve_total >= tiny.eve_qos_target * (1 - 1e-4)
    assert feasibility_report(sol, tiny).passed


def test_run_baseline_fixed_timeslot(tiny):
    sol = run_baseline(tiny, "fixed_timeslot")
    assert sol.converged
    even = np.arange(tiny.n_slots) % 2 == 0
    assert np.all(sol.r_e[even] == 0.0)        # Bob-only slots serve no Eve
    assert np.all(sol.r_b[~even] == 0.0)       # Eve-only slots carry no data
    assert sol.eve_total >= tiny.eve_qos_target * (1 - 1e-4)
    assert feasibility_report(sol, tiny).passed


def test_strategies_tuple():
    assert STRATEGIES == ("joint", "fixed_bandwidth", "fixed_timeslot")


# ---------------------------------------------------------------------------
# uncertainty sweep


def test_sweep_uncertainty_grid(tiny):
    rows = []
    got = sweep_uncertainty(tiny, [150.0, 50.0],
                            strategies=("joint", "fixed_timeslot"),
                            progress=rows.append)
    assert rows == got
    assert len(got) == 4
    # rows are emitted per strategy with radii in ascending order
    assert [(r.strategy, r.eve_radius_m) for r in got] == [
        ("joint", 50.0), ("joint", 150.0),
        ("fixed_timeslot", 50.0), ("fixed_timeslot", 150.0)]
    by_key = {(r.strategy, r.eve_radius_m): r for r in got}
    for r in got:
        assert r.converged and r.status == "ok"
        assert r.eve_qos_target == tiny.eve_qos_target
        assert math.isfinite(r.secrecy_total)
        assert r.wall_time_s > 0.0
    # the joint design dominates the pinned strategy radius by radius
    for radius in (50.0, 150.0):
        assert by_key[("joint", radius)].secrecy_total >= \
            by_key[("fixed_timeslot", radius)].secrecy_total * (1 - 1e-6)


def test_sweep_uncertainty_records_infeasible_cells(scenario_factory):
    s = scenario_factory(eve_qos_target=1e12)
    rows = sweep_uncertainty(s, [100.0], strategies=("joint",))
    assert len(rows) == 1
    assert math.isnan(rows[0].secrecy_total)
    assert not rows[0].converged
    assert "unattainable" in rows[0].status

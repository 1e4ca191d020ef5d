"""Initialization, reference updates, the iteration driver and schedule
recovery on a small mission."""

from __future__ import annotations

import math

import numpy as np
import pytest

from secrelay.model import EveRegion, Position3, closer_to_bob, dist_sq, eve_distance_bounds
from secrelay.sca import (
    InfeasibleProblem,
    SolverOptions,
    _exact_complement,
    default_penalty_weight,
    init_iterate,
    recover_schedule,
    run_sca,
    update_fixed_points,
    update_penalty_state,
)
from secrelay.transform import BandwidthPins, SubproblemSolution


# ---------------------------------------------------------------------------
# options and penalty weight


def test_default_penalty_weight_formula(tiny):
    c_slot = tiny.bandwidth_hz * math.log1p(
        tiny.norm_gain * tiny.p_uav_max
        / (tiny.bandwidth_hz * tiny.altitude_m**2))
    assert default_penalty_weight(tiny) == pytest.approx(
        8.0 * c_slot / tiny.bandwidth_hz**2, rel=1e-12)


def test_solver_options_resolution(tiny):
    opts = SolverOptions()
    assert opts.resolve_lambda(tiny) == default_penalty_weight(tiny)
    assert opts.resolve_orthogonality_tol(tiny) == 1e-4 * tiny.bandwidth_hz**2
    assert opts.resolve_backend().name == "clarabel"

    custom = SolverOptions(lambda_init=3.5, orthogonality_tol=7.0)
    assert custom.resolve_lambda(tiny) == 3.5
    assert custom.resolve_orthogonality_tol(tiny) == 7.0


# ---------------------------------------------------------------------------
# initial iterate


def test_init_iterate_straight_line(tiny):
    it = init_iterate(tiny)
    n = tiny.n_slots
    start = tiny.uav_start.as_array()
    end = tiny.uav_end.as_array()

    assert it.q.shape == (n, 3)
    assert np.allclose(it.q[-1], end)
    assert np.all(it.q[:, 2] == tiny.altitude_m)
    steps = np.diff(np.vstack([start, it.q]), axis=0)
    assert np.linalg.norm(steps, axis=1).max() <= tiny.max_step_m * (1 + 1e-12)

    b = tiny.bandwidth_hz
    assert np.all(it.eta == it.tau)
    assert np.allclose(it.eta + it.tau, b - b / 3.0)
    assert np.all(it.alpha_a == math.sqrt(tiny.p_alice_max / 2.0))
    assert np.all(it.alpha_b == math.sqrt(tiny.p_uav_max / 2.0))

    for i in range(n):
        qi = Position3(*it.q[i])
        assert it.mu_a[i] == dist_sq(qi, tiny.alice_pos)
        assert it.mu_b[i] == dist_sq(qi, tiny.bob_pos)
        d_s, d_w = eve_distance_bounds(qi, tiny.eve)
        assert it.mu_e[i] == d_w
        assert it.theta[i] == it.alpha_b[i] ** 2 / d_s

    assert np.all(it.psi == 1.0)
    assert np.all(it.lam == default_penalty_weight(tiny))
    assert np.all(it.delta == 0.0)
    it.check(tiny)


def test_init_iterate_respects_pins(tiny):
    n = tiny.n_slots
    bob_only = np.arange(n) % 2 == 0
    pins = BandwidthPins(b1_hz=4e6, bob_only=bob_only)
    it = init_iterate(tiny, pins=pins)
    floor = 1e-9 * tiny.bandwidth_hz
    assert np.all(it.q[:, 2] == tiny.altitude_m)
    assert np.all(it.eta[bob_only] == tiny.bandwidth_hz - 4e6 - floor)
    assert np.all(it.tau[bob_only] == floor)
    assert np.all(it.eta[~bob_only] == it.tau[~bob_only])
    it.check(tiny)


def test_init_iterate_detour_bends_over_disc(tiny):
    line = init_iterate(tiny)
    detour = init_iterate(tiny, style="detour")
    assert not np.array_equal(line.q, detour.q)
    centre = tiny.eve.center.as_array()[:2]

    def closest(q):
        return np.min(np.linalg.norm(q[:, :2] - centre[None, :], axis=1))

    assert closest(detour.q) < closest(line.q)
    assert np.allclose(detour.q[-1], tiny.uav_end.as_array())
    start = tiny.uav_start.as_array()
    steps = np.diff(np.vstack([start, detour.q]), axis=0)
    assert np.linalg.norm(steps, axis=1).max() <= tiny.max_step_m * (1 + 1e-9)
    detour.check(tiny)


def test_init_iterate_detour_falls_back_when_unreachable(scenario_factory):
    # reach equals the straight span exactly, so any bend is too long
    s = scenario_factory(max_speed_mps=37.5)
    line = init_iterate(s)
    detour = init_iterate(s, style="detour")
    assert np.array_equal(line.q, detour.q)


def test_init_iterate_rejects_bad_input(scenario_factory, tiny):
    with pytest.raises(ValueError, match="invalid scenario"):
        init_iterate(scenario_factory(bandwidth_hz=-1.0))
    with pytest.raises(ValueError, match="style"):
        init_iterate(tiny, style="spiral")


# ---------------------------------------------------------------------------
# reference updates


def test_exact_complement_restores_exact_sums():
    rng = np.random.default_rng(55)
    total = 1e7
    for _ in range(1000):
        part = float(rng.uniform(0.0, total))
        p2, rest = _exact_complement(total, part)
        assert p2 + rest == total
        assert abs(p2 - part) <= 1e-6 * total


def test_update_fixed_points_clamps(tiny):
    it = init_iterate(tiny)
    n = tiny.n_slots
    b = tiny.bandwidth_hz
    q = np.array(it.q)
    q[:, 2] += 1e-7            # solver drift off the altitude plane
    q[-1, 0] += 3e-8
    sol = SubproblemSolution(
        status="optimal", objective=0.0, q=q,
        alpha_a=np.full(n, 2.0),           # above the sqrt(P_A) cap
        alpha_b=np.full(n, -0.1),          # below zero
        alpha_e=np.array(it.alpha_e),
        mu_a=np.zeros(n),                  # collapsed proxy
        mu_b=np.array(it.mu_b), mu_e=np.array(it.mu_e),
        theta=np.full(n, -1e-9),
        eta=np.full(n, 0.7 * b), tau=np.full(n, 0.7 * b))
    new = update_fixed_points(it, sol, tiny)
    assert np.all(new.q[:, 2] == tiny.altitude_m)
    assert new.q[-1, 0] == tiny.uav_end.x
    assert np.all(new.alpha_a == math.sqrt(tiny.p_alice_max))
    assert np.all(new.alpha_b == 0.0)
    assert np.all(new.mu_a == 1e-12)
    assert np.all(new.theta == 0.0)
    # overfull band split is rescaled onto the simplex
    assert np.all(new.eta + new.tau <= b * (1 + 1e-12))
    assert np.allclose(new.eta, new.tau)
    new.check(tiny)
    # psi and lambda are not touched by this update
    assert np.array_equal(new.psi, it.psi)
    assert np.array_equal(new.lam, it.lam)


def test_update_fixed_points_requires_usable(tiny):
    it = init_iterate(tiny)
    bad = SubproblemSolution(status="infeasible", objective=None)
    with pytest.raises(ValueError):
        update_fixed_points(it, bad, tiny)
    with pytest.raises(ValueError):
        update_penalty_state(it, bad, tiny)


def test_update_penalty_state_worked_example(tiny):
    it = init_iterate(tiny)
    n = tiny.n_slots
    it.delta = np.full(n, 2e-13)
    sol = SubproblemSolution(
        status="optimal", objective=0.0, q=np.array(it.q),
        eta=np.full(n, 4e6), tau=np.full(n, 1e6))
    new = update_penalty_state(it, sol, tiny)
    # AGM square at psi_old = 1: 0.5*((4e6)^2 + (1e6)^2) = 8.5e12
    assert np.all(new.lam == pytest.approx(it.lam + 2e-13 * 8.5e12, rel=1e-12))
    assert np.all(new.psi == 2.0)

    capped = update_penalty_state(it, sol, tiny, lam_cap=float(it.lam[0]))
    assert np.all(capped.lam == it.lam)


# ---------------------------------------------------------------------------
# full runs


def test_run_sca_converges_and_is_monotone(tiny, tiny_solution):
    sol = tiny_solution
    assert sol.converged and not sol.degraded
    assert sol.iterations == len(sol.records) <= 100
    assert all(r.phase == "main" for r in sol.records)
    objs = [r.surrogate_objective for r in sol.records]
    for a, b in zip(objs, objs[1:]):
        assert b >= a - 1e-6 * max(1.0, abs(a)), f"{a} -> {b}"
    assert sol.records[-1].max_orthogonality_gap <= 1e-4 * tiny.bandwidth_hz**2


def test_run_sca_schedule_invariants(tiny, tiny_solution):
    sol = tiny_solution
    n = tiny.n_slots
    b = tiny.bandwidth_hz

    assert sol.q.shape == (n, 3)
    assert np.all(sol.q[:, 2] == tiny.altitude_m)
    assert sol.q[-1, 0] == tiny.uav_end.x and sol.q[-1, 1] == tiny.uav_end.y
    steps = np.diff(np.vstack([tiny.uav_start.as_array(), sol.q]), axis=0)
    assert np.linalg.norm(steps, axis=1).max() <= tiny.max_step_m + 1e-6

    for i in range(n):
        assert float(sol.b1[i]) + float(sol.b2[i]) == b
    assert set(np.unique(sol.rho)) <= {0, 1}

    assert np.all(sol.p_a <= tiny.p_alice_max + 1e-9)
    assert np.all(sol.p_b + sol.p_e <= tiny.p_uav_max + 1e-9)
    assert np.all((sol.p_b >= 0) & (sol.p_e >= 0) & (sol.p_a >= 0))
    # off-branch and idle cleanup: rate and power are switched off together
    assert np.all((sol.r_b == 0.0) == (sol.p_b == 0.0))
    assert np.all((sol.r_e == 0.0) == (sol.p_e == 0.0))
    assert np.all(sol.r_b[sol.rho == 0] == 0.0)
    assert np.all(sol.r_e[sol.rho == 1] == 0.0)

    # information causality on both branches
    assert np.all(np.cumsum(sol.r_b) <= np.cumsum(sol.r_ub) + 1e-6 * b)
    assert np.all(np.cumsum(sol.r_e) <= np.cumsum(sol.r_ue) + 1e-6 * b)

    assert sol.eve_total >= tiny.eve_qos_target * (1 - 1e-4)
    assert sol.secrecy_total > 0.0

    # confidential slots are flown strictly closer to Bob than to any
    # possible Eve position
    for i in range(n):
        if sol.rho[i] == 1 and sol.r_b[i] > 0.0:
            assert closer_to_bob(Position3(*sol.q[i]), tiny.bob_pos, tiny.eve)

    it = sol.final_iterate
    assert it is not None
    it.check(tiny)


def test_run_sca_is_deterministic(tiny, tiny_solution):
    again = run_sca(tiny)
    assert np.array_equal(again.q, tiny_solution.q)
    assert np.array_equal(again.b1, tiny_solution.b1)
    assert np.array_equal(again.r_b, tiny_solution.r_b)
    assert again.secrecy_total == tiny_solution.secrecy_total


def test_run_sca_progress_callback(tiny):
    seen = []
    sol = run_sca(tiny, progress=seen.append)
    assert len(seen) == sol.iterations
    assert all(r.index == i + 1 for i, r in enumerate(seen))


def test_run_sca_warm_start(tiny, tiny_solution):
    warm = run_sca(tiny, init=tiny_solution.final_iterate)
    assert warm.converged
    assert warm.secrecy_total >= tiny_solution.secrecy_total * (1 - 1e-3)
    # the provided iterate must not be mutated by the run
    tiny_solution.final_iterate.check(tiny)


def test_run_sca_iteration_budget(tiny):
    sol = run_sca(tiny, SolverOptions(max_iters=2))
    assert not sol.converged
    assert sol.iterations == 2
    assert "max_iters" in sol.status


def test_run_sca_restores_feasibility(scenario_factory):
    """A service target the straight-line restriction cannot certify is
    reached by the restoration pre-phase, then optimized normally."""
    s = scenario_factory(eve=EveRegion(Position3(1500.0, 1400.0, 0.0), 100.0),
                         eve_qos_target=2e7)
    sol = run_sca(s)
    phases = [r.phase for r in sol.records]
    assert "restore" in phases and "main" in phases
    # restoration rounds come first and report the Eve rate in both columns
    k = phases.index("main")
    assert all(p == "restore" for p in phases[:k])
    for r in sol.records[:k]:
        assert r.surrogate_objective == r.exact_objective
    assert sol.converged
    assert sol.eve_total >= s.eve_qos_target * (1 - 1e-4)


def test_run_sca_unattainable_target(scenario_factory):
    s = scenario_factory(eve_qos_target=1e12)
    with pytest.raises(InfeasibleProblem, match="unattainable"):
        run_sca(s)


def test_recover_schedule_requires_usable(tiny):
    with pytest.raises(ValueError):
        recover_schedule(SubproblemSolution(status="infeasible", objective=None),
                         tiny)
    with pytest.raises(ValueError):
        recover_schedule(None, tiny)

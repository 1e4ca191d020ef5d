"""Shared fixtures: a small well conditioned mission that solves in well
under a second, plus a cached solve of it for tests that only inspect the
result."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from secrelay.model import EveRegion, Position3, Scenario
from secrelay.sca import Solution, run_sca


def build_scenario(**overrides) -> Scenario:
    """Eight-slot relay mission with the bundled reference mission's
    channel scaling, shrunk for fast solves.

    The straight start-to-end line passes close to the eavesdropper disc,
    so the service constraint is certifiable from the first restricted
    subproblem and the solve converges in a handful of rounds.
    """
    base = dict(
        alice_pos=Position3(0.0, 0.0, 0.0),
        bob_pos=Position3(2000.0, 0.0, 0.0),
        eve=EveRegion(Position3(1500.0, 400.0, 0.0), 100.0),
        uav_start=Position3(-500.0, 250.0, 100.0),
        uav_end=Position3(2500.0, 250.0, 100.0),
        altitude_m=100.0,
        flight_duration_s=80.0,
        slot_duration_s=10.0,
        n_slots=8,
        max_speed_mps=50.0,
        bandwidth_hz=1e7,
        gain_ref=1e-5,
        noise_psd=1e-18,
        p_alice_max=1.0,
        p_uav_max=0.5,
        eve_qos_target=2e6,
    )
    base.update(overrides)
    return Scenario(**base)


def clone_solution(sol: Solution) -> Solution:
    """Deep enough copy for tests that corrupt individual fields."""
    arrays = {f: np.array(getattr(sol, f))
              for f in ("q", "b1", "b2", "rho", "p_a", "p_b", "p_e",
                        "r_ub", "r_ue", "r_b", "r_e")}
    return dataclasses.replace(sol, **arrays)


@pytest.fixture(scope="session")
def tiny() -> Scenario:
    return build_scenario()


@pytest.fixture(scope="session")
def tiny_solution(tiny: Scenario) -> Solution:
    sol = run_sca(tiny)
    assert sol.converged, f"fixture solve did not converge: {sol.status}"
    return sol


@pytest.fixture()
def scenario_factory():
    return build_scenario

"""Successive convex restriction loop for the joint trajectory/resource
design, plus recovery of an operating schedule from the converged iterate.

Each round builds the penalised restriction around the current iterate
(transform.assemble_subproblem), solves it with a cone backend, moves the
reference point to the solution, and tightens the band-orthogonality
penalty weights. All surrogates are global bounds that are exact at the
reference, so with fixed penalty weights the restricted objective is
non-decreasing across rounds; the loop stops once its relative change
falls below epsilon and every slot's eta*tau product is within the
orthogonality tolerance.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import model
from .conic import AffExpr
from .model import BANDWIDTH_FLOOR_FRAC, Position3, Scenario
from .solvers import INFEASIBLE, NUMERICAL_FAILURE, make_backend
from .transform import (AMPLITUDE_TIE_BREAK, BandwidthPins, Iterate,
                        SubproblemSolution, agm_bound, assemble_subproblem,
                        extract_subproblem_solution)

# multiplier kappa in the default penalty weight kappa * C_slot / B^2;
# tuned on the bundled reference scenario
LAMBDA_KAPPA = 8.0
LAMBDA_CAP_FACTOR = 1e9

# feasibility restoration: round limit and stall threshold for the
# pre-phase that maximizes accumulated Eve rate until the service target
# is within reach of the restriction
RESTORE_MAX_ROUNDS = 40
RESTORE_STALL_REL = 1e-6

# branch rates below this fraction of the band are treated as switched off
# during schedule recovery (their slots carry no data, so no power either)
RATE_SNAP_FRAC = 1e-6


class InfeasibleProblem(RuntimeError):
    """The very first restriction is infeasible (e.g. unattainable Eve QoS)."""


class SolveFailure(RuntimeError):
    """The backend failed before any usable iterate existed."""


@dataclass
class SolverOptions:
    epsilon: float = 1e-4
    max_iters: int = 100
    lambda_init: float | None = None       # None: scale from the scenario
    delta_step: float = 0.0                # relative penalty ramp per round
    orthogonality_tol: float | None = None  # None: 1e-4 * B^2
    backend: object | None = None          # None: best available

    def resolve_lambda(self, s: Scenario) -> float:
        if self.lambda_init is not None:
            return float(self.lambda_init)
        return default_penalty_weight(s)

    def resolve_orthogonality_tol(self, s: Scenario) -> float:
        if self.orthogonality_tol is not None:
            return float(self.orthogonality_tol)
        return 1e-4 * s.bandwidth_hz ** 2

    def resolve_backend(self):
        return self.backend if self.backend is not None else make_backend()


def default_penalty_weight(s: Scenario) -> float:
    """Penalty weight that balances the AGM term against the rate objective.

    C_slot = B*ln(1 + gamma*P_U/(B*H^2)) estimates one slot's rate scale;
    the AGM square at the symmetric start is of order B^2, so
    lambda = kappa * C_slot / B^2 puts the two within a factor kappa.
    """
    c_slot = s.bandwidth_hz * math.log1p(
        s.norm_gain * s.p_uav_max / (s.bandwidth_hz * s.altitude_m ** 2))
    return LAMBDA_KAPPA * c_slot / s.bandwidth_hz ** 2


@dataclass(frozen=True)
class IterationRecord:
    """One solver round. phase is "main" for the penalised secrecy rounds
    and "restore" for feasibility-restoration rounds, whose objective
    columns hold the accumulated Eve rate being maximized instead."""

    index: int
    surrogate_objective: float      # penalised restricted objective, nat/s
    exact_objective: float          # simplified exact objective at the point
    max_orthogonality_gap: float    # max_n eta_n * tau_n, Hz^2
    max_step_m: float               # largest reference-point move this round
    backend_status: str
    solver_iterations: int
    wall_time_s: float
    phase: str = "main"


@dataclass
class Solution:
    """Recovered operating schedule, SI units, slots indexed 0..N-1."""

    q: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    rho: np.ndarray
    p_a: np.ndarray
    p_b: np.ndarray
    p_e: np.ndarray
    r_ub: np.ndarray
    r_ue: np.ndarray
    r_b: np.ndarray
    r_e: np.ndarray
    secrecy_total: float = 0.0
    eve_total: float = 0.0
    converged: bool = False
    degraded: bool = False
    status: str = ""
    iterations: int = 0
    records: list[IterationRecord] = field(default_factory=list)
    final_iterate: Iterate | None = None   # reference set after the last round


def _detour_path(s: Scenario) -> np.ndarray | None:
    """Bent flight path s_I -> over the disc centre -> s_F at uniform
    spacing, or None when the bend does not fit the step budget."""
    n = s.n_slots
    start = s.uav_start.as_array().copy()
    end = s.uav_end.as_array().copy()
    mid = s.eve.center.as_array().copy()
    mid[2] = s.altitude_m
    start[2] = end[2] = s.altitude_m
    len1 = float(np.linalg.norm(mid - start))
    len2 = float(np.linalg.norm(end - mid))
    total = len1 + len2
    if total > n * s.max_step_m * (1.0 - 1e-12) or total == 0.0:
        return None
    arc = total * np.arange(1, n + 1) / n
    q = np.empty((n, 3))
    for i, a in enumerate(arc):
        if a <= len1 and len1 > 0.0:
            q[i] = start + (a / len1) * (mid - start)
        else:
            t = 0.0 if len2 == 0.0 else (a - len1) / len2
            q[i] = mid + t * (end - mid)
    q[:, 2] = s.altitude_m
    return q


def init_iterate(s: Scenario, options: SolverOptions | None = None,
                 pins: BandwidthPins | None = None,
                 style: str = "line") -> Iterate:
    """Feasible-geometry starting point: straight-line flight, symmetric
    band split (subject to pins), half-power transmitters, exact distance
    proxies so every surrogate starts tight.

    style "detour" bends the initial path over the eavesdropper disc centre
    (falling back to the straight line when the bend exceeds the reachable
    arc length); useful as an alternative basin anchor for multistarts.
    """
    violations = model.validate_scenario(s)
    if violations:
        raise ValueError("invalid scenario: " + "; ".join(str(v) for v in violations))
    if style not in ("line", "detour"):
        raise ValueError(f"unknown init style {style!r}")
    options = options or SolverOptions()
    n = s.n_slots
    start = s.uav_start.as_array()
    end = s.uav_end.as_array()
    frac = (np.arange(1, n + 1) / n)[:, None]
    q = start[None, :] + frac * (end - start)[None, :]
    q[:, 2] = s.altitude_m
    if style == "detour":
        q_bent = _detour_path(s)
        if q_bent is not None:
            q = q_bent

    b = s.bandwidth_hz
    floor = BANDWIDTH_FLOOR_FRAC * b
    b1 = np.full(n, (pins.b1_hz if pins is not None and pins.b1_hz is not None
                     else b / 3.0))
    eta = np.empty(n)
    tau = np.empty(n)
    bob_mask = (np.asarray(pins.bob_only, dtype=bool)
                if pins is not None and pins.bob_only is not None
                else np.zeros(n, dtype=bool))
    eve_mask = (np.asarray(pins.eve_only, dtype=bool)
                if pins is not None and pins.eve_only is not None
                else np.zeros(n, dtype=bool))
    for i in range(n):
        rest = b - b1[i]
        if bob_mask[i]:
            tau[i] = floor
            eta[i] = rest - floor
        elif eve_mask[i]:
            eta[i] = floor
            tau[i] = rest - floor
        else:
            eta[i] = tau[i] = rest / 2.0

    alpha_a = np.full(n, math.sqrt(s.p_alice_max / 2.0))
    alpha_b = np.full(n, math.sqrt(s.p_uav_max / 2.0))
    alpha_e = np.full(n, math.sqrt(s.p_uav_max / 2.0))

    mu_a = np.empty(n)
    mu_b = np.empty(n)
    mu_e = np.empty(n)
    theta = np.empty(n)
    for i in range(n):
        qi = Position3(q[i, 0], q[i, 1], q[i, 2])
        mu_a[i] = model.dist_sq(qi, s.alice_pos)
        mu_b[i] = model.dist_sq(qi, s.bob_pos)
        d_s, d_w = model.eve_distance_bounds(qi, s.eve)
        mu_e[i] = d_w
        theta[i] = alpha_b[i] ** 2 / d_s

    lam0 = options.resolve_lambda(s)
    lam = np.full(n, lam0)
    delta = np.full(n, options.delta_step * lam0 / b ** 2)
    return Iterate(q, alpha_a, alpha_b, alpha_e, mu_a, mu_b, mu_e,
                   theta, eta, tau, np.ones(n), lam, delta)


def solve_subproblem(prog, backend, n_slots: int) -> SubproblemSolution:
    raw = backend.solve(prog)
    return extract_subproblem_solution(prog, raw, n_slots)


def _snap_trajectory(q: np.ndarray, s: Scenario) -> np.ndarray:
    """Remove sub-tolerance solver drift on rows the model pins exactly."""
    q = np.array(q, dtype=float, copy=True)
    q[:, 2] = s.altitude_m
    q[-1, 0] = s.uav_end.x
    q[-1, 1] = s.uav_end.y
    return q


def update_fixed_points(it: Iterate, sol: SubproblemSolution,
                        s: Scenario) -> Iterate:
    """Move the reference point to the last solution (with clamps that keep
    the next restriction well-posed); psi/lambda are left untouched."""
    if not sol.usable:
        raise ValueError(f"cannot update iterate from a {sol.status} solve")
    new = it.copy()
    new.q = _snap_trajectory(sol.q, s)
    cap_a = math.sqrt(s.p_alice_max)
    cap_u = math.sqrt(s.p_uav_max)
    new.alpha_a = np.clip(sol.alpha_a, 0.0, cap_a)
    new.alpha_b = np.clip(sol.alpha_b, 0.0, cap_u)
    new.alpha_e = np.clip(sol.alpha_e, 0.0, cap_u)
    tiny = 1e-12
    new.mu_a = np.maximum(sol.mu_a, tiny)
    new.mu_b = np.maximum(sol.mu_b, tiny)
    new.mu_e = np.maximum(sol.mu_e, tiny)
    new.theta = np.maximum(sol.theta, 0.0)
    floor = BANDWIDTH_FLOOR_FRAC * s.bandwidth_hz
    new.eta = np.clip(sol.eta, floor, s.bandwidth_hz)
    new.tau = np.clip(sol.tau, floor, s.bandwidth_hz)
    over = (new.eta + new.tau) / s.bandwidth_hz
    mask = over > 1.0
    if np.any(mask):
        new.eta[mask] /= over[mask]
        new.tau[mask] /= over[mask]
    return new


def update_penalty_state(it: Iterate, sol: SubproblemSolution,
                         s: Scenario, lam_cap: float | None = None) -> Iterate:
    """Penalty ramp and AGM weight refresh, in that order: lambda grows by
    delta times the current AGM square evaluated with the pre-update psi,
    then psi is re-centred so the AGM bound is tight at the new point."""
    if not sol.usable:
        raise ValueError(f"cannot update penalties from a {sol.status} solve")
    new = it.copy()
    floor = BANDWIDTH_FLOOR_FRAC * s.bandwidth_hz
    eta = np.maximum(sol.eta, floor)
    tau = np.maximum(sol.tau, floor)
    gaps = np.array([agm_bound(eta[i], tau[i], it.psi[i])
                     for i in range(it.n_slots())])
    new.lam = it.lam + it.delta * gaps
    if lam_cap is not None:
        new.lam = np.minimum(new.lam, lam_cap)
    new.psi = np.sqrt(eta / tau)
    return new


def _exact_simplified_objective(sol: SubproblemSolution, s: Scenario) -> float:
    """Simplified exact objective sum R_b - eta*ln(1+gamma*p_b/(eta*d_s))
    evaluated at the solve's own trajectory and powers."""
    total = 0.0
    for i in range(len(sol.r_b)):
        qi = Position3(sol.q[i, 0], sol.q[i, 1], sol.q[i, 2])
        d_s, _ = model.eve_distance_bounds(qi, s.eve)
        tap = model.perspective_rate(float(sol.eta[i]), float(sol.alpha_b[i]) ** 2,
                                     d_s, s.norm_gain)
        total += float(sol.r_b[i]) - tap
    return total


def _restore_feasibility(s: Scenario, it: Iterate, pins, backend,
                         records: list[IterationRecord], progress) -> Iterate:
    """Pre-phase for a service target the first restriction cannot certify:
    maximize the accumulated Eve rate (same constraint set, vacuous target)
    and re-expand until the target is within the restriction's reach.

    The restricted maximum is non-decreasing across rounds for the same
    reason the main objective is, so a stall below the target is solid
    evidence the target is unattainable, and InfeasibleProblem is raised.
    """
    relaxed = dataclasses.replace(s, eve_qos_target=0.0)
    # slots whose Eve share is pinned to the floor contribute O(1) nat/s at
    # most; keeping their near-degenerate cone rows out of the objective
    # avoids driving the solver onto a badly scaled face
    skip = pins.bob_only if pins is not None and pins.bob_only is not None \
        else np.zeros(s.n_slots, dtype=bool)
    b0 = s.bandwidth_hz
    achieved_prev: float | None = None
    for r in range(1, RESTORE_MAX_ROUNDS + 1):
        prog = assemble_subproblem(relaxed, it, pins)
        # keep the penalty and least-power anchors from the main objective;
        # without them the maximizer wanders over flat degenerate faces and
        # the interior-point method loses progress
        obj = AffExpr.zero()
        for i in range(s.n_slots):
            if not skip[i]:
                obj = obj + prog.var(f"r_e[{i}]")
            obj = obj - (float(it.lam[i]) * b0) * prog.var(f"pen[{i}]")
            obj = obj - AMPLITUDE_TIE_BREAK * (
                prog.var(f"alpha_a[{i}]") + prog.var(f"alpha_b[{i}]")
                + prog.var(f"alpha_e[{i}]"))
        prog.set_objective(obj)
        sol = solve_subproblem(prog, backend, s.n_slots)
        if not sol.usable:
            raise SolveFailure(
                f"backend failed during feasibility restoration: "
                f"{sol.status} {sol.detail}")
        achieved = float(np.sum(sol.r_e))
        rec = IterationRecord(r, achieved, achieved,
                              float(np.max(sol.eta * sol.tau)),
                              float(np.max(np.linalg.norm(sol.q - it.q, axis=1))),
                              sol.status, sol.solver_iterations,
                              sol.solve_time_s, phase="restore")
        records.append(rec)
        if progress is not None:
            progress(rec)
        it = update_fixed_points(it, sol, s)
        it = update_penalty_state(it, sol, s)
        if achieved >= s.eve_qos_target:
            return it
        if achieved_prev is not None and \
                achieved <= achieved_prev * (1.0 + RESTORE_STALL_REL):
            break
        achieved_prev = achieved
    raise InfeasibleProblem(
        "the Eve service target is unattainable for this geometry: "
        f"restoration plateaued at {achieved:.6g} nat/s "
        f"< target {s.eve_qos_target:.6g} nat/s")


def run_sca(s: Scenario, options: SolverOptions | None = None,
            pins: BandwidthPins | None = None,
            progress=None, init: Iterate | None = None) -> Solution:
    """Full pipeline: initialize, iterate restrictions to convergence,
    recover a schedule.

    init overrides the default starting reference set (warm start, e.g.
    continuation along a parameter sweep); it is copied, never mutated.

    Raises InfeasibleProblem / SolveFailure if the first round already
    fails beyond repair; later failures degrade to the best iterate found
    so far.
    """
    options = options or SolverOptions()
    backend = options.resolve_backend()
    orth_tol = options.resolve_orthogonality_tol(s)
    lam_cap = LAMBDA_CAP_FACTOR * options.resolve_lambda(s)

    it = init.copy() if init is not None else init_iterate(s, options, pins)
    records: list[IterationRecord] = []
    best: SubproblemSolution | None = None
    prev_obj: float | None = None
    converged = False
    degraded = False
    note = ""

    for r in range(1, options.max_iters + 1):
        prog = assemble_subproblem(s, it, pins)
        sol = solve_subproblem(prog, backend, s.n_slots)
        if not sol.usable and sol.status == INFEASIBLE and best is None \
                and not records:
            # the pinned start is too conservative for the service target;
            # walk the iterate toward Eve first, then restart the main loop
            it = _restore_feasibility(s, it, pins, backend, records, progress)
            prog = assemble_subproblem(s, it, pins)
            sol = solve_subproblem(prog, backend, s.n_slots)
        if not sol.usable:
            if best is None:
                if sol.status == INFEASIBLE:
                    where = ("after feasibility restoration" if records
                             else "at initialization")
                    raise InfeasibleProblem(
                        f"restriction infeasible {where}; the Eve service "
                        "target is likely unattainable for this geometry "
                        f"({sol.detail})")
                raise SolveFailure(f"backend failed at round 1: {sol.status} "
                                   f"{sol.detail}")
            degraded = True
            note = f"round {r}: {sol.status} ({sol.detail}); kept round {r-1}"
            break

        gap = float(np.max(sol.eta * sol.tau))
        step = float(np.max(np.linalg.norm(sol.q - it.q, axis=1)))
        rec = IterationRecord(r, float(sol.objective),
                              _exact_simplified_objective(sol, s), gap, step,
                              sol.status, sol.solver_iterations,
                              sol.solve_time_s)
        records.append(rec)
        if progress is not None:
            progress(rec)

        best = sol
        it = update_fixed_points(it, sol, s)
        it = update_penalty_state(it, sol, s, lam_cap)

        if prev_obj is not None:
            eps = abs(sol.objective - prev_obj) / max(abs(prev_obj), 1e-30)
            if eps < options.epsilon and gap <= orth_tol:
                converged = True
                break
        prev_obj = float(sol.objective)

    out = recover_schedule(best, s)
    out.converged = converged
    out.degraded = degraded or out.degraded
    out.iterations = len(records)
    out.records = records
    out.final_iterate = it
    if note:
        out.status = (out.status + "; " + note) if out.status else note
    if not converged and not out.status:
        out.status = f"stopped at max_iters={options.max_iters}"
    return out


def _exact_complement(total: float, part: float) -> tuple[float, float]:
    # split total into two floats that sum back exactly
    for _ in range(10):
        rest = total - part
        part = total - rest
        if part + rest == total:
            return part, rest
    raise ArithmeticError("could not split total exactly")


def recover_schedule(sol: SubproblemSolution, s: Scenario) -> Solution:
    """Map a restricted solve to an operating schedule: binary slot roles
    from the dominant band share, sub-floor shares snapped off, off-branch
    power and rate zeroed, and the band split repaired to sum exactly."""
    if sol is None or not sol.usable:
        raise ValueError("recover_schedule requires a usable subproblem solution")
    n = len(sol.b1)
    b = s.bandwidth_hz
    snap = 2.0 * BANDWIDTH_FLOOR_FRAC * b

    q = _snap_trajectory(sol.q, s)
    rho = (sol.eta >= sol.tau).astype(int)
    eta_eff = np.where(sol.eta <= snap, 0.0, sol.eta)
    tau_eff = np.where(sol.tau <= snap, 0.0, sol.tau)

    b1 = np.empty(n)
    b2 = np.empty(n)
    for i in range(n):
        share = float(eta_eff[i] + tau_eff[i])
        b2[i], b1[i] = _exact_complement(b, share) if share > 0.0 else (0.0, b)

    p_a = sol.alpha_a ** 2
    p_b = np.where(rho == 1, sol.alpha_b ** 2, 0.0)
    p_e = np.where(rho == 0, sol.alpha_e ** 2, 0.0)
    r_b = np.where(rho == 1, np.maximum(sol.r_b, 0.0), 0.0)
    r_e = np.where(rho == 0, np.maximum(sol.r_e, 0.0), 0.0)
    r_ub = np.maximum(sol.r_ub, 0.0)
    r_ue = np.maximum(sol.r_ue, 0.0)

    # slots carrying no data carry no downlink power either: the cone
    # hypograph keeps a residual amplitude alive on idle slots, and dropping
    # it only relaxes the power budget while leaving every rate untouched
    rate_snap = RATE_SNAP_FRAC * b
    idle_b = r_b < rate_snap
    idle_e = r_e < rate_snap
    p_b[idle_b] = 0.0
    r_b[idle_b] = 0.0
    p_e[idle_e] = 0.0
    r_e[idle_e] = 0.0

    out = Solution(q=q, b1=b1, b2=b2, rho=rho, p_a=p_a, p_b=p_b, p_e=p_e,
                   r_ub=r_ub, r_ue=r_ue, r_b=r_b, r_e=r_e)
    m = model.accumulated_metrics(out, s)
    out.secrecy_total = m.secrecy_total
    out.eve_total = m.eve_total
    if m.eve_total < s.eve_qos_target * (1.0 - 1e-4):
        out.degraded = True
        out.status = (f"schedule recovery broke the Eve service target: "
                      f"{m.eve_total:.6g} < {s.eve_qos_target:.6g} nat/s")
    return out

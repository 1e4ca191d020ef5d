"""Convex restriction of the joint trajectory/resource design around a
reference iterate.

Every nonconvex ingredient of the per-slot model is replaced by a global
bound that is tight at the reference point:

* alpha^2 / mu (received SNR numerator over squared distance) by its
  first-order Taylor expansion, a global lower bound of the jointly convex
  quad-over-lin function;
* the wiretap-side perspective term eta * ln(1 + gamma*theta/eta) by its
  tangent plane, a global upper bound of a jointly concave function (the
  tangent has zero constant term because the function is positively
  homogeneous of degree one in (theta, eta));
* the squared distance ||q - s||^2, where it must be kept large, by its
  tangent, a global lower bound;
* the band-orthogonality product eta*tau by the weighted AGM square
  0.5*((eta/psi)^2 + (tau*psi)^2), tight when psi^2 = eta/tau, which enters
  the objective as an epigraph variable with a per-slot penalty weight.

The assembled program is expressed in nondimensional units (lengths over
1 km, bandwidths over the total band, powers over the larger power budget)
so a single solver tolerance is meaningful across scenarios; the variable
registry keeps the scale of every variable and extraction restores SI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conic import AffExpr, ConvexProgram
from .model import BANDWIDTH_FLOOR_FRAC, Scenario

LENGTH_SCALE_M = 1000.0

# tiny linear cost on transmit amplitudes (in nondimensional objective
# units) that breaks the power degeneracy: among equal-rate allocations the
# solver then prefers the least transmit power, which is the schedule a
# real system would fly. Orders of magnitude below every rate term.
AMPLITUDE_TIE_BREAK = 1e-7


# ---------------------------------------------------------------------------
# reference iterate


@dataclass
class Iterate:
    """Reference point of one convex restriction, SI units.

    psi is the per-slot AGM weight, lam the per-slot penalty weight and
    delta the per-slot penalty increment; they are carried here because the
    restriction is only defined relative to all three.
    """

    q: np.ndarray          # (N,3) m
    alpha_a: np.ndarray    # sqrt(W), Alice transmit amplitude
    alpha_b: np.ndarray
    alpha_e: np.ndarray
    mu_a: np.ndarray       # m^2, link distance-squared upper proxies
    mu_b: np.ndarray
    mu_e: np.ndarray
    theta: np.ndarray      # W/m^2, wiretap power-over-distance ratio
    eta: np.ndarray        # Hz, Bob-side share of the downlink band
    tau: np.ndarray        # Hz, Eve-side share
    psi: np.ndarray
    lam: np.ndarray
    delta: np.ndarray

    def n_slots(self) -> int:
        return int(self.q.shape[0])

    def copy(self) -> "Iterate":
        return Iterate(*(np.array(getattr(self, f), dtype=float, copy=True)
                         for f in ("q", "alpha_a", "alpha_b", "alpha_e",
                                   "mu_a", "mu_b", "mu_e", "theta",
                                   "eta", "tau", "psi", "lam", "delta")))

    def check(self, s: Scenario) -> None:
        n = s.n_slots
        if self.q.shape != (n, 3):
            raise ValueError(f"iterate q shape {self.q.shape}, expected ({n}, 3)")
        flat = ("alpha_a", "alpha_b", "alpha_e", "mu_a", "mu_b", "mu_e",
                "theta", "eta", "tau", "psi", "lam", "delta")
        for f in flat:
            a = getattr(self, f)
            if a.shape != (n,):
                raise ValueError(f"iterate {f} shape {a.shape}, expected ({n},)")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"iterate {f} has non-finite entries")
        if not np.all(np.isfinite(self.q)):
            raise ValueError("iterate q has non-finite entries")
        floor = BANDWIDTH_FLOOR_FRAC * s.bandwidth_hz
        for f in ("eta", "tau"):
            a = getattr(self, f)
            if np.any(a < floor * (1 - 1e-9)) or np.any(a > s.bandwidth_hz):
                raise ValueError(f"iterate {f} outside [floor, B]")
        if np.any(self.eta + self.tau > s.bandwidth_hz * (1 + 1e-9)):
            raise ValueError("iterate eta + tau exceeds the band")
        for f in ("mu_a", "mu_b", "mu_e"):
            if np.any(getattr(self, f) <= 0.0):
                raise ValueError(f"iterate {f} must be > 0")
        if np.any(self.psi <= 0.0):
            raise ValueError("iterate psi must be > 0")
        for f in ("alpha_a", "alpha_b", "alpha_e", "theta", "lam", "delta"):
            if np.any(getattr(self, f) < 0.0):
                raise ValueError(f"iterate {f} must be >= 0")


# ---------------------------------------------------------------------------
# surrogate factories


@dataclass(frozen=True)
class QuadOverLinBound:
    """Affine global lower bound on alpha^2/mu, tight at the reference."""

    coef_alpha: float
    coef_mu: float

    def value(self, alpha: float, mu: float) -> float:
        return self.coef_alpha * alpha + self.coef_mu * mu


def quad_over_lin_lower_bound(alpha_ref: float, mu_ref: float) -> QuadOverLinBound:
    """Tangent of alpha^2/mu at (alpha_ref, mu_ref):

        (2 alpha_r / mu_r) alpha - (alpha_r / mu_r)^2 mu  <=  alpha^2 / mu

    for every alpha and mu > 0, with equality at the reference (the function
    is jointly convex, so the tangent under-estimates globally).
    """
    if not mu_ref > 0.0:
        raise ValueError("quad_over_lin_lower_bound: mu_ref must be > 0")
    if alpha_ref < 0.0:
        raise ValueError("quad_over_lin_lower_bound: alpha_ref must be >= 0")
    r = alpha_ref / mu_ref
    return QuadOverLinBound(2.0 * r, -r * r)


@dataclass(frozen=True)
class PerspectiveLogBound:
    """Affine global upper bound on f(theta, eta) = eta*ln(1+gamma*theta/eta).

    f is concave and positively homogeneous, so its tangent plane passes
    through the origin: value = coef_theta*theta + coef_eta*eta exactly.
    """

    coef_theta: float
    coef_eta: float

    def value(self, theta: float, eta: float) -> float:
        return self.coef_theta * theta + self.coef_eta * eta


def perspective_log_upper_bound(theta_ref: float, eta_ref: float,
                                gamma: float) -> PerspectiveLogBound:
    if not eta_ref > 0.0:
        raise ValueError("perspective_log_upper_bound: eta_ref must be > 0")
    if theta_ref < 0.0 or gamma < 0.0:
        raise ValueError("perspective_log_upper_bound: theta_ref and gamma must be >= 0")
    t = gamma * theta_ref / eta_ref
    return PerspectiveLogBound(gamma / (1.0 + t),
                               math.log1p(t) - t / (1.0 + t))


@dataclass(frozen=True)
class SquaredNormLinearization:
    """Tangent of q -> ||q - s||^2 at q_ref; a global lower bound."""

    ref: np.ndarray
    grad: np.ndarray       # 2 (q_ref - s)
    const_at_ref: float    # ||q_ref - s||^2

    def value(self, q) -> float:
        d = np.asarray(q, dtype=float) - self.ref
        return self.const_at_ref + float(self.grad @ d)


def squared_norm_linearization(q_ref, s) -> SquaredNormLinearization:
    q_ref = np.asarray(q_ref, dtype=float)
    s = np.asarray(s, dtype=float)
    diff = q_ref - s
    return SquaredNormLinearization(q_ref, 2.0 * diff, float(diff @ diff))


def agm_bound(eta: float, tau: float, psi: float) -> float:
    """0.5*((eta/psi)^2 + (tau*psi)^2) >= eta*tau, equality at psi^2 = eta/tau."""
    if not psi > 0.0:
        raise ValueError("agm_bound: psi must be > 0")
    return 0.5 * ((eta / psi) ** 2 + (tau * psi) ** 2)


# ---------------------------------------------------------------------------
# subproblem assembly


@dataclass(frozen=True)
class BandwidthPins:
    """Optional equality pins used by the baseline strategies.

    b1_hz pins the uplink band per slot; bob_only / eve_only are boolean
    masks forcing the off-duty downlink share to the floor in a slot.
    """

    b1_hz: float | None = None
    bob_only: np.ndarray | None = None
    eve_only: np.ndarray | None = None


def _quad_soc(prog: ConvexProgram, label: str, lhs: list[AffExpr], rhs: AffExpr) -> None:
    # ||lhs||^2 <= rhs  as  ||[2*lhs; rhs-1]|| <= rhs+1
    prog.add_soc(label, rhs + 1.0, [2.0 * e for e in lhs] + [rhs - 1.0])


def assemble_subproblem(s: Scenario, it: Iterate,
                        pins: BandwidthPins | None = None) -> ConvexProgram:
    """Build the penalised convex restriction around `it` as a ConvexProgram.

    Raises ValueError when the iterate violates its invariants.
    """
    it.check(s)
    n = s.n_slots
    l0 = LENGTH_SCALE_M
    b0 = s.bandwidth_hz
    p0 = max(s.p_alice_max, s.p_uav_max)
    a0 = math.sqrt(p0)
    m0 = l0 * l0
    th0 = p0 / m0
    gamma_sc = s.norm_gain * p0 / (b0 * m0)
    floor = BANDWIDTH_FLOOR_FRAC  # scaled: 1e-9 of the band

    alice = s.alice_pos.as_array() / l0
    bob = s.bob_pos.as_array() / l0
    eve_c = s.eve.center.as_array() / l0
    d_e = s.eve.radius / l0
    start = s.uav_start.as_array() / l0
    end = s.uav_end.as_array() / l0
    h = s.altitude_m / l0
    step = s.max_step_m / l0

    prog = ConvexProgram()
    prog.objective_scale = b0

    pin_tau_floor = np.zeros(n, dtype=bool)
    pin_eta_floor = np.zeros(n, dtype=bool)
    if pins is not None:
        if pins.bob_only is not None:
            pin_tau_floor = np.asarray(pins.bob_only, dtype=bool)
        if pins.eve_only is not None:
            pin_eta_floor = np.asarray(pins.eve_only, dtype=bool)

    names = {}
    per_slot = (("qx", l0), ("qy", l0), ("qz", l0), ("dg", l0),
                ("b1", b0), ("eta", b0), ("tau", b0),
                ("alpha_a", a0), ("alpha_b", a0), ("alpha_e", a0),
                ("mu_a", m0), ("mu_b", m0), ("mu_e", m0), ("theta", th0),
                ("r_ub", b0), ("r_ue", b0), ("r_b", b0), ("r_e", b0),
                ("pen", b0 * b0))
    for i in range(n):
        for base, scale in per_slot:
            names[(base, i)] = prog.add_variable(f"{base}[{i}]", scale)

    def v(base: str, i: int) -> AffExpr:
        return AffExpr({names[(base, i)]: 1.0})

    obj = AffExpr.zero()
    for i in range(n):
        qx, qy, qz, dg = v("qx", i), v("qy", i), v("qz", i), v("dg", i)
        b1, eta, tau = v("b1", i), v("eta", i), v("tau", i)
        al_a, al_b, al_e = v("alpha_a", i), v("alpha_b", i), v("alpha_e", i)
        mu_a, mu_b, mu_e = v("mu_a", i), v("mu_b", i), v("mu_e", i)
        theta = v("theta", i)
        r_ub, r_ue, r_b, r_e = v("r_ub", i), v("r_ue", i), v("r_b", i), v("r_e", i)
        pen = v("pen", i)

        # altitude hold and full-band use
        prog.add_eq(qz, h)
        prog.add_eq(b1 + eta + tau, 1.0)

        # flight step; the first slot leaves the fixed start point
        if i == 0:
            delta = [qx - start[0], qy - start[1], qz - start[2]]
        else:
            delta = [qx - v("qx", i - 1), qy - v("qy", i - 1), qz - v("qz", i - 1)]
        if step > 0.0:
            prog.add_soc("step", AffExpr.constant(step), delta)
        else:
            for d in delta:
                prog.add_eq(d, 0.0)

        # dg >= horizontal range to the disc centre
        prog.add_soc("ground_range", dg, [qx - eve_c[0], qy - eve_c[1]])

        # band floors keep every perspective/hypograph denominator positive
        prog.add_ineq(-b1, -floor)
        prog.add_ineq(-eta, -floor)
        prog.add_ineq(-tau, -floor)

        # amplitude boxes
        prog.add_ineq(-al_a)
        prog.add_ineq(-al_b)
        prog.add_ineq(-al_e)
        prog.add_ineq(al_a, math.sqrt(s.p_alice_max / p0))
        prog.add_ineq(al_b, math.sqrt(s.p_uav_max / p0))
        prog.add_ineq(al_e, math.sqrt(s.p_uav_max / p0))

        for r in (r_ub, r_ue, r_b, r_e):
            prog.add_ineq(-r)
        prog.add_ineq(-theta)

        # squared-distance proxies: ||q - s||^2 <= mu for the legitimate links
        _quad_soc(prog, "mu_alice", [qx - alice[0], qy - alice[1], qz - alice[2]], mu_a)
        _quad_soc(prog, "mu_bob", [qx - bob[0], qy - bob[1], qz - bob[2]], mu_b)
        # worst-case Eve distance: ||q - c||^2 + d_e^2 + 2 d_e dg <= mu_e
        w_e = mu_e - d_e * d_e - (2.0 * d_e) * dg
        _quad_soc(prog, "mu_eve", [qx - eve_c[0], qy - eve_c[1], qz - eve_c[2]], w_e)

        # wiretap ratio: alpha_b^2 <= theta * u with u an affine lower bound
        # of the best-case Eve distance (tangent of ||q-c||^2 minus the dg term)
        lin = squared_norm_linearization(it.q[i] / l0, eve_c)
        u = AffExpr.constant(lin.const_at_ref - float(lin.grad @ lin.ref)
                             + d_e * d_e)
        u = u + lin.grad[0] * qx + lin.grad[1] * qy + lin.grad[2] * qz
        u = u - (2.0 * d_e) * dg
        prog.add_soc("theta_link", u + theta, [2.0 * al_b, u - theta])

        # orthogonality penalty epigraph: 0.5((eta/psi)^2 + (tau psi)^2) <= pen
        psi = float(it.psi[i])
        prog.add_soc("agm_epigraph", pen + 0.5,
                     [(1.0 / psi) * eta, psi * tau, pen - 0.5])

        # rate hypographs through tangents of alpha^2/mu at the iterate
        qol_a = quad_over_lin_lower_bound(it.alpha_a[i] / a0, it.mu_a[i] / m0)
        qol_b = quad_over_lin_lower_bound(it.alpha_b[i] / a0, it.mu_b[i] / m0)
        qol_e = quad_over_lin_lower_bound(it.alpha_e[i] / a0, it.mu_e[i] / m0)
        w_ua = gamma_sc * (qol_a.coef_alpha * al_a + qol_a.coef_mu * mu_a)
        w_rb = gamma_sc * (qol_b.coef_alpha * al_b + qol_b.coef_mu * mu_b)
        w_re = gamma_sc * (qol_e.coef_alpha * al_e + qol_e.coef_mu * mu_e)
        prog.add_exp("uplink_rate", b1 + w_ua, b1, r_ub + r_ue)
        # a share pinned at the floor carries no data: its true capacity is
        # below 1 nat/s, and an exponential cone with a 1e-9 denominator
        # pushed to its boundary stalls the interior-point solver
        if pin_eta_floor[i]:
            prog.add_eq(r_b, 0.0)
        else:
            prog.add_exp("bob_rate", eta + w_rb, eta, r_b)
        if pin_tau_floor[i]:
            prog.add_eq(r_e, 0.0)
        else:
            prog.add_exp("eve_rate", tau + w_re, tau, r_e)

        # per-slot objective: confidential rate minus wiretap tangent and penalty
        tangent = perspective_log_upper_bound(it.theta[i] / th0, it.eta[i] / b0,
                                              gamma_sc)
        lam_sc = float(it.lam[i]) * b0
        obj = obj + r_b - tangent.coef_eta * eta - tangent.coef_theta * theta \
            - lam_sc * pen \
            - AMPLITUDE_TIE_BREAK * (al_a + al_b + al_e)

    # terminal waypoint (altitude is already pinned per slot)
    prog.add_eq(v("qx", n - 1), end[0])
    prog.add_eq(v("qy", n - 1), end[1])

    # information causality: both receivers only get what was relayed so far
    run_b, run_e = AffExpr.zero(), AffExpr.zero()
    for i in range(n):
        run_b = run_b + v("r_b", i) - v("r_ub", i)
        run_e = run_e + v("r_e", i) - v("r_ue", i)
        prog.add_ineq(run_b.copy())
        prog.add_ineq(run_e.copy())

    # accumulated service owed to Eve
    qos = AffExpr.zero()
    for i in range(n):
        qos = qos - v("r_e", i)
    prog.add_ineq(qos, -s.eve_qos_target / b0)

    if pins is not None:
        if pins.b1_hz is not None:
            for i in range(n):
                prog.add_eq(v("b1", i), pins.b1_hz / b0)
        if pins.bob_only is not None:
            for i in np.flatnonzero(np.asarray(pins.bob_only, dtype=bool)):
                prog.add_eq(v("tau", int(i)), floor)
        if pins.eve_only is not None:
            for i in np.flatnonzero(np.asarray(pins.eve_only, dtype=bool)):
                prog.add_eq(v("eta", int(i)), floor)

    prog.set_objective(obj)
    return prog


# ---------------------------------------------------------------------------
# extraction


@dataclass
class SubproblemSolution:
    """One restricted solve in SI units."""

    status: str
    objective: float | None        # penalised surrogate objective, nat/s
    q: np.ndarray | None = None    # (N,3) m
    dg: np.ndarray | None = None
    b1: np.ndarray | None = None
    eta: np.ndarray | None = None
    tau: np.ndarray | None = None
    alpha_a: np.ndarray | None = None
    alpha_b: np.ndarray | None = None
    alpha_e: np.ndarray | None = None
    mu_a: np.ndarray | None = None
    mu_b: np.ndarray | None = None
    mu_e: np.ndarray | None = None
    theta: np.ndarray | None = None
    r_ub: np.ndarray | None = None
    r_ue: np.ndarray | None = None
    r_b: np.ndarray | None = None
    r_e: np.ndarray | None = None
    pen: np.ndarray | None = None
    solve_time_s: float = 0.0
    solver_iterations: int = 0
    detail: str = ""

    @property
    def usable(self) -> bool:
        return self.status in ("optimal", "near_optimal") and self.q is not None


def extract_subproblem_solution(prog: ConvexProgram, raw,
                                n_slots: int) -> SubproblemSolution:
    """Map a backend point back to SI per-slot arrays via the registry scales."""
    if not raw.usable:
        return SubproblemSolution(raw.status, None, solve_time_s=raw.solve_time_s,
                                  solver_iterations=raw.iterations, detail=raw.detail)
    x = raw.x

    def arr(base: str) -> np.ndarray:
        out = np.empty(n_slots)
        for i in range(n_slots):
            j = prog.index(f"{base}[{i}]")
            out[i] = x[j] * prog.var_scales[j]
        return out

    q = np.column_stack([arr("qx"), arr("qy"), arr("qz")])
    return SubproblemSolution(
        status=raw.status,
        objective=raw.objective * prog.objective_scale,
        q=q, dg=arr("dg"), b1=arr("b1"), eta=arr("eta"), tau=arr("tau"),
        alpha_a=arr("alpha_a"), alpha_b=arr("alpha_b"), alpha_e=arr("alpha_e"),
        mu_a=arr("mu_a"), mu_b=arr("mu_b"), mu_e=arr("mu_e"), theta=arr("theta"),
        r_ub=arr("r_ub"), r_ue=arr("r_ue"), r_b=arr("r_b"), r_e=arr("r_e"),
        pen=arr("pen"),
        solve_time_s=raw.solve_time_s, solver_iterations=raw.iterations,
        detail=raw.detail)

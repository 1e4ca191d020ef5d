"""Physical model for a UAV decode-and-forward relay serving one legitimate
receiver while an untrusted second receiver (treated as an internal
eavesdropper) must still be granted a minimum service rate.

Geometry is 3-D with all ground nodes at z = 0 and the UAV at a fixed
altitude. The eavesdropper's position is only known to lie in a horizontal
disc; distances to it are therefore handled through best/worst-case bounds
over the disc. All rates are in nat/s, all distances in metres, all powers
in watts; unit conversion happens in the scenario loader, nowhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NAT_PER_BIT = math.log(2.0)

# relative share of the total bandwidth below which a band allocation is
# treated as "off" when recovering a schedule
BANDWIDTH_FLOOR_FRAC = 1e-9


@dataclass(frozen=True)
class Position3:
    """A point in metres, z up."""

    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a) -> "Position3":
        a = np.asarray(a, dtype=float)
        return Position3(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class EveRegion:
    """Disc of possible eavesdropper positions on the ground plane.

    center.z must be 0; radius may be 0 (exactly known position).
    """

    center: Position3
    radius: float


@dataclass(frozen=True)
class Scenario:
    """Complete problem instance in SI units (rates in nat/s).

    max_step_m and norm_gain are derived properties so the invariants
    D = T_s * V_max and gamma = gain_ref / noise_psd hold by construction.
    """

    alice_pos: Position3
    bob_pos: Position3
    eve: EveRegion
    uav_start: Position3
    uav_end: Position3
    altitude_m: float
    flight_duration_s: float
    slot_duration_s: float
    n_slots: int
    max_speed_mps: float
    bandwidth_hz: float
    gain_ref: float          # channel power gain at 1 m
    noise_psd: float         # W/Hz
    p_alice_max: float
    p_uav_max: float
    eve_qos_target: float    # accumulated rate owed to Eve, nat/s

    @property
    def max_step_m(self) -> float:
        return self.slot_duration_s * self.max_speed_mps

    @property
    def norm_gain(self) -> float:
        """Reference SNR per unit bandwidth at 1 m: gamma = gain_ref / noise_psd."""
        return self.gain_ref / self.noise_psd


@dataclass(frozen=True)
class Violation:
    field: str
    relation: str

    def __str__(self) -> str:
        return f"{self.field}: {self.relation}"


def _finite3(p: Position3) -> bool:
    return all(math.isfinite(v) for v in (p.x, p.y, p.z))


def validate_scenario(s: Scenario) -> list[Violation]:
    """Check scenario invariants; returns an empty list when consistent.

    Timing must satisfy T = N * T_s exactly (the loader constructs these
    consistently; a hand-built mismatch is an authoring error, not noise).
    """
    out: list[Violation] = []

    for name, p in (("alice_pos", s.alice_pos), ("bob_pos", s.bob_pos),
                    ("eve.center", s.eve.center), ("uav_start", s.uav_start),
                    ("uav_end", s.uav_end)):
        if not _finite3(p):
            out.append(Violation(name, "coordinates must be finite"))
        elif p.z < 0.0:
            out.append(Violation(name, "z must be >= 0"))
    if s.eve.center.z != 0.0:
        out.append(Violation("eve.center", "must lie on the ground plane (z = 0)"))
    if not (s.eve.radius >= 0.0 and math.isfinite(s.eve.radius)):
        out.append(Violation("eve.radius", "must be finite and >= 0"))

    if not (s.n_slots >= 1):
        out.append(Violation("n_slots", "must be >= 1"))
    if not (s.slot_duration_s > 0.0):
        out.append(Violation("slot_duration_s", "must be > 0"))
    if not (s.flight_duration_s > 0.0):
        out.append(Violation("flight_duration_s", "must be > 0"))
    elif s.flight_duration_s != s.n_slots * s.slot_duration_s:
        out.append(Violation("flight_duration_s",
                             "T = n_slots * slot_duration_s must hold exactly"))
    if not (s.max_speed_mps >= 0.0):
        out.append(Violation("max_speed_mps", "must be >= 0"))

    for name, v in (("bandwidth_hz", s.bandwidth_hz), ("gain_ref", s.gain_ref),
                    ("noise_psd", s.noise_psd), ("p_alice_max", s.p_alice_max),
                    ("p_uav_max", s.p_uav_max)):
        if not (v > 0.0 and math.isfinite(v)):
            out.append(Violation(name, "must be finite and > 0"))
    if not (s.eve_qos_target >= 0.0 and math.isfinite(s.eve_qos_target)):
        out.append(Violation("eve_qos_target", "must be finite and >= 0"))

    if not (s.altitude_m > 0.0):
        # keeps every air-to-ground distance >= H > 0, so channel gains stay finite
        out.append(Violation("altitude_m", "must be > 0"))
    for name, p in (("uav_start", s.uav_start), ("uav_end", s.uav_end)):
        if _finite3(p) and p.z != s.altitude_m:
            out.append(Violation(name, "z must equal altitude_m"))

    # distinct ground nodes: coincident transmitter/receiver geometry is rejected here
    pairs = (("alice_pos/bob_pos", s.alice_pos, s.bob_pos),
             ("alice_pos/eve.center", s.alice_pos, s.eve.center),
             ("bob_pos/eve.center", s.bob_pos, s.eve.center))
    for name, a, b in pairs:
        if _finite3(a) and _finite3(b) and (a.x, a.y, a.z) == (b.x, b.y, b.z):
            out.append(Violation(name, "positions must be distinct"))

    # the straight-line distance must be coverable in N steps of length D
    if _finite3(s.uav_start) and _finite3(s.uav_end):
        span = float(np.linalg.norm(s.uav_end.as_array() - s.uav_start.as_array()))
        reach = s.n_slots * s.max_step_m
        if span > reach:
            out.append(Violation(
                "uav_end", f"unreachable: |s_F - s_I| = {span:.6g} m > N*D = {reach:.6g} m"))

    return out


def dist_sq(a: Position3, b: Position3) -> float:
    return (a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2


def channel_gain(q: Position3, s: Position3, gain_ref: float) -> float:
    """Free-space power gain gain_ref / |q - s|^2.

    Raises ValueError for coincident endpoints (gain would be unbounded).
    """
    d2 = dist_sq(q, s)
    if d2 <= 0.0:
        raise ValueError("channel_gain: coincident endpoints")
    return gain_ref / d2


def ground_range(q: Position3, center: Position3) -> float:
    """Horizontal distance from the UAV's ground projection to a ground point."""
    return math.hypot(q.x - center.x, q.y - center.y)


def eve_distance_bounds(q: Position3, eve: EveRegion) -> tuple[float, float]:
    """Best- and worst-case squared distance from q to a point of the disc.

    With D_G the ground range from q's projection to the disc centre and H
    the height of q above the ground plane, the extremes over the disc are
    attained on the boundary along the centre-projection axis:

        d_s = (D_G - d_e)^2 + H^2      (nearest; also valid for D_G < d_e)
        d_w = (D_G + d_e)^2 + H^2      (farthest)

    Returns (d_s, d_w) in m^2.
    """
    dg = ground_range(q, eve.center)
    h = q.z - eve.center.z
    d_s = (dg - eve.radius) ** 2 + h * h
    d_w = (dg + eve.radius) ** 2 + h * h
    return d_s, d_w


def perspective_rate(bw: float, power: float, d2: float, gamma: float) -> float:
    """Rate bw * ln(1 + gamma * power / (bw * d2)) in nat/s, continuous at bw = 0.

    The perspective of x -> ln(1 + gamma*power/(x*d2)) tends to 0 as bw -> 0+,
    which is the meaning of allocating no bandwidth.
    """
    if d2 <= 0.0:
        raise ValueError("perspective_rate: d2 must be > 0")
    if bw < 0.0 or power < 0.0:
        raise ValueError("perspective_rate: bw and power must be >= 0")
    if bw == 0.0 or power == 0.0:
        return 0.0
    arg = gamma * power / (bw * d2)
    if arg > 1e300:
        # asymptotic form; avoids inf*0 for vanishing bandwidth
        return bw * (math.log(gamma * power / d2) - math.log(bw))
    return bw * math.log1p(arg)


def per_slot_secrecy_rate(r_b: float, c_wiretap: float) -> float:
    """Positive part of the confidential rate margin, [r_b - c_wiretap]^+."""
    return max(r_b - c_wiretap, 0.0)


def closer_to_bob(q: Position3, bob: Position3, eve: EveRegion) -> bool:
    """True iff the relay is strictly closer to Bob than to every possible
    Eve position; only then can a slot carry confidential traffic at a
    positive secrecy rate."""
    d_s, _ = eve_distance_bounds(q, eve)
    return dist_sq(q, bob) < d_s


@dataclass(frozen=True)
class AccumulatedMetrics:
    secrecy_total: float
    eve_total: float
    per_slot: list[float]


def accumulated_metrics(sol, s: Scenario) -> AccumulatedMetrics:
    """Exact accumulated secrecy (worst case over the disc) and Eve service
    totals for a recovered schedule, nat/s summed over slots.

    sol needs per-slot arrays q (N,3), b2, rho, p_b, r_b, r_e. The confidential
    rate is capped at the exact Bob capacity before differencing, so an
    infeasible input cannot report phantom secrecy.
    """
    q = np.asarray(sol.q, dtype=float)
    n = q.shape[0]
    if n != s.n_slots or not (len(sol.b2) == len(sol.rho) == len(sol.p_b)
                              == len(sol.r_b) == len(sol.r_e) == n):
        raise ValueError("accumulated_metrics: slot count mismatch")
    gamma = s.norm_gain
    per_slot: list[float] = []
    for i in range(n):
        if int(sol.rho[i]) != 1:
            per_slot.append(0.0)
            continue
        qi = Position3(q[i, 0], q[i, 1], q[i, 2])
        d_s, _ = eve_distance_bounds(qi, s.eve)
        cap_b = perspective_rate(float(sol.b2[i]), float(sol.p_b[i]),
                                 dist_sq(qi, s.bob_pos), gamma)
        c_tap = perspective_rate(float(sol.b2[i]), float(sol.p_b[i]), d_s, gamma)
        per_slot.append(per_slot_secrecy_rate(min(float(sol.r_b[i]), cap_b), c_tap))
    eve_total = float(np.sum(np.asarray(sol.r_e, dtype=float)))
    return AccumulatedMetrics(float(sum(per_slot)), eve_total, per_slot)

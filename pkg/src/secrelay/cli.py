"""Command line front end: scenario files in, CSV/summary artifacts out.

Scenario files are flat `key = value` text with units encoded in the key
names (km, dBm, MHz, ...); this loader is the only place unit conversion
happens. Everything downstream is SI + nat/s.

Exit codes: 0 success, 2 scenario problems (parse or validation), 3
infeasible optimization, 4 numerical solver failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import evaluate, model
from .model import EveRegion, Position3, Scenario
from .sca import InfeasibleProblem, Solution, SolveFailure, SolverOptions, run_sca

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SCENARIO = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

MBPS_TO_NAT = 1e6 * math.log(2.0)

_SCALAR_KEYS = ("eve_radius_km", "flight_duration_s", "slot_duration_s",
                "max_speed_mps", "bandwidth_mhz", "ref_gain_db",
                "noise_psd_dbm_hz", "p_alice_dbm", "p_uav_dbm", "eve_qos_mbps")
_VECTOR_KEYS = ("alice_pos_km", "bob_pos_km", "eve_center_km",
                "uav_start_km", "uav_end_km")
_OPTIONAL_KEYS = ("n_slots",)


class ScenarioError(Exception):
    """Unreadable, malformed or invalid scenario file."""


def _db(v: float) -> float:
    return 10.0 ** (v / 10.0)


def _dbm(v: float) -> float:
    return 10.0 ** ((v - 30.0) / 10.0)


def bundled_scenario_path(name: str) -> Path:
    """Path of a fixture shipped with the package (e.g. 'paper_sec4')."""
    ref = resources.files("secrelay").joinpath("fixtures", f"{name}.cfg")
    if not ref.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return Path(str(ref))


def parse_scenario_text(text: str, origin: str = "<string>") -> Scenario:
    """Parse without validating; raises ScenarioError with line diagnostics."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"{origin}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key in values:
            raise ScenarioError(f"{origin}:{lineno}: duplicate key {key!r}")
        known = _SCALAR_KEYS + _VECTOR_KEYS + _OPTIONAL_KEYS
        if key not in known:
            raise ScenarioError(f"{origin}:{lineno}: unknown key {key!r}")
        try:
            if key in _VECTOR_KEYS:
                parts = [p for chunk in val.split(",") for p in chunk.split()]
                if len(parts) != 3:
                    raise ValueError("need 3 components")
                values[key] = tuple(float(p) for p in parts)
            elif key == "n_slots":
                values[key] = int(val)
            else:
                values[key] = float(val)
        except ValueError as e:
            raise ScenarioError(f"{origin}:{lineno}: bad value for {key!r}: {e}")

    missing = [k for k in _SCALAR_KEYS + _VECTOR_KEYS if k not in values]
    if missing:
        raise ScenarioError(f"{origin}: missing keys: {', '.join(missing)}")

    def pos(key: str) -> Position3:
        x, y, z = values[key]  # type: ignore[misc]
        return Position3(x * 1e3, y * 1e3, z * 1e3)

    t_total = float(values["flight_duration_s"])  # type: ignore[arg-type]
    t_slot = float(values["slot_duration_s"])     # type: ignore[arg-type]
    if t_slot <= 0.0:
        raise ScenarioError(f"{origin}: slot_duration_s must be > 0")
    n = int(values.get("n_slots", round(t_total / t_slot)))

    start = pos("uav_start_km")
    return Scenario(
        alice_pos=pos("alice_pos_km"),
        bob_pos=pos("bob_pos_km"),
        eve=EveRegion(pos("eve_center_km"), float(values["eve_radius_km"]) * 1e3),
        uav_start=start,
        uav_end=pos("uav_end_km"),
        altitude_m=start.z,
        flight_duration_s=t_total,
        slot_duration_s=t_slot,
        n_slots=n,
        max_speed_mps=float(values["max_speed_mps"]),
        bandwidth_hz=float(values["bandwidth_mhz"]) * 1e6,
        gain_ref=_db(float(values["ref_gain_db"])),
        noise_psd=_dbm(float(values["noise_psd_dbm_hz"])),
        p_alice_max=_dbm(float(values["p_alice_dbm"])),
        p_uav_max=_dbm(float(values["p_uav_dbm"])),
        eve_qos_target=float(values["eve_qos_mbps"]) * MBPS_TO_NAT,
    )


def load_scenario(path: str | Path) -> Scenario:
    """Read, parse and validate a scenario file; bundled fixture names
    (no path separator, no extension) are resolved from the package."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and p.name == str(path):
        p = bundled_scenario_path(p.name)
    try:
        text = p.read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read {p}: {e}")
    s = parse_scenario_text(text, origin=str(p))
    violations = model.validate_scenario(s)
    if violations:
        raise ScenarioError(
            f"{p}: invalid scenario:\n  " + "\n  ".join(str(v) for v in violations))
    return s


# ---------------------------------------------------------------------------
# artifacts


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def emit_report(sol: Solution, s: Scenario, out_dir: str | Path,
                header_extras: dict | None = None) -> None:
    """Write trajectory.csv, schedule.csv, iterations.csv and summary.txt.

    Floats are written with repr (shortest round-trip form), so identical
    runs produce byte-identical files and re-parsing loses nothing.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = ["n,t_s,x_m,y_m,z_m"]
    start = s.uav_start
    lines.append(f"0,{_fmt(0.0)},{_fmt(start.x)},{_fmt(start.y)},{_fmt(start.z)}")
    for i in range(s.n_slots):
        t = (i + 1) * s.slot_duration_s
        lines.append(f"{i + 1},{_fmt(t)},{_fmt(sol.q[i, 0])},"
                     f"{_fmt(sol.q[i, 1])},{_fmt(sol.q[i, 2])}")
    (out / "trajectory.csv").write_text("\n".join(lines) + "\n")

    lines = ["n,b1_hz,b2_hz,rho,p_a_w,p_b_w,p_e_w,r_ub,r_ue,r_b,r_e"]
    for i in range(s.n_slots):
        lines.append(",".join([
            str(i + 1), _fmt(sol.b1[i]), _fmt(sol.b2[i]), str(int(sol.rho[i])),
            _fmt(sol.p_a[i]), _fmt(sol.p_b[i]), _fmt(sol.p_e[i]),
            _fmt(sol.r_ub[i]), _fmt(sol.r_ue[i]), _fmt(sol.r_b[i]),
            _fmt(sol.r_e[i])]))
    (out / "schedule.csv").write_text("\n".join(lines) + "\n")

    lines = ["r,phase,surrogate_objective,exact_objective,"
             "max_orthogonality_gap,max_step_m,backend_status,"
             "solver_iterations"]
    for rec in sol.records:
        lines.append(",".join([
            str(rec.index), rec.phase, _fmt(rec.surrogate_objective),
            _fmt(rec.exact_objective), _fmt(rec.max_orthogonality_gap),
            _fmt(rec.max_step_m), rec.backend_status,
            str(rec.solver_iterations)]))
    (out / "iterations.csv").write_text("\n".join(lines) + "\n")

    rep = evaluate.feasibility_report(sol, s)
    scan = evaluate.worst_case_eve_scan(sol, s)
    kv: list[tuple[str, object]] = []
    if header_extras:
        kv.extend(header_extras.items())
    kv += [
        ("n_slots", s.n_slots),
        ("secrecy_total_nat_s", sol.secrecy_total),
        ("secrecy_total_bit_s", sol.secrecy_total / model.NAT_PER_BIT),
        ("exact_secrecy_objective_nat_s", evaluate.exact_secrecy_objective(sol, s)),
        ("eve_total_nat_s", sol.eve_total),
        ("eve_total_bit_s", sol.eve_total / model.NAT_PER_BIT),
        ("eve_qos_target_nat_s", s.eve_qos_target),
        ("worst_case_eve_leakage_nat_s", scan.max_leakage),
        ("converged", sol.converged),
        ("degraded", sol.degraded),
        ("iterations", sol.iterations),
        ("status", sol.status or "ok"),
        ("feasibility_passed", rep.passed),
    ]
    kv += [(f"residual_{k}", v) for k, v in sorted(rep.residuals.items())]
    text = "".join(f"{k} = {_fmt(v) if not isinstance(v, str) else v}\n"
                   for k, v in kv)
    (out / "summary.txt").write_text(text)


def read_solution(out_dir: str | Path, s: Scenario) -> Solution:
    """Rebuild a Solution from emitted CSVs (inverse of emit_report for the
    schedule-relevant fields; iteration history is not restored)."""
    out = Path(out_dir)
    traj = [line.split(",") for line
            in (out / "trajectory.csv").read_text().strip().splitlines()[1:]]
    if len(traj) != s.n_slots + 1:
        raise ValueError("trajectory.csv row count does not match the scenario")
    q = np.array([[float(r[2]), float(r[3]), float(r[4])] for r in traj[1:]])

    rows = [line.split(",") for line
            in (out / "schedule.csv").read_text().strip().splitlines()[1:]]
    if len(rows) != s.n_slots:
        raise ValueError("schedule.csv row count does not match the scenario")
    cols = np.array([[float(v) for v in r[1:]] for r in rows])
    sol = Solution(q=q, b1=cols[:, 0], b2=cols[:, 1],
                   rho=cols[:, 2].astype(int), p_a=cols[:, 3], p_b=cols[:, 4],
                   p_e=cols[:, 5], r_ub=cols[:, 6], r_ue=cols[:, 7],
                   r_b=cols[:, 8], r_e=cols[:, 9])
    m = model.accumulated_metrics(sol, s)
    sol.secrecy_total = m.secrecy_total
    sol.eve_total = m.eve_total
    return sol


# ---------------------------------------------------------------------------
# commands


@dataclass
class RunConfig:
    command: str
    scenario_path: str
    out_dir: str | None = None
    strategy: str = "joint"
    de_grid_km: list[float] | None = None
    re_mbps: float | None = None
    epsilon: float | None = None
    max_iters: int | None = None


def _options(cfg: RunConfig) -> SolverOptions:
    opts = SolverOptions()
    if cfg.epsilon is not None:
        opts.epsilon = cfg.epsilon
    if cfg.max_iters is not None:
        opts.max_iters = cfg.max_iters
    return opts


def _apply_overrides(s: Scenario, cfg: RunConfig) -> Scenario:
    if cfg.re_mbps is not None:
        s = dataclasses.replace(s, eve_qos_target=cfg.re_mbps * MBPS_TO_NAT)
    return s


def run_command(cfg: RunConfig, out=sys.stdout) -> int:
    try:
        s = load_scenario(cfg.scenario_path)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCENARIO

    if cfg.command == "validate":
        print(f"scenario ok: {cfg.scenario_path} "
              f"(N={s.n_slots}, B={s.bandwidth_hz!r} Hz)", file=out)
        return EXIT_OK

    s = _apply_overrides(s, cfg)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else Path("secrelay_out")

    try:
        if cfg.command in ("optimize", "baseline"):
            strategy = "joint" if cfg.command == "optimize" else cfg.strategy
            sol = evaluate.run_baseline(s, strategy, _options(cfg))
            emit_report(sol, s, out_dir, {
                "command": cfg.command, "strategy": strategy,
                "scenario": Path(cfg.scenario_path).name})
            print(f"{strategy}: secrecy {sol.secrecy_total!r} nat/s "
                  f"({sol.secrecy_total / model.NAT_PER_BIT!r} bit/s), "
                  f"eve {sol.eve_total!r} nat/s, "
                  f"{sol.iterations} rounds, "
                  f"{'converged' if sol.converged else 'not converged'}"
                  f"{' [degraded]' if sol.degraded else ''}", file=out)
            print(f"artifacts in {out_dir}", file=out)
            return EXIT_OK

        if cfg.command == "sweep":
            grid_km = cfg.de_grid_km if cfg.de_grid_km is not None \
                else [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
            radii = [v * 1e3 for v in grid_km]
            rows = evaluate.sweep_uncertainty(s, radii, options=_options(cfg))
            out_dir.mkdir(parents=True, exist_ok=True)
            lines = ["strategy,eve_radius_m,eve_qos_target_nat_s,"
                     "secrecy_total_nat_s,eve_total_nat_s,iterations,"
                     "converged,status"]
            for r in rows:
                lines.append(",".join([
                    r.strategy, _fmt(r.eve_radius_m), _fmt(r.eve_qos_target),
                    _fmt(r.secrecy_total), _fmt(r.eve_total),
                    str(r.iterations), _fmt(r.converged),
                    r.status.replace(",", ";").replace("\n", " ")]))
            (out_dir / "comparison.csv").write_text("\n".join(lines) + "\n")
            for r in rows:
                print(f"{r.strategy} d_e={r.eve_radius_m!r} m: "
                      f"secrecy {r.secrecy_total!r} nat/s ({r.status})", file=out)
            print(f"artifacts in {out_dir}", file=out)
            return EXIT_OK

    except InfeasibleProblem as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolveFailure as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL

    print(f"error: unknown command {cfg.command!r}", file=sys.stderr)
    return EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="secrelay",
        description="Joint UAV relay trajectory/resource optimization for "
                    "worst-case secrecy against an in-network eavesdropper.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, doc in (("optimize", "run the joint design"),
                      ("baseline", "run a reference strategy"),
                      ("sweep", "compare strategies across disc radii"),
                      ("validate", "check a scenario file")):
        sp = sub.add_parser(name, help=doc)
        sp.add_argument("--scenario", required=True,
                        help="scenario file path or bundled name (paper_sec4)")
        sp.add_argument("--out", default=None, help="artifact directory")
        sp.add_argument("--strategy", default="fixed_bandwidth",
                        choices=list(evaluate.STRATEGIES),
                        help="baseline strategy (baseline command)")
        sp.add_argument("--de-grid", default=None,
                        help="comma-separated disc radii in km (sweep command)")
        sp.add_argument("--re", type=float, default=None,
                        help="override the Eve service target, Mbit/s")
        sp.add_argument("--epsilon", type=float, default=None,
                        help="relative convergence threshold")
        sp.add_argument("--max-iters", type=int, default=None,
                        help="round limit for the outer loop")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    grid = None
    if args.de_grid is not None:
        try:
            grid = [float(v) for v in args.de_grid.split(",") if v.strip()]
        except ValueError:
            print(f"error: bad --de-grid {args.de_grid!r}", file=sys.stderr)
            return EXIT_SCENARIO
    cfg = RunConfig(command=args.command, scenario_path=args.scenario,
                    out_dir=args.out, strategy=args.strategy,
                    de_grid_km=grid, re_mbps=args.re,
                    epsilon=args.epsilon, max_iters=args.max_iters)
    try:
        return run_command(cfg)
    except Exception as e:  # pragma: no cover - last-resort guard
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Backends that take a ConvexProgram to a numerical cone solver.

Canonical form used by both backends:

    minimize q^T x   s.t.   A x + s = b,   s in Zero x Nonneg x SOC... x Exp...

The solver-side exponential cone is {(u, v, w): v * exp(u/v) <= w, v > 0}
(closure at v = 0), so a program block (a, b, c) with b*exp(c/b) <= a lands
in the slack vector as s = (c, b, a).

Clarabel is the primary backend (interior point, deterministic, supports
mixed SOC/exponential cones at tight tolerances). SCS is an optional
first-order fallback; it reaches lower accuracy per unit time and is only
selected when clarabel is unavailable or requested explicitly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .conic import ConvexProgram

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near_optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class RawSolution:
    """Backend verdict plus the primal point in program (scaled) units."""

    status: str
    x: np.ndarray | None
    objective: float | None
    solve_time_s: float
    iterations: int
    detail: str = ""

    @property
    def usable(self) -> bool:
        return self.status in (OPTIMAL, NEAR_OPTIMAL) and self.x is not None


@dataclass
class CanonicalData:
    q: np.ndarray
    a_mat: sp.csc_matrix
    b: np.ndarray
    n_eq: int
    n_ineq: int
    soc_dims: list[int]
    n_exp: int


def canonicalize(prog: ConvexProgram) -> CanonicalData:
    """Stack rows in cone order (zero, nonneg, soc blocks, exp blocks)."""
    n = prog.n_vars
    rows_i: list[int] = []
    cols_i: list[int] = []
    vals: list[float] = []
    b: list[float] = []
    r = 0

    def push(expr, b_val: float, sign: float) -> None:
        nonlocal r
        for j, v in expr.coeffs.items():
            if v != 0.0:
                rows_i.append(r)
                cols_i.append(j)
                vals.append(sign * v)
        b.append(b_val)
        r += 1

    # s = rhs - expr(x) for linear rows
    for expr, rhs in prog.eq_rows:
        push(expr, rhs - expr.const, +1.0)
    for expr, rhs in prog.ineq_rows:
        push(expr, rhs - expr.const, +1.0)
    # s = expr(x) for cone member rows
    soc_dims = []
    for blk in prog.soc_blocks:
        push(blk.head, blk.head.const, -1.0)
        for t in blk.tail:
            push(t, t.const, -1.0)
        soc_dims.append(1 + len(blk.tail))
    for blk in prog.exp_blocks:
        push(blk.c, blk.c.const, -1.0)
        push(blk.b, blk.b.const, -1.0)
        push(blk.a, blk.a.const, -1.0)

    a_mat = sp.csc_matrix(
        (np.asarray(vals, dtype=float),
         (np.asarray(rows_i, dtype=np.int64), np.asarray(cols_i, dtype=np.int64))),
        shape=(r, n))
    q = np.zeros(n)
    for j, v in prog.objective.coeffs.items():
        q[j] = -v  # maximize -> minimize
    return CanonicalData(q, a_mat, np.asarray(b, dtype=float),
                         len(prog.eq_rows), len(prog.ineq_rows),
                         soc_dims, len(prog.exp_blocks))


class ClarabelBackend:
    name = "clarabel"

    # 1e-8 keeps the exponential-cone rows out of the regime where the
    # homogeneous embedding stalls; 1e-9 produces sporadic NUMERICAL_FAILURE
    # terminations and interior-point centering that never switches idle
    # transmitters off
    def __init__(self, tol: float = 1e-8, max_iter: int = 200, verbose: bool = False):
        self.tol = tol
        self.max_iter = max_iter
        self.verbose = verbose

    def solve(self, prog: ConvexProgram) -> RawSolution:
        import clarabel

        prog.check_well_formed()
        data = canonicalize(prog)
        cones = []
        if data.n_eq:
            cones.append(clarabel.ZeroConeT(data.n_eq))
        if data.n_ineq:
            cones.append(clarabel.NonnegativeConeT(data.n_ineq))
        cones.extend(clarabel.SecondOrderConeT(d) for d in data.soc_dims)
        cones.extend(clarabel.ExponentialConeT() for _ in range(data.n_exp))

        settings = clarabel.DefaultSettings()
        settings.verbose = self.verbose
        settings.max_iter = self.max_iter
        settings.tol_gap_abs = self.tol
        settings.tol_gap_rel = self.tol
        settings.tol_feas = self.tol

        n = prog.n_vars
        p_mat = sp.csc_matrix((n, n))
        solver = clarabel.DefaultSolver(p_mat, data.q, data.a_mat, data.b,
                                        cones, settings)
        t0 = time.perf_counter()
        sol = solver.solve()
        wall = time.perf_counter() - t0

        st = sol.status
        s = clarabel.SolverStatus
        if st == s.Solved:
            status, detail = OPTIMAL, ""
        elif st == s.AlmostSolved:
            status, detail = NEAR_OPTIMAL, "reduced-accuracy solve"
        elif st in (s.PrimalInfeasible, s.AlmostPrimalInfeasible):
            status, detail = INFEASIBLE, "primal infeasible certificate"
        elif st in (s.DualInfeasible, s.AlmostDualInfeasible):
            status, detail = NUMERICAL_FAILURE, "dual infeasible (objective unbounded)"
        else:
            status, detail = NUMERICAL_FAILURE, f"solver status {st}"

        x = None
        obj = None
        if status in (OPTIMAL, NEAR_OPTIMAL):
            x = np.asarray(sol.x, dtype=float)
            obj = prog.objective.value(x)
        return RawSolution(status, x, obj, wall, int(sol.iterations), detail)


class ScsBackend:
    name = "scs"

    def __init__(self, tol: float = 1e-8, max_iter: int = 200_000, verbose: bool = False):
        self.tol = tol
        self.max_iter = max_iter
        self.verbose = verbose

    def solve(self, prog: ConvexProgram) -> RawSolution:
        import scs

        prog.check_well_formed()
        data = canonicalize(prog)
        cone: dict = {}
        if data.n_eq:
            cone["z"] = data.n_eq
        if data.n_ineq:
            cone["l"] = data.n_ineq
        if data.soc_dims:
            cone["q"] = list(data.soc_dims)
        if data.n_exp:
            cone["ep"] = data.n_exp

        problem = {"A": data.a_mat, "b": data.b, "c": data.q}
        t0 = time.perf_counter()
        out = scs.solve(problem, cone, verbose=self.verbose,
                        eps_abs=self.tol, eps_rel=self.tol,
                        max_iters=self.max_iter)
        wall = time.perf_counter() - t0

        raw = out["info"]["status"].lower()
        if raw == "solved":
            status, detail = OPTIMAL, ""
        elif raw.startswith("solved"):
            status, detail = NEAR_OPTIMAL, out["info"]["status"]
        elif "infeasible" in raw:
            status, detail = INFEASIBLE, out["info"]["status"]
        else:
            status, detail = NUMERICAL_FAILURE, out["info"]["status"]

        x = None
        obj = None
        if status in (OPTIMAL, NEAR_OPTIMAL):
            x = np.asarray(out["x"], dtype=float)
            if np.all(np.isfinite(x)):
                obj = prog.objective.value(x)
            else:
                status, detail, x = NUMERICAL_FAILURE, "non-finite primal", None
        return RawSolution(status, x, obj, wall, int(out["info"]["iter"]), detail)


def make_backend(name: str | None = None, tol: float = 1e-8):
    """Instantiate a backend by name; None picks the best available."""
    if name in (None, "auto"):
        try:
            import clarabel  # noqa: F401
            return ClarabelBackend(tol=tol)
        except ImportError:
            pass
        try:
            import scs  # noqa: F401
            return ScsBackend(tol=max(tol, 1e-9))
        except ImportError:
            raise RuntimeError("no cone solver available: install clarabel or scs")
    if name == "clarabel":
        return ClarabelBackend(tol=tol)
    if name == "scs":
        return ScsBackend(tol=tol)
    raise ValueError(f"unknown backend {name!r}")

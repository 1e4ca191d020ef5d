"""Solver-neutral conic program representation.

A ConvexProgram is a maximization of a linear functional over variables
subject to linear equalities, linear inequalities, second-order cone blocks
and exponential-cone blocks. The exponential cone is taken in the form

    (a, b, c) in K_exp  <=>  b * exp(c / b) <= a,  b > 0   (closure at b = 0)

which makes the rate hypograph t <= x*ln(1 + w/x) exactly the membership of
(x + w, x, t). Cone blocks carry a short label so assembled programs can be
audited block-family by block-family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class AffExpr:
    """Sparse affine expression sum_i coeffs[i] * x_i + const."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: dict[int, float] | None = None, const: float = 0.0):
        self.coeffs = dict(coeffs) if coeffs else {}
        self.const = float(const)

    @staticmethod
    def zero() -> "AffExpr":
        return AffExpr()

    @staticmethod
    def constant(c: float) -> "AffExpr":
        return AffExpr(const=c)

    def copy(self) -> "AffExpr":
        return AffExpr(self.coeffs, self.const)

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, AffExpr):
            for i, v in other.coeffs.items():
                out.coeffs[i] = out.coeffs.get(i, 0.0) + v
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        return AffExpr({i: -v for i, v in self.coeffs.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other if isinstance(other, AffExpr) else -float(other))

    def __rsub__(self, other):
        return (-self) + float(other)

    def __mul__(self, k):
        k = float(k)
        return AffExpr({i: k * v for i, v in self.coeffs.items()}, k * self.const)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[i] for i, v in self.coeffs.items())

    def format(self, names: list[str]) -> str:
        parts = []
        for i in sorted(self.coeffs):
            v = self.coeffs[i]
            if v == 0.0:
                continue
            parts.append(f"{v:+.12g}*{names[i]}")
        if self.const != 0.0 or not parts:
            parts.append(f"{self.const:+.12g}")
        return " ".join(parts)


@dataclass
class SocBlock:
    label: str
    head: AffExpr
    tail: list[AffExpr]


@dataclass
class ExpBlock:
    label: str
    a: AffExpr
    b: AffExpr
    c: AffExpr


@dataclass
class ConvexProgram:
    """Conic program: maximize `objective` subject to the stored rows/blocks."""

    var_names: list[str] = field(default_factory=list)
    var_scales: list[float] = field(default_factory=list)
    eq_rows: list[tuple[AffExpr, float]] = field(default_factory=list)
    ineq_rows: list[tuple[AffExpr, float]] = field(default_factory=list)
    soc_blocks: list[SocBlock] = field(default_factory=list)
    exp_blocks: list[ExpBlock] = field(default_factory=list)
    objective: AffExpr = field(default_factory=AffExpr.zero)
    objective_scale: float = 1.0

    _index: dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    def add_variable(self, name: str, scale: float = 1.0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        if not (scale > 0.0 and math.isfinite(scale)):
            raise ValueError(f"variable {name!r}: scale must be finite and > 0")
        idx = len(self.var_names)
        self.var_names.append(name)
        self.var_scales.append(float(scale))
        self._index[name] = idx
        return idx

    def index(self, name: str) -> int:
        return self._index[name]

    def var(self, name: str) -> AffExpr:
        return AffExpr({self._index[name]: 1.0})

    def add_eq(self, expr: AffExpr, rhs: float = 0.0) -> None:
        self.eq_rows.append((expr, float(rhs)))

    def add_ineq(self, expr: AffExpr, rhs: float = 0.0) -> None:
        """expr <= rhs"""
        self.ineq_rows.append((expr, float(rhs)))

    def add_soc(self, label: str, head: AffExpr, tail: list[AffExpr]) -> None:
        """||tail||_2 <= head"""
        self.soc_blocks.append(SocBlock(label, head, list(tail)))

    def add_exp(self, label: str, a: AffExpr, b: AffExpr, c: AffExpr) -> None:
        """b * exp(c/b) <= a"""
        self.exp_blocks.append(ExpBlock(label, a, b, c))

    def set_objective(self, expr: AffExpr) -> None:
        self.objective = expr

    def block_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for blk in self.soc_blocks:
            counts[blk.label] = counts.get(blk.label, 0) + 1
        for blk in self.exp_blocks:
            counts[blk.label] = counts.get(blk.label, 0) + 1
        return counts

    def check_well_formed(self) -> None:
        n = self.n_vars
        exprs: list[AffExpr] = [self.objective]
        exprs += [e for e, _ in self.eq_rows] + [e for e, _ in self.ineq_rows]
        for blk in self.soc_blocks:
            exprs.append(blk.head)
            exprs.extend(blk.tail)
        for blk in self.exp_blocks:
            exprs.extend((blk.a, blk.b, blk.c))
        for e in exprs:
            for i, v in e.coeffs.items():
                if not 0 <= i < n:
                    raise ValueError(f"expression references unknown variable index {i}")
                if not math.isfinite(v):
                    raise ValueError("non-finite coefficient in expression")
            if not math.isfinite(e.const):
                raise ValueError("non-finite constant in expression")
        for blk in self.soc_blocks:
            if not blk.tail:
                raise ValueError(f"soc[{blk.label}] has empty tail")

    def residuals(self, x: np.ndarray) -> dict[str, float]:
        """Worst-case constraint violations of a candidate point, by family."""
        eq = max((abs(e.value(x) - r) for e, r in self.eq_rows), default=0.0)
        ineq = max((e.value(x) - r for e, r in self.ineq_rows), default=0.0)
        soc = 0.0
        for blk in self.soc_blocks:
            t = math.sqrt(sum(te.value(x) ** 2 for te in blk.tail))
            soc = max(soc, t - blk.head.value(x))
        expr = 0.0
        for blk in self.exp_blocks:
            expr = max(expr, exp_cone_residual(blk.a.value(x), blk.b.value(x),
                                               blk.c.value(x)))
        return {"eq": eq, "ineq": max(ineq, 0.0), "soc": max(soc, 0.0),
                "exp": max(expr, 0.0)}

    def dump_text(self) -> str:
        lines = [f"vars {self.n_vars}  eq {len(self.eq_rows)}  ineq {len(self.ineq_rows)}"
                 f"  soc {len(self.soc_blocks)}  exp {len(self.exp_blocks)}"]
        for i, name in enumerate(self.var_names):
            lines.append(f"var {i}: {name} scale={self.var_scales[i]:.12g}")
        lines.append(f"maximize: {self.objective.format(self.var_names)}")
        for e, r in self.eq_rows:
            lines.append(f"eq: {e.format(self.var_names)} == {r:.12g}")
        for e, r in self.ineq_rows:
            lines.append(f"ineq: {e.format(self.var_names)} <= {r:.12g}")
        for blk in self.soc_blocks:
            tail = " ; ".join(t.format(self.var_names) for t in blk.tail)
            lines.append(f"soc[{blk.label}]: ||{tail}|| <= {blk.head.format(self.var_names)}")
        for blk in self.exp_blocks:
            lines.append(f"exp[{blk.label}]: {blk.b.format(self.var_names)} * exp(( "
                         f"{blk.c.format(self.var_names)} ) / ( {blk.b.format(self.var_names)} ))"
                         f" <= {blk.a.format(self.var_names)}")
        return "\n".join(lines) + "\n"


def rate_hypograph_triple(x: float, w: float, t: float) -> tuple[float, float, float]:
    """Numeric image of the encoding t <= x*ln(1 + w/x)  <=>  (x+w, x, t) in K_exp."""
    return (x + w, x, t)


def exp_cone_residual(a: float, b: float, c: float) -> float:
    """Signed violation of b * exp(c/b) <= a; <= 0 means the triple is a member.

    The cone closure at b = 0 is {a >= 0, c <= 0}; b < 0 is never a member.
    """
    if b < 0.0:
        return math.inf
    if b == 0.0:
        return max(-a, c)
    z = c / b
    if z > 700.0:
        # overflow guard: compare in log space
        if a <= 0.0 or math.log(b) + z > math.log(a):
            return math.inf
        return -a
    return b * math.exp(z) - a


def in_exp_cone(a: float, b: float, c: float, tol: float = 1e-9) -> bool:
    return exp_cone_residual(a, b, c) <= tol


def soc_residual(head: float, tail) -> float:
    """Signed violation of ||tail|| <= head."""
    return float(np.linalg.norm(np.asarray(tail, dtype=float))) - head

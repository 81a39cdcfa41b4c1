"""Worst-case performance of the proximal point method as a dense SDP.

The decision variables are the Gram matrix G of the iterates x_0..x_N
(indices 0..N, with the minimizer fixed at the origin and f(x*) = 0) and
the vector F of function values f_1..f_N.  The objective is the squared
residual subgradient norm ||x_{N-1} - x_N||^2 / alpha_N^2, and the
constraints are the initial-distance cap together with the convex
interpolation inequalities with each subgradient eliminated through
g_i = (x_{i-1} - x_i)/alpha_i.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .schedule import StepSchedule

__all__ = [
    "ConstraintId",
    "QuadForm",
    "Constraint",
    "SdpInstance",
    "build_pep",
    "reduce_pep",
    "evaluate_feasibility",
    "evaluate_feasibility_gram",
]

RADIUS = "Radius"
F_NONNEG = "FNonneg"
AT_OPT = "AtOpt"
CROSS = "Cross"


@dataclass(frozen=True, order=True)
class ConstraintId:
    """Identity of one PEP constraint.

    kinds: Radius (||x_0||^2 <= R^2), FNonneg(i) (f_i >= 0), AtOpt(i)
    (subgradient inequality at x_i evaluated at the minimizer), Cross(i, j)
    (subgradient inequality at x_i evaluated at x_j).
    """

    kind: str
    i: int = 0
    j: int = 0

    def __post_init__(self):
        if self.kind not in (RADIUS, F_NONNEG, AT_OPT, CROSS):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind in (F_NONNEG, AT_OPT) and self.i < 1:
            raise ValueError(f"{self.kind} index must be >= 1, got {self.i}")
        if self.kind == CROSS:
            if self.i < 1 or self.j < 1:
                raise ValueError(f"Cross indices must be >= 1, got ({self.i}, {self.j})")
            if self.i == self.j:
                raise ValueError("Cross requires distinct indices")

    @classmethod
    def radius(cls) -> "ConstraintId":
        return cls(RADIUS)

    @classmethod
    def f_nonneg(cls, i: int) -> "ConstraintId":
        return cls(F_NONNEG, i)

    @classmethod
    def at_opt(cls, i: int) -> "ConstraintId":
        return cls(AT_OPT, i)

    @classmethod
    def cross(cls, i: int, j: int) -> "ConstraintId":
        return cls(CROSS, i, j)

    def __str__(self) -> str:
        if self.kind == RADIUS:
            return RADIUS
        if self.kind == CROSS:
            return f"Cross({self.i},{self.j})"
        return f"{self.kind}({self.i})"


class QuadForm:
    """Quadratic form sum_{a,b} M[a,b] <x_a, x_b> over Gram indices 0..N.

    The coefficient matrix is stored exactly symmetric (upper triangle
    mirrored), so value(G) = <M, G> for symmetric G.
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"quadratic form matrix must be square, got {m.shape}")
        upper = np.triu(m)
        self.matrix = upper + np.triu(m, 1).T

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def value(self, gram: np.ndarray) -> float:
        return float(np.sum(self.matrix * gram))

    @classmethod
    def zeros(cls, dim: int) -> "QuadForm":
        return cls(np.zeros((dim, dim)))

    @classmethod
    def inner(cls, u, v) -> "QuadForm":
        """Form representing <sum_a u_a x_a, sum_b v_b x_b>."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return cls(0.5 * (np.outer(u, v) + np.outer(v, u)))

    def __add__(self, other: "QuadForm") -> "QuadForm":
        return QuadForm(self.matrix + other.matrix)

    def __mul__(self, scalar: float) -> "QuadForm":
        return QuadForm(self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "QuadForm":
        return QuadForm(-self.matrix)


@dataclass(frozen=True)
class Constraint:
    """One PEP constraint, kept in its natural orientation.

    Reads as  quad(G) + lin . F  (sense)  rhs  with sense "<=" or ">=".
    """

    quad: QuadForm
    lin: np.ndarray
    rhs: float
    sense: str
    tag: ConstraintId

    def __post_init__(self):
        if self.sense not in ("<=", ">="):
            raise ValueError(f"sense must be '<=' or '>=', got {self.sense!r}")

    def lhs(self, gram: np.ndarray, fvec: np.ndarray) -> float:
        return self.quad.value(gram) + float(self.lin @ fvec)

    def slack(self, gram: np.ndarray, fvec: np.ndarray) -> float:
        """Nonnegative iff the constraint holds at (gram, fvec)."""
        v = self.lhs(gram, fvec)
        return self.rhs - v if self.sense == "<=" else v - self.rhs


@dataclass(frozen=True)
class SdpInstance:
    """Gram-form PEP: maximize objective over PSD G and free F."""

    schedule: StepSchedule
    radius: float
    objective_quad: QuadForm
    objective_lin: np.ndarray
    constraints: tuple[Constraint, ...]
    reduced: bool = False

    @property
    def gram_dim(self) -> int:
        return self.objective_quad.dim

    @property
    def fvec_dim(self) -> int:
        return len(self.objective_lin)

    def constraint(self, tag: ConstraintId) -> Constraint:
        for c in self.constraints:
            if c.tag == tag:
                return c
        raise KeyError(f"no constraint tagged {tag}")

    def tags(self) -> list[ConstraintId]:
        return [c.tag for c in self.constraints]

    def drop(self, tags) -> "SdpInstance":
        """Instance with the given constraint tags removed."""
        dropset = set(tags)
        kept = tuple(c for c in self.constraints if c.tag not in dropset)
        return SdpInstance(
            self.schedule, self.radius, self.objective_quad, self.objective_lin, kept, self.reduced
        )

    def normalized(self):
        """Solver view: (quads, lins, rhs) with every row flipped to '<='."""
        m = len(self.constraints)
        n = self.gram_dim
        quads = np.empty((m, n, n))
        lins = np.zeros((m, self.fvec_dim))
        rhs = np.empty(m)
        for k, c in enumerate(self.constraints):
            sign = 1.0 if c.sense == "<=" else -1.0
            quads[k] = sign * c.quad.matrix
            lins[k] = sign * c.lin
            rhs[k] = sign * c.rhs
        return quads, lins, rhs

    def to_json(self) -> str:
        doc = {
            "gram_dim": self.gram_dim,
            "fvec_dim": self.fvec_dim,
            "radius": self.radius,
            "alphas": list(self.schedule.alphas),
            "reduced": self.reduced,
            "objective": {
                "matrix": self.objective_quad.matrix.tolist(),
                "f_coefficients": self.objective_lin.tolist(),
            },
            "constraints": [
                {
                    "tag": str(c.tag),
                    "matrix": c.quad.matrix.tolist(),
                    "f_coefficients": c.lin.tolist(),
                    "rhs": c.rhs,
                    "sense": c.sense,
                }
                for c in self.constraints
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _unit(dim: int, idx: int) -> np.ndarray:
    v = np.zeros(dim)
    v[idx] = 1.0
    return v


def _subgradient_vector(sched: StepSchedule, dim: int, i: int) -> np.ndarray:
    # coefficient vector of g_i = (x_{i-1} - x_i)/alpha_i over x_0..x_N
    return (_unit(dim, i - 1) - _unit(dim, i)) / sched.alpha(i)


def build_pep(sched: StepSchedule, radius: float) -> SdpInstance:
    """Full Gram-form instance: 1 + N + N + N(N-1) constraints.

    The minimizer is pinned at the origin with optimal value 0, so it does
    not appear as a variable; its interpolation rows become f_i >= 0 and
    the AtOpt rows.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    N = len(sched)
    dim = N + 1
    fz = np.zeros(N)
    cons: list[Constraint] = []
    cons.append(
        Constraint(
            QuadForm.inner(_unit(dim, 0), _unit(dim, 0)),
            fz,
            radius**2,
            "<=",
            ConstraintId.radius(),
        )
    )
    for i in range(1, N + 1):
        cons.append(
            Constraint(QuadForm.zeros(dim), _unit(N, i - 1), 0.0, ">=", ConstraintId.f_nonneg(i))
        )
    for i in range(1, N + 1):
        g = _subgradient_vector(sched, dim, i)
        quad = QuadForm.inner(g, -_unit(dim, i))
        cons.append(Constraint(quad, _unit(N, i - 1), 0.0, "<=", ConstraintId.at_opt(i)))
    for i in range(1, N + 1):
        g = _subgradient_vector(sched, dim, i)
        for j in range(1, N + 1):
            if j == i:
                continue
            # f_j >= f_i + <g_i, x_j - x_i>, stored as f_j - f_i - <...> >= 0
            quad = -QuadForm.inner(g, _unit(dim, j) - _unit(dim, i))
            lin = _unit(N, j - 1) - _unit(N, i - 1)
            cons.append(Constraint(quad, lin, 0.0, ">=", ConstraintId.cross(i, j)))
    d = _unit(dim, N - 1) - _unit(dim, N)
    objective = QuadForm.inner(d, d) * (1.0 / sched.alpha(N) ** 2)
    return SdpInstance(sched, float(radius), objective, fz.copy(), tuple(cons))


def reduce_pep(inst: SdpInstance) -> SdpInstance:
    """Drop FNonneg(i) for i <= N-1 and Cross(i, j) with |i - j| >= 2.

    Exactly 3N constraints remain; at the worst-case instance these are
    the active ones.
    """
    N = inst.fvec_dim
    kept = []
    for c in inst.constraints:
        t = c.tag
        if t.kind == F_NONNEG and t.i <= N - 1:
            continue
        if t.kind == CROSS and abs(t.i - t.j) >= 2:
            continue
        kept.append(c)
    assert len(kept) == 3 * N
    return SdpInstance(
        inst.schedule, inst.radius, inst.objective_quad, inst.objective_lin, tuple(kept), True
    )


def evaluate_feasibility_gram(inst: SdpInstance, gram, fvec) -> dict[ConstraintId, float]:
    """Per-constraint slack of an explicit (G, F) point; negative = violated."""
    gram = np.asarray(gram, dtype=float)
    fvec = np.asarray(fvec, dtype=float)
    if gram.shape != (inst.gram_dim, inst.gram_dim):
        raise ValueError(f"Gram matrix shape {gram.shape} != {(inst.gram_dim, inst.gram_dim)}")
    if fvec.shape != (inst.fvec_dim,):
        raise ValueError(f"value vector shape {fvec.shape} != {(inst.fvec_dim,)}")
    return {c.tag: c.slack(gram, fvec) for c in inst.constraints}


def evaluate_feasibility(inst: SdpInstance, traj) -> dict[ConstraintId, float]:
    """Per-constraint slack of a PPA trajectory (PPA data is always feasible).

    The trajectory's Gram matrix is formed in its own metric, which is the
    change of variables mapping metric-B runs onto this Euclidean instance.
    """
    if len(traj.schedule) != inst.fvec_dim:
        raise ValueError(
            f"trajectory has {len(traj.schedule)} steps, instance expects {inst.fvec_dim}"
        )
    return evaluate_feasibility_gram(inst, traj.gram(), traj.fvals)

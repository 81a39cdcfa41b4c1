"""Machine check of the analytical dual certificate for the PPA rate.

For any positive step schedule, the residual subgradient after N proximal
steps satisfies ||g_N|| <= R / alpha_{1:N}.  The certificate consists of

  * explicit nonnegative Lagrange multipliers, one per constraint of the
    reduced Gram-form PEP, indexed through the schedule's separator s;
  * the observation that every function value cancels in the multiplier
    aggregation, leaving  objective <= 1/alpha_{1:N}^2 - Q(G)  for a
    quadratic form Q (the dual slack matrix);
  * an explicit weighted-square decomposition of Q, split into three cases
    by the position of the separator, proving Q is positive semidefinite.

`certify` runs all four checks for a given schedule; together they
machine-verify the bound at radius 1 (both sides scale by R^2).

Step lengths are IEEE doubles and therefore exact binary rationals, so the
multipliers, the aggregation, and the square decomposition are evaluated in
exact rational arithmetic; cancellation residuals and the reconstruction
error are exact, and floats appear only in the reported values.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import eiglib
from .pep import ConstraintId, QuadForm
from .schedule import StepSchedule

__all__ = [
    "CertificateError",
    "MultiplierSet",
    "SosTerm",
    "SosDecomposition",
    "CertificateReport",
    "RecoveredCoefficients",
    "multipliers",
    "f_cancellation_check",
    "dual_slack_matrix",
    "sos_decompose",
    "certify",
    "recover_bound_coefficients",
]

_ZERO = Fraction(0)
_ONE = Fraction(1)


class CertificateError(RuntimeError):
    """A certificate construction step failed its internal validation."""


class _ExactSums:
    """Exact rational partial sums of a schedule."""

    def __init__(self, sched: StepSchedule):
        self.sched = sched
        self.a = [Fraction(x) for x in sched.alphas]
        self.N = len(self.a)
        pref = [_ZERO]
        for x in self.a:
            pref.append(pref[-1] + x)
        self._pref = pref

    def alpha(self, i: int) -> Fraction:
        return self.a[i - 1]

    def p(self, i: int, j: int) -> Fraction:
        """alpha_{i:j}, 0 when i > j."""
        if i > j:
            return _ZERO
        return self._pref[j] - self._pref[i - 1]

    @property
    def total(self) -> Fraction:
        return self._pref[self.N]


def _sym_outer_sparse(u: dict[int, Fraction], v: dict[int, Fraction]) -> dict[tuple[int, int], Fraction]:
    """Upper-triangle entries of (u v^T + v u^T)/2."""
    out: dict[tuple[int, int], Fraction] = {}
    for a, ua in u.items():
        for b, vb in v.items():
            key = (a, b) if a <= b else (b, a)
            val = ua * vb if a == b else ua * vb / 2
            out[key] = out.get(key, _ZERO) + val
    return out


def _exact_reduced_rows(ex: _ExactSums):
    """The 3N reduced constraints with exact coefficients.

    Yields (tag, quad upper-triangle dict, f-coefficient dict, sense); all
    right-hand sides are 0 except the radius row (rhs 1 at radius 1).
    """
    N = ex.N
    rows = []
    rows.append((ConstraintId.radius(), {(0, 0): _ONE}, {}, "<="))
    rows.append((ConstraintId.f_nonneg(N), {}, {N: _ONE}, ">="))
    for i in range(1, N + 1):
        g = {i - 1: 1 / ex.alpha(i), i: -1 / ex.alpha(i)}
        quad = _sym_outer_sparse(g, {i: -_ONE})
        rows.append((ConstraintId.at_opt(i), quad, {i: _ONE}, "<="))
    for i in range(1, N + 1):
        g = {i - 1: 1 / ex.alpha(i), i: -1 / ex.alpha(i)}
        for j in (i - 1, i + 1):
            if j < 1 or j > N:
                continue
            diff = {j: _ONE, i: -_ONE} if j != i else {}
            quad = {k: -v for k, v in _sym_outer_sparse(g, diff).items()}
            rows.append((ConstraintId.cross(i, j), quad, {j: _ONE, i: -_ONE}, ">="))
    return rows


@dataclass(frozen=True)
class MultiplierSet:
    """Dual multipliers of the reduced-instance constraints.

    Exactly the 3N reduced constraints carry entries; N-1 of them are zero
    (AtOpt beyond the separator and the forward cross rows before it).
    `values` holds floats for reporting, `exact` the underlying rationals.
    """

    schedule: StepSchedule
    separator: int
    values: dict[ConstraintId, float]
    exact: dict[ConstraintId, Fraction] = field(repr=False, default_factory=dict)

    def __getitem__(self, tag: ConstraintId) -> float:
        return self.values[tag]

    def min_value(self) -> float:
        return min(self.values.values())

    def to_json(self) -> str:
        doc = {
            "separator": self.separator,
            "multipliers": {str(tag): v for tag, v in self.values.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def multipliers(sched: StepSchedule) -> MultiplierSet:
    """Evaluate the analytical multiplier table at the given schedule.

    The separator inequalities make every entry nonnegative: the rows
    before s lean on alpha_{1:i} <= alpha_{i+1:N}, the rows from s on
    alpha_{1:i} > alpha_{i+1:N}, and the separator row itself on
    alpha_{1:s-1} <= alpha_{s:N}.
    """
    ex = _ExactSums(sched)
    N = ex.N
    s = sched.separator().s
    p, a, total = ex.p, ex.alpha, ex.total
    lam: dict[ConstraintId, Fraction] = {}
    lam[ConstraintId.radius()] = 1 / total**2
    for i in range(1, s):
        lam[ConstraintId.at_opt(i)] = 2 * a(i) / (p(i, N) * p(i + 1, N))
    lam[ConstraintId.at_opt(s)] = 2 * (p(s, N) - p(1, s - 1)) / (total * p(s, N))
    for i in range(s + 1, N + 1):
        lam[ConstraintId.at_opt(i)] = _ZERO
    # backward rows: f_i >= f_{i+1} + <g_{i+1}, x_i - x_{i+1}>
    for i in range(1, s):
        lam[ConstraintId.cross(i + 1, i)] = 2 * p(1, i) / (total * p(i + 1, N))
    for i in range(s, N):
        lam[ConstraintId.cross(i + 1, i)] = 2 * (p(1, i) - p(i + 2, N)) / (total * a(i + 1))
    # forward rows: f_{i+1} >= f_i + <g_i, x_{i+1} - x_i>
    for i in range(1, s):
        lam[ConstraintId.cross(i, i + 1)] = _ZERO
    for i in range(s, N):
        lam[ConstraintId.cross(i, i + 1)] = 2 * (p(1, i) - p(i + 1, N)) / (total * a(i + 1))
    lam[ConstraintId.f_nonneg(N)] = 2 / total
    return MultiplierSet(sched, s, {t: float(v) for t, v in lam.items()}, lam)


def _exact_multipliers(ms: MultiplierSet) -> dict[ConstraintId, Fraction]:
    if ms.exact:
        return ms.exact
    return {t: Fraction(v) for t, v in ms.values.items()}


def f_cancellation_check(ms: MultiplierSet) -> np.ndarray:
    """Signed multiplier mass hitting each f_i; must vanish componentwise.

    Each reduced constraint contributes lambda times its f_i coefficient,
    '<=' and '>=' rows entering with opposite signs (the orientation under
    which the aggregated inequality bounds the objective).  Computed in
    exact arithmetic, so true cancellations are exact zeros.
    """
    ex = _ExactSums(ms.schedule)
    lam = _exact_multipliers(ms)
    residual = [_ZERO] * ex.N
    for tag, _quad, fcoef, sense in _exact_reduced_rows(ex):
        sign = 1 if sense == "<=" else -1
        for idx, coef in fcoef.items():
            residual[idx - 1] += sign * lam[tag] * coef
    return np.array([float(r) for r in residual])


def _exact_slack_entries(ms: MultiplierSet) -> dict[tuple[int, int], Fraction]:
    ex = _ExactSums(ms.schedule)
    lam = _exact_multipliers(ms)
    N = ex.N
    acc: dict[tuple[int, int], Fraction] = {}

    def add(entries: dict[tuple[int, int], Fraction], factor: Fraction):
        if factor == 0:
            return
        for key, val in entries.items():
            acc[key] = acc.get(key, _ZERO) + factor * val

    # minus the objective ||x_{N-1} - x_N||^2 / alpha_N^2
    d = {N - 1: 1 / ex.alpha(N), N: -1 / ex.alpha(N)}
    add(_sym_outer_sparse(d, d), Fraction(-1))
    for tag, quad, _fcoef, sense in _exact_reduced_rows(ex):
        sign = 1 if sense == "<=" else -1
        add(quad, sign * lam[tag])
    return acc


def _dense_float(entries: dict[tuple[int, int], Fraction], dim: int) -> np.ndarray:
    m = np.zeros((dim, dim))
    for (a, b), val in entries.items():
        v = float(val)
        m[a, b] = v
        m[b, a] = v
    return m


def dual_slack_matrix(ms: MultiplierSet) -> QuadForm:
    """Aggregate the multiplied constraints minus the objective.

    The result Q satisfies  objective(G) <= 1/alpha_{1:N}^2 - Q(G)  at
    every feasible point, so Q being PSD proves the squared bound at R=1.
    Refuses to aggregate when the function values do not cancel.
    """
    residual = f_cancellation_check(ms)
    if np.any(residual != 0.0):
        raise CertificateError(
            f"function values do not cancel (max residual {np.max(np.abs(residual)):.3e})"
        )
    return QuadForm(_dense_float(_exact_slack_entries(ms), len(ms.schedule) + 1))


@dataclass(frozen=True)
class SosTerm:
    weight: float
    coefficients: np.ndarray  # over x_0..x_N

    def matrix(self) -> np.ndarray:
        return self.weight * np.outer(self.coefficients, self.coefficients)


@dataclass(frozen=True)
class SosDecomposition:
    """Weighted squares sum_k w_k || sum_a c_{k,a} x_a ||^2 reproducing Q."""

    case: str  # "I" (s=1), "II" (1 < s < N), "III" (s=N)
    separator: int
    terms: tuple[SosTerm, ...]
    exact_terms: tuple[tuple[Fraction, dict[int, Fraction]], ...] = field(repr=False, default=())

    def matrix(self, dim: int) -> np.ndarray:
        acc = np.zeros((dim, dim))
        for t in self.terms:
            acc += t.matrix()
        return acc

    def exact_entries(self) -> dict[tuple[int, int], Fraction]:
        acc: dict[tuple[int, int], Fraction] = {}
        for w, cv in self.exact_terms:
            if w == 0:
                continue
            for key, val in _sym_outer_sparse(cv, cv).items():
                acc[key] = acc.get(key, _ZERO) + w * val
        return acc

    def min_weight(self) -> float:
        return min((t.weight for t in self.terms), default=0.0)

    def to_rows(self) -> list[dict]:
        return [
            {"weight": t.weight, "coefficients": t.coefficients.tolist()} for t in self.terms
        ]

    def to_json(self) -> str:
        return json.dumps(
            {"case": self.case, "separator": self.separator, "squares": self.to_rows()},
            indent=2,
            sort_keys=True,
        )


def sos_decompose(sched: StepSchedule) -> SosDecomposition:
    """Explicit weighted-square decomposition of the dual slack matrix.

    Case I: s = 1 (front-loaded schedules); case II: 1 < s < N; case III:
    s = N.  Every weight is nonnegative by the separator inequalities.
    Zero-weight squares are kept so the output shape is stable.  For N = 1
    the leading case-III square is dropped (its trailing denominator
    alpha_{2:1} is an empty sum); the remaining square already reproduces
    the aggregate exactly.
    """
    ex = _ExactSums(sched)
    N = ex.N
    dim = N + 1
    s = sched.separator().s
    p, a, total = ex.p, ex.alpha, ex.total
    exact: list[tuple[Fraction, dict[int, Fraction]]] = []

    def chain_square(i: int):
        # || x_i / alpha_{i+1:N} - x_{i+1} / alpha_{i+2:N} ||^2
        w = (a(i + 1) * total + 2 * p(1, i) * p(i + 2, N)) / (total * a(i + 1))
        exact.append((w, {i: 1 / p(i + 1, N), i + 1: -1 / p(i + 2, N)}))

    def telescope_square(i: int):
        w = (p(1, i) - p(i + 1, N)) / total
        c = {
            i - 1: 1 / a(i),
            i: -(a(i) + a(i + 1)) / (a(i) * a(i + 1)),
            i + 1: 1 / a(i + 1),
        }
        exact.append((w, c))

    if s == N:
        case = "III"
        if N >= 2:
            exact.append((_ONE, {0: 1 / total, 1: -1 / p(2, N)}))
        for i in range(1, N - 1):
            chain_square(i)
        exact.append(((a(N) - p(1, N - 1)) / (total * a(N) ** 2), {N: _ONE}))
    elif s == 1:
        case = "I"
        c = {
            0: 1 / total,
            1: -(a(1) - p(3, N)) / (a(1) * a(2)),
            2: (a(1) - p(2, N)) / (a(1) * a(2)),
        }
        exact.append((_ONE, c))
        exact.append(
            (
                (a(1) - p(2, N)) / (total * a(1) ** 2 * a(2) ** 2),
                {1: p(3, N), 2: -p(2, N)},
            )
        )
        for i in range(2, N):
            telescope_square(i)
    else:
        case = "II"
        exact.append((_ONE, {0: 1 / total, 1: -1 / p(2, N)}))
        for i in range(1, s - 1):
            chain_square(i)
        den = a(s) * total + 2 * p(1, s - 1) * p(s + 1, N)
        gap = p(1, s) - p(s + 1, N)
        c = {
            s - 1: 1 / p(s, N),
            s: -(a(s + 1) * total + p(s, N) * gap) / (a(s + 1) * den),
            s + 1: p(s, N) * gap / (a(s + 1) * den),
        }
        exact.append((den / (total * a(s)), c))
        w = gap * (p(s, N) - p(1, s - 1)) / (total * a(s) * a(s + 1) ** 2 * den)
        exact.append((w, {s: p(s + 2, N), s + 1: -p(s + 1, N)}))
        for i in range(s + 1, N):
            telescope_square(i)

    terms = []
    for w, cv in exact:
        vec = np.zeros(dim)
        for idx, val in cv.items():
            vec[idx] = float(val)
        terms.append(SosTerm(float(w), vec))
    return SosDecomposition(case, s, tuple(terms), tuple(exact))


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of the four certificate checks for one schedule."""

    alphas: tuple[float, ...]
    separator: int
    case: str
    bound: float  # squared-norm bound 1/alpha_{1:N}^2 at radius 1
    multipliers_ok: bool
    cancellation_ok: bool
    psd_ok: bool
    sos_match_ok: bool
    min_multiplier: float
    cancellation_residual: float
    # smallest eigenvalue of the diagonally equilibrated aggregate (a
    # congruence, so it is nonnegative iff the aggregate is PSD); the raw
    # aggregate can carry entries ~1/alpha^2 whose rounding alone exceeds
    # an absolute eigenvalue tolerance
    min_eigenvalue: float
    sos_error: float
    note: str = "bound holds at radius 1; for radius R both sides scale by R^2"

    def all_ok(self) -> bool:
        return self.multipliers_ok and self.cancellation_ok and self.psd_ok and self.sos_match_ok

    def failing_checks(self) -> list[str]:
        out = []
        if not self.multipliers_ok:
            out.append(f"multipliers (min {self.min_multiplier:.3e})")
        if not self.cancellation_ok:
            out.append(f"cancellation (residual {self.cancellation_residual:.3e})")
        if not self.psd_ok:
            out.append(f"psd (min eigenvalue {self.min_eigenvalue:.3e})")
        if not self.sos_match_ok:
            out.append(f"sos (entrywise error {self.sos_error:.3e})")
        return out

    def to_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "separator": self.separator,
            "case": self.case,
            "bound": self.bound,
            "checks": {
                "multipliers_ok": self.multipliers_ok,
                "cancellation_ok": self.cancellation_ok,
                "psd_ok": self.psd_ok,
                "sos_match_ok": self.sos_match_ok,
            },
            "residuals": {
                "min_multiplier": self.min_multiplier,
                "cancellation_residual": self.cancellation_residual,
                "min_eigenvalue": self.min_eigenvalue,
                "sos_error": self.sos_error,
            },
            "note": self.note,
            "verified": self.all_ok(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def certify(
    sched: StepSchedule,
    cancellation_tol: float = 1e-12,
    psd_tol: float = 1e-10,
    sos_tol: float = 1e-10,
) -> CertificateReport:
    """Machine-verify the squared subgradient-norm bound for one schedule.

    Passing all four checks establishes ||g_N||^2 <= 1/alpha_{1:N}^2 at
    radius 1 for this schedule, with no SDP solve involved.  Multiplier
    signs, cancellation, and the square reconstruction are exact rational
    checks; the PSD check runs the in-repo eigensolver on the rounded
    aggregate as an independent numeric confirmation.
    """
    ms = multipliers(sched)
    exact_lam = _exact_multipliers(ms)
    min_mult_exact = min(exact_lam.values())
    residual = f_cancellation_check(ms)
    residual_max = float(np.max(np.abs(residual)))
    slack_entries = _exact_slack_entries(ms)
    slack = QuadForm(_dense_float(slack_entries, len(sched) + 1))
    # equilibrate (scale down, never up) before the eigencheck so the
    # absolute tolerance stays meaningful for schedules with tiny steps
    dscale = 1.0 / np.sqrt(np.maximum(np.diag(slack.matrix), 1.0))
    min_eig = eiglib.min_eigenvalue(slack.matrix * dscale[:, None] * dscale[None, :])
    dec = sos_decompose(sched)
    min_weight_exact = min((w for w, _ in dec.exact_terms), default=_ZERO)
    recon = dec.exact_entries()
    keys = set(slack_entries) | set(recon)
    diff = [slack_entries.get(k, _ZERO) - recon.get(k, _ZERO) for k in keys]
    sos_error = float(max((abs(d) for d in diff), default=_ZERO))
    return CertificateReport(
        alphas=sched.alphas,
        separator=ms.separator,
        case=dec.case,
        bound=1.0 / sched.total**2,
        multipliers_ok=min_mult_exact >= 0,
        cancellation_ok=residual_max <= cancellation_tol,
        psd_ok=min_eig >= -psd_tol,
        sos_match_ok=(sos_error <= sos_tol and min_weight_exact >= 0),
        min_multiplier=float(min_mult_exact),
        cancellation_residual=residual_max,
        min_eigenvalue=min_eig,
        sos_error=sos_error,
    )


@dataclass(frozen=True)
class RecoveredCoefficients:
    """Affine/affine rational fit  bound ~= (c0 + c.alpha)/(d0 + d.alpha)."""

    numerator_constant: float
    numerator: np.ndarray
    denominator_constant: float
    denominator: np.ndarray
    singular_values: np.ndarray
    nullspace_dim: int

    def scaled(self) -> "RecoveredCoefficients":
        """Canonical scaling: the largest |denominator entry| becomes 1."""
        den = np.concatenate(([self.denominator_constant], self.denominator))
        k = int(np.argmax(np.abs(den)))
        pivot = den[k]
        if pivot == 0.0:
            raise CertificateError("cannot scale: denominator is identically zero")
        return RecoveredCoefficients(
            self.numerator_constant / pivot,
            self.numerator / pivot,
            self.denominator_constant / pivot,
            self.denominator / pivot,
            self.singular_values,
            self.nullspace_dim,
        )


def recover_bound_coefficients(samples, rank_rel_tol: float = 1e-6) -> RecoveredCoefficients:
    """Fit observed bounds by a quotient of two affine functions of alpha.

    Each sample (schedule, bound) contributes one homogeneous equation
    numerator(alpha) - bound * denominator(alpha) = 0; the coefficient ray
    is the smallest singular direction of the stacked system.  When the
    data leave more than one direction (e.g. constant bounds), the
    representative with the least non-constant coefficient mass is
    returned and the degeneracy is reported via `nullspace_dim` and
    `singular_values`.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("no samples given")
    n = len(samples[0][0])
    if any(len(sched) != n for sched, _ in samples):
        raise ValueError("all sample schedules must have the same length")
    if len(samples) < n + 1:
        raise ValueError(f"need at least N+1 = {n + 1} samples, got {len(samples)}")
    rows = np.empty((len(samples), 2 * n + 2))
    for r, (sched, bound) in enumerate(samples):
        al = np.asarray(sched.alphas if isinstance(sched, StepSchedule) else sched, dtype=float)
        rows[r, 0] = 1.0
        rows[r, 1 : n + 1] = al
        rows[r, n + 1] = -bound
        rows[r, n + 2 :] = -bound * al
    _, sig, vt = np.linalg.svd(rows, full_matrices=True)
    sig_full = np.zeros(2 * n + 2)
    sig_full[: sig.size] = sig
    cutoff = rank_rel_tol * sig_full[0]
    null_mask = sig_full <= cutoff
    null_dim = int(np.sum(null_mask))
    if null_dim == 0:
        raise CertificateError(
            "samples are not consistent with an affine/affine quotient "
            f"(smallest/largest singular value = {sig_full[-1] / sig_full[0]:.3e})"
        )
    basis = vt[null_mask]
    if null_dim == 1:
        u = basis[0]
    else:
        # minimize the non-constant coefficient mass inside the nullspace
        mask = np.ones(2 * n + 2, dtype=bool)
        mask[0] = False
        mask[n + 1] = False
        gram = basis[:, mask] @ basis[:, mask].T
        w, vecs = eiglib.eigh(gram)
        u = vecs[:, 0] @ basis
        u = u / np.linalg.norm(u)
    # deterministic sign: largest |denominator coefficient| positive
    den = u[n + 1 :]
    k = int(np.argmax(np.abs(den)))
    if den[k] < 0:
        u = -u
    return RecoveredCoefficients(
        numerator_constant=float(u[0]),
        numerator=u[1 : n + 1].copy(),
        denominator_constant=float(u[n + 1]),
        denominator=u[n + 2 :].copy(),
        singular_values=sig_full,
        nullspace_dim=null_dim,
    )

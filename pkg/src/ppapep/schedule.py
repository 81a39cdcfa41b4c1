"""Step-length schedules for the proximal point method.

A schedule is an ordered list of positive step lengths alpha_1..alpha_N.
Partial sums follow the convention

    alpha_{i:j} = sum_{k=i}^{j} alpha_k,   with value 0 whenever i > j,

and the *separator* is the unique index s at which the leading step mass
first exceeds the trailing mass:

    alpha_{1:s} > alpha_{s+1:N}   and   alpha_{1:s-1} <= alpha_{s:N}.

All indices in the public API are 1-based.  Partial sums are evaluated with
compensated summation (math.fsum), so comparisons in the separator scan are
exact up to one correctly-rounded sum per side.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = ["ScheduleError", "StepSchedule", "Separator", "random_schedule"]


class ScheduleError(ValueError):
    """Invalid schedule data.  `index` is the offending 1-based position, if any."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class Separator:
    """Index where the leading step mass first exceeds the trailing mass."""

    s: int


class StepSchedule:
    """Immutable sequence of positive step lengths with partial-sum services."""

    __slots__ = ("_alphas", "_prefix", "_suffix")

    def __init__(self, alphas):
        vals = [float(a) for a in np.asarray(list(alphas), dtype=float).ravel()]
        if not vals:
            raise ScheduleError("schedule must contain at least one step length")
        for k, a in enumerate(vals, start=1):
            if not math.isfinite(a) or a <= 0.0:
                raise ScheduleError(
                    f"step length at index {k} must be positive and finite, got {a!r}",
                    index=k,
                )
        self._alphas = tuple(vals)
        n = len(vals)
        # prefix[i] = alpha_{1:i}; suffix[i] = alpha_{i+1:N}
        self._prefix = tuple(math.fsum(vals[:i]) for i in range(n + 1))
        self._suffix = tuple(math.fsum(vals[i:]) for i in range(n + 1))

    @property
    def alphas(self) -> tuple[float, ...]:
        return self._alphas

    def __len__(self) -> int:
        return len(self._alphas)

    def __iter__(self):
        return iter(self._alphas)

    def __repr__(self) -> str:
        return f"StepSchedule({list(self._alphas)!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, StepSchedule) and other._alphas == self._alphas

    def __hash__(self) -> int:
        return hash(self._alphas)

    def alpha(self, i: int) -> float:
        """Step length alpha_i (1-based)."""
        if not 1 <= i <= len(self._alphas):
            raise ScheduleError(f"step index {i} outside [1, {len(self._alphas)}]", index=i)
        return self._alphas[i - 1]

    @property
    def total(self) -> float:
        """alpha_{1:N}."""
        return self._prefix[len(self._alphas)]

    def partial_sum(self, i: int, j: int) -> float:
        """alpha_{i:j}; returns 0.0 when i > j.

        Valid index domain is 1 <= i <= N+1 and 0 <= j <= N, which makes
        every quantity of the separator definition expressible (alpha_{1:0}
        and alpha_{N+1:N} are both empty sums).
        """
        n = len(self._alphas)
        if not (1 <= i <= n + 1 and 0 <= j <= n):
            raise ScheduleError(
                f"partial-sum indices ({i}, {j}) outside the valid domain for N={n}"
            )
        if i > j:
            return 0.0
        if i == 1:
            return self._prefix[j]
        if j == n:
            return self._suffix[i - 1]
        return math.fsum(self._alphas[i - 1 : j])

    def separator(self) -> Separator:
        """The unique separator index (left-to-right scan, exact comparisons)."""
        n = len(self._alphas)
        for s in range(1, n + 1):
            if self.partial_sum(1, s) > self.partial_sum(s + 1, n):
                return Separator(s)
        # total mass is positive, so s = N always satisfies the scan
        raise AssertionError("separator scan failed; schedule invariant violated")

    def as_array(self) -> np.ndarray:
        return np.array(self._alphas, dtype=float)

    def to_json(self) -> str:
        return json.dumps({"alphas": list(self._alphas)})

    @classmethod
    def from_json(cls, text: str) -> "StepSchedule":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScheduleError(f"invalid schedule JSON: {exc}") from exc
        if not isinstance(doc, dict) or "alphas" not in doc:
            raise ScheduleError('schedule JSON must be an object with an "alphas" array')
        raw = doc["alphas"]
        if not isinstance(raw, list) or not raw:
            raise ScheduleError('"alphas" must be a non-empty array of positive numbers')
        for k, a in enumerate(raw, start=1):
            if not isinstance(a, (int, float)) or isinstance(a, bool):
                raise ScheduleError(f'"alphas" entry at index {k} is not a number', index=k)
        return cls(raw)


def random_schedule(n: int, rng: np.random.Generator) -> StepSchedule:
    """Schedule of n steps drawn uniformly from (0, 1]."""
    if n < 1:
        raise ScheduleError("schedule length must be at least 1")
    return StepSchedule(1.0 - rng.random(n))

"""Discrete mortality tables, survival probabilities and survivor counts."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.special import errstate as special_errstate
from scipy.special import gammaln, xlogy
from scipy.stats import binom

from .errors import DomainError, ExhaustedTable, NegativeProbability, OffGrid, ParseError, ValidationError

# Gompertz--Makeham force of mortality A + B exp(b x) used for the bundled tables.
GOMPERTZ_MAKEHAM = {
    "female": dict(A=5e-4, B=4.0e-6, b=0.11),
    "male": dict(A=5e-4, B=5.5e-6, b=0.11),
}


@dataclass(frozen=True)
class MortalityTable:
    """Unconditional probabilities ``p[j]`` of dying in ``(t_j, t_j + delta_t]``.

    ``t_j = t0 + j * delta_t``. Probabilities are normalised on construction
    and the last entry is the probability of surviving to the final grid
    point, so the horizon is finite.
    """

    t0: float
    delta_t: float
    p: tuple

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ValidationError("delta_t must be positive")
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValidationError("need at least one probability")
        if not np.all(np.isfinite(p)):
            raise ParseError("probabilities must be finite")
        if np.any(p < 0):
            raise NegativeProbability(f"negative probability at index {int(np.argmax(p < 0))}")
        total = p.sum()
        if not total > 0:
            raise ValidationError("probabilities sum to zero")
        object.__setattr__(self, "p", tuple(p / total))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.delta_t * np.arange(len(self.p))

    @property
    def horizon(self) -> float:
        return self.t0 + self.delta_t * (len(self.p) - 1)

    def index(self, t: float) -> int:
        j = (t - self.t0) / self.delta_t
        jr = round(j)
        if not math.isclose(j, jr, abs_tol=1e-9) or not 0 <= jr < len(self.p):
            raise OffGrid(f"t={t} is not on the grid {self.t0} + k*{self.delta_t}")
        return int(jr)

    def tail(self) -> np.ndarray:
        """``tail[j]`` = probability of being alive at ``t_j``."""
        return np.cumsum(np.asarray(self.p)[::-1])[::-1]

    def survival(self) -> np.ndarray:
        """One-step survival probabilities ``s_t`` at every grid time.

        ``s`` is 0 at the final grid point and wherever the table is
        exhausted.
        """
        tail = self.tail()
        nxt = np.append(tail[1:], 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(tail > 0, nxt / np.where(tail > 0, tail, 1.0), 0.0)
        return np.clip(s, 0.0, 1.0)

    def from_age(self, age: float) -> "MortalityTable":
        """Table conditioned on being alive at grid time ``age``."""
        j = self.index(age)
        rest = np.asarray(self.p[j:])
        if not rest.sum() > 0:
            raise ExhaustedTable(f"no survivors left at t={age}")
        return MortalityTable(float(self.times[j]), self.delta_t, tuple(rest))

    def life_expectancy(self) -> float:
        """Curtate expectation of the number of further grid steps, times delta_t."""
        return float(np.dot(np.arange(len(self.p)), self.p) * self.delta_t)


def survival_prob(table: MortalityTable, t: float) -> float:
    """Probability of surviving from ``t`` to ``t + delta_t``."""
    j = table.index(t)
    tail = table.tail()
    if not tail[j] > 0:
        raise ExhaustedTable(f"no survivors left at t={t}")
    after = tail[j + 1] if j + 1 < tail.size else 0.0
    return float(min(1.0, after / tail[j]))


def log_binomial_transition(n, i, s):
    """Log of ``C(n, i) s**i (1 - s)**(n - i)``; vectorised over ``n`` and ``i``.

    Uses the directly evaluated pmf where it is representable (accurate to
    rounding, so rows sum to one) and the log-gamma form in the underflow tail.
    """
    n = np.asarray(n)
    i = np.asarray(i)
    if np.any(i > n) or np.any(i < 0):
        raise DomainError("need 0 <= i <= n")
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"survival probability {s} outside [0, 1]")
    try:
        with special_errstate(all="ignore"):
            pmf = binom.pmf(i, n, s)
    except OverflowError:
        # boost gives up for subnormal s; the log-gamma form is fine there
        pmf = np.zeros(np.broadcast(n, i).shape)
    with np.errstate(divide="ignore"):
        direct = np.log(pmf)
    tail = (gammaln(n + 1.0) - gammaln(i + 1.0) - gammaln(n - i + 1.0)
            + xlogy(i, s) + xlogy(n - i, 1.0 - s))
    return np.where(pmf > 1e-280, direct, tail)


def binomial_transition(n: int, i, s: float):
    """Probability that exactly ``i`` of ``n`` independent lives survive a step."""
    out = np.exp(log_binomial_transition(n, i, s))
    return float(out) if np.ndim(out) == 0 else out


def _parse(text: str, name: str) -> MortalityTable:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if rows and [c.strip().lower() for c in rows[0]] == ["t", "p"]:
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{name}: no data rows")
    try:
        t = np.array([float(r[0]) for r in rows])
        p = np.array([float(r[1]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{name}: rows must be 't,p' numbers ({exc})") from None
    if len(rows) and any(len(r) != 2 for r in rows):
        raise ParseError(f"{name}: expected two columns")
    if np.any(p < 0):
        bad = int(np.argmax(p < 0))
        raise NegativeProbability(f"{name}: negative probability at t={t[bad]}")
    if t.size == 1:
        return MortalityTable(float(t[0]), 1.0, tuple(p))
    d = np.diff(t)
    if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
        raise ParseError(f"{name}: times must be strictly increasing with constant spacing")
    return MortalityTable(float(t[0]), float(d[0]), tuple(p))


def load_table(path) -> MortalityTable:
    """Read a ``t,p`` CSV file into a normalised table."""
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read mortality table {path}: {exc.strerror}") from None
    return _parse(text, str(path))


def bundled_table(sex: str = "female") -> MortalityTable:
    """Gompertz--Makeham table for ages 60..120 shipped with the package."""
    if sex not in GOMPERTZ_MAKEHAM:
        raise ValidationError(f"sex must be 'female' or 'male', got {sex!r}")
    text = resources.files("tontine.data").joinpath(f"{sex}_2019.csv").read_text()
    return _parse(text, f"{sex}_2019.csv")


def gompertz_makeham_table(A: float, B: float, b: float, age0: int = 60, age_max: int = 120) -> MortalityTable:
    """Yearly table from the force of mortality ``A + B exp(b x)``."""
    ages = np.arange(age0, age_max + 1, dtype=float)
    cum = A * (ages - age0) + B / b * (np.exp(b * ages) - np.exp(b * age0))
    alive = np.exp(-cum)
    p = np.append(alive[:-1] - alive[1:], alive[-1])
    return MortalityTable(float(age0), 1.0, tuple(p))

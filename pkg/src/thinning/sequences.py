"""Mark sequences: Bernoulli-p thinning, Cox sequence sampling, exchangeability probes.

A Cox sequence reads the marks of a Poisson process on the line with
intensity ``e^x gamma(dx x du)`` in position order, where ``gamma`` has
Lebesgue position marginal and is itself drawn from a shift-stationary law.
Such sequences are thinning invariant but need not be exchangeable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DomainError, InsufficientLength, ShortfallAfterThinning
from .gaps import required_length
from .point_process import ExpTilt, invert_mass
from .seeding import SeedLike, as_generator
from .stats import TestReport, _seed_record, proportion_difference_test


@dataclass(frozen=True)
class MarkSpace:
    """``Categorical(k)`` marks are the integers ``0..k-1``; ``UnitInterval`` marks are reals in [0,1]."""

    kind: str
    size: int = 0

    def __post_init__(self):
        if self.kind not in ("categorical", "unit"):
            raise ValueError(f"unknown mark space {self.kind!r}")
        if self.kind == "categorical" and self.size < 2:
            raise ValueError("a categorical mark space needs at least two symbols")

    @classmethod
    def categorical(cls, k: int) -> "MarkSpace":
        return cls("categorical", int(k))

    @classmethod
    def unit_interval(cls) -> "MarkSpace":
        return cls("unit")

    def contains(self, marks) -> bool:
        m = np.asarray(marks)
        if self.kind == "categorical":
            return bool(np.all((m == np.floor(m)) & (m >= 0) & (m < self.size)))
        return bool(np.all((m >= 0) & (m <= 1)))

    def to_record(self) -> dict:
        return {"kind": self.kind, "size": self.size}


@dataclass(frozen=True, eq=False)
class MarkedSequence:
    marks: np.ndarray
    space: MarkSpace = field(default_factory=lambda: MarkSpace.categorical(2))

    def __post_init__(self):
        m = np.asarray(self.marks)
        if m.ndim != 1 or m.size < 1:
            raise ValueError("a marked sequence needs at least one mark")
        if not self.space.contains(m):
            raise ValueError("marks fall outside the mark space")
        if self.space.kind == "categorical":
            m = m.astype(np.int64)
        object.__setattr__(self, "marks", m)

    def __len__(self):
        return self.marks.size

    def __eq__(self, other):
        return isinstance(other, MarkedSequence) and self.space == other.space and np.array_equal(self.marks, other.marks)

    def to_record(self) -> dict:
        return {"marks": self.marks.tolist()}


@dataclass(frozen=True)
class IidProduct:
    """Directing measure ``Lebesgue x mark_law``: the marks are iid."""

    mark_law: Callable[[np.random.Generator, tuple], np.ndarray]
    space: MarkSpace


@dataclass(frozen=True)
class PeriodicField:
    """Marks are a deterministic function of position, shifted by a uniform phase.

    ``mark_rule`` receives positions reduced to ``[0, period)``. Drawing the
    phase uniformly over one full period of the rule makes the directing
    measure shift-stationary.
    """

    period: float
    mark_rule: Callable[[np.ndarray], np.ndarray]
    space: MarkSpace


DirectingMeasureSpec = Union[IidProduct, PeriodicField]


def iid_categorical(probs=(0.5, 0.5)) -> IidProduct:
    probs = np.asarray(probs, dtype=float)
    probs = probs / probs.sum()
    return IidProduct(lambda rng, shape: rng.choice(probs.size, size=shape, p=probs), MarkSpace.categorical(probs.size))


def iid_uniform() -> IidProduct:
    return IidProduct(lambda rng, shape: rng.random(shape), MarkSpace.unit_interval())


def parity_field(cell: float = 1.0) -> PeriodicField:
    """Mark ``floor(y / cell) mod 2``; the rule repeats every ``2 * cell``."""
    return PeriodicField(2.0 * cell, lambda y: (np.floor(y / cell).astype(np.int64) % 2), MarkSpace.categorical(2))


def sample_cox_marks(spec: DirectingMeasureSpec, n: int, reps: int, seed: SeedLike) -> np.ndarray:
    """``(reps, n)`` array of the first ``n`` marks of independent Cox sequences."""
    rng = as_generator(seed)
    if isinstance(spec, IidProduct):
        return np.asarray(spec.mark_law(rng, (reps, n)))
    if isinstance(spec, PeriodicField):
        e = np.cumsum(rng.standard_exponential((reps, n)), axis=1)
        x = invert_mass(ExpTilt(1.0), e)
        phase = rng.uniform(0.0, spec.period, size=(reps, 1))
        return np.asarray(spec.mark_rule(np.mod(x - phase, spec.period)))
    raise TypeError(f"unsupported directing measure {type(spec).__name__}")


def sample_cox_sequence(spec: DirectingMeasureSpec, n: int, seed: SeedLike) -> MarkedSequence:
    """First ``n`` marks, in position order, of the Cox process with tilt ``e^x``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return MarkedSequence(sample_cox_marks(spec, n, 1, seed)[0], spec.space)


def thin_sequence(u: MarkedSequence, p: float, n_out: int, seed: SeedLike = None, *, keep=None) -> MarkedSequence:
    """First ``n_out`` marks that survive independent Bernoulli-``p`` deletion."""
    if not (0.0 < p <= 1.0):
        raise DomainError(f"p must lie in (0,1], got {p}")
    if keep is None:
        need = required_length(n_out, p) if p < 1.0 else n_out
        if len(u) < need:
            raise InsufficientLength(f"length {len(u)} is below the guard {need} for n_out={n_out}, p={p}")
        keep = np.ones(len(u), dtype=bool) if p == 1.0 else as_generator(seed).random(len(u)) < p
    else:
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != u.marks.shape:
            raise ValueError("keep mask must match the sequence length")
    kept = u.marks[keep]
    if kept.size < n_out:
        raise ShortfallAfterThinning(f"{kept.size} marks survived, {n_out} requested")
    return MarkedSequence(kept[:n_out], u.space)


def exchangeability_probe(
    spec: DirectingMeasureSpec,
    reps: int,
    seed: SeedLike,
    *,
    level: float = 1e-3,
    min_reps: int = 1000,
    batch: int = 250_000,
) -> TestReport:
    """Compare ``q12 = P(U1 = U2)`` with ``q13 = P(U1 = U3)``.

    Exchangeable laws force ``q12 = q13``; the paired difference is tested
    with a normal approximation. Fewer than ``min_reps`` replicates give an
    inconclusive report.
    """
    if spec.space.kind != "categorical":
        raise DomainError("the probe needs categorical marks")
    rng = as_generator(seed)
    m12 = np.empty(reps, dtype=bool)
    m13 = np.empty(reps, dtype=bool)
    for lo in range(0, reps, batch):
        hi = min(reps, lo + batch)
        u = sample_cox_marks(spec, 3, hi - lo, rng)
        m12[lo:hi] = u[:, 0] == u[:, 1]
        m13[lo:hi] = u[:, 0] == u[:, 2]
    rep = proportion_difference_test(m12, m13, level=level, min_reps=min_reps, name="exchangeability_probe")
    rep.metadata.update(q12=rep.metadata.pop("q_x"), q13=rep.metadata.pop("q_y"), reps=reps)
    rep.seed = _seed_record(seed)
    return rep


def first_marks_code(u: MarkedSequence, k: int = 4) -> int:
    """Integer code of the first ``k`` categorical marks (base = alphabet size)."""
    base = u.space.size
    return int(np.dot(u.marks[:k], base ** np.arange(k)))


def match(i: int, j: int) -> Callable[[MarkedSequence], float]:
    return lambda u: float(u.marks[i - 1] == u.marks[j - 1])


def semigroup_pair(u: MarkedSequence, p: float, q: float, n_out: int, seed) -> MarkedSequence:
    """``Theta_p(Theta_q(u))`` with an intermediate length large enough for the outer step."""
    rng = as_generator(seed)
    mid = thin_sequence(u, q, required_length(n_out, p), rng)
    return thin_sequence(mid, p, n_out, rng)


def expected_length(n_out: int, p: float, q: float) -> int:
    """Input length for a two-step ``Theta_p o Theta_q`` with negligible shortfall."""
    return required_length(required_length(n_out, p), q)


__all__ = [
    "MarkSpace",
    "MarkedSequence",
    "IidProduct",
    "PeriodicField",
    "DirectingMeasureSpec",
    "iid_categorical",
    "iid_uniform",
    "parity_field",
    "sample_cox_marks",
    "sample_cox_sequence",
    "thin_sequence",
    "exchangeability_probe",
    "first_marks_code",
    "match",
    "semigroup_pair",
    "expected_length",
]

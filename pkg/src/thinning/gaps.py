"""Gap configurations, leader-relative thinning and the exponential-tilt gap law."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats as sps

from .errors import DomainError, IndexOverflow, InsufficientLength, ShortfallAfterThinning
from .point_process import ExpTilt, invert_mass, sample_unit_arrivals
from .seeding import SeedLike, SeedSpec, as_generator, as_seedspec


@dataclass(frozen=True, eq=False)
class GapConfiguration:
    """Nondecreasing nonnegative gaps ``W_1 <= W_2 <= ...`` measured from the leader."""

    gaps: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gaps, dtype=float)
        if g.ndim != 1:
            raise ValueError("gaps must be one-dimensional")
        if g.size and (g[0] < 0 or np.any(np.diff(g) < 0)):
            raise ValueError("gaps must be nonnegative and nondecreasing")
        if not np.all(np.isfinite(g)):
            raise ValueError("gaps must be finite")
        object.__setattr__(self, "gaps", g)

    def __len__(self):
        return self.gaps.size

    def __eq__(self, other):
        return isinstance(other, GapConfiguration) and np.array_equal(self.gaps, other.gaps)

    def gap(self, n: int) -> float:
        """``W_n`` with ``W_0 = 0``."""
        return 0.0 if n == 0 else float(self.gaps[n - 1])

    def to_record(self) -> dict:
        return {"gaps": self.gaps.tolist()}

    @classmethod
    def from_record(cls, rec: dict) -> "GapConfiguration":
        return cls(np.asarray(rec["gaps"], dtype=float))


def required_length(n_out: int, p: float) -> int:
    """Input length that makes a survivor shortfall negligible: ``ceil((n + 10 sqrt(n/p)) / p)``."""
    return int(math.ceil((n_out + 10.0 * math.sqrt(n_out / p)) / p))


def thin_gaps(w: GapConfiguration, p: float, n_out: int, seed: SeedLike = None, *, keep=None) -> GapConfiguration:
    """Keep each of the points ``W_0 = 0, W_1, ...`` with probability ``p``.

    The first survivor becomes the new leader and the next ``n_out`` survivors
    are measured from it. ``keep`` (a boolean mask over indices ``0..L``)
    replaces the Bernoulli draw.
    """
    if not (0.0 < p <= 1.0):
        raise DomainError(f"p must lie in (0,1], got {p}")
    full = np.concatenate(([0.0], w.gaps))
    if keep is None:
        # at p = 1 nothing is removed, so no margin is needed
        if p < 1.0 and full.size < required_length(n_out + 1, p):
            raise InsufficientLength(
                f"{full.size} points (leader included) cannot supply {n_out} followers at p={p}"
            )
        if p == 1.0:
            keep = np.ones(full.size, dtype=bool)
        else:
            keep = as_generator(seed).random(full.size) < p
    else:
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != full.shape:
            raise ValueError(f"keep mask must have length {full.size}")
    idx = np.flatnonzero(keep)
    if idx.size < n_out + 1:
        raise ShortfallAfterThinning(f"only {idx.size} survivors, need a leader and {n_out} followers")
    lead = full[idx[0]]
    return GapConfiguration(full[idx[1 : n_out + 1]] - lead)


def gaps_from_arrivals(arrivals, m: float) -> np.ndarray:
    e = np.asarray(arrivals, dtype=float)
    return np.log(e[1:] / e[0]) / m


def sample_gap_poisson(m: float, n: int, seed: SeedLike = None, *, arrivals=None) -> GapConfiguration:
    """Gaps ``W_k = X_{k+1} - X_1`` of PPP(m e^{mx} dx), where ``X_k = ln(E_k) / m``."""
    if not m > 0:
        raise DomainError(f"m must be positive, got {m}")
    if arrivals is None:
        arrivals = sample_unit_arrivals(n + 1, seed)
    x = invert_mass(ExpTilt(m), np.asarray(arrivals, dtype=float)[: n + 1])
    return GapConfiguration(x[1:] - x[0])


class DriftEstimate(NamedTuple):
    slope: float
    ci_low: float
    ci_high: float
    se: float
    reps: int
    slopes: np.ndarray


def leader_index_window(t_max: float, tail_prob: float = 1e-6) -> int:
    """Points needed so the leader at ``t_max`` stays in range with prob ``>= 1 - tail_prob``.

    The leader index at time t is geometric with success probability e^{-t}.
    """
    q = -math.expm1(-t_max)
    return int(math.ceil(math.log(tail_prob) / math.log(q))) if q > 0 else 1


def leader_positions(w: np.ndarray, lifetimes: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Original position ``W_{N(t)}`` of the first point still alive at each time.

    ``w`` holds ``W_0 = 0, W_1, ...``; point k is alive at t while ``lifetimes[k] > t``.
    """
    runmax = np.maximum.accumulate(lifetimes)
    idx = np.searchsorted(runmax, times, side="right")
    if idx.size and idx.max() >= w.size:
        raise IndexOverflow(f"leader left the window of {w.size} points by t={times.max()}")
    return w[idx]


def estimate_drift_velocity(
    m: float,
    t_max: float,
    n_points: Optional[int] = None,
    reps: int = 1000,
    seed: SeedSpec | int = 0,
    *,
    grid_size: int = 41,
    confidence: float = 0.99,
) -> DriftEstimate:
    """Least-squares slope of the surviving leader's position against time.

    Each replicate draws a gap configuration from the tilt ``m e^{mx}`` and iid
    unit-exponential lifetimes, records the leader position on a uniform time
    grid over [0, t_max], and fits a slope; slopes are averaged across
    replicates. The target for the tilt is ``1/m``. ``m = inf`` gives the
    all-zero gap configuration.
    """
    if not m > 0:
        raise DomainError("m must be positive")
    if reps < 2:
        raise ValueError("need at least two replicates for a confidence interval")
    seed = as_seedspec(seed)
    if n_points is None:
        n_points = leader_index_window(t_max)
    times = np.linspace(0.0, t_max, grid_size)
    tc = times - times.mean()
    denom = float(tc @ tc)
    slopes = np.empty(reps)
    for r in range(reps):
        rng = seed.child(r).generator()
        if math.isinf(m):
            w = np.zeros(n_points + 1)
        else:
            e = np.cumsum(rng.standard_exponential(n_points + 1))
            w = np.concatenate(([0.0], gaps_from_arrivals(e, m)))
        life = rng.standard_exponential(n_points + 1)
        x = leader_positions(w, life, times)
        slopes[r] = float(tc @ (x - x.mean())) / denom
    mean = float(slopes.mean())
    se = float(slopes.std(ddof=1) / math.sqrt(reps))
    half = float(sps.t.ppf(0.5 + confidence / 2.0, reps - 1)) * se
    return DriftEstimate(mean, mean - half, mean + half, se, reps, slopes)
